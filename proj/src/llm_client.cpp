#include "dfarag/llm_client.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "dfarag/common.hpp"

namespace dfarag {

using nlohmann::json;

namespace {

std::string env_or_empty(const char* name)
{
    const char* value = std::getenv(name);
    return value ? std::string(value) : std::string{};
}

std::string post_json(const LlmEndpoint& endpoint, const std::string& path, const json& body)
{
    auto url = detail::split_url(endpoint.base_url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(endpoint.timeout_seconds, 0);
    client.set_read_timeout(endpoint.timeout_seconds, 0);
    httplib::Headers headers;
    if (!endpoint.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    }
    auto res = client.Post(url.prefix + path, headers, body.dump(), "application/json");
    if (!res) {
        throw ServiceError("request to " + endpoint.base_url + path + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status / 100 != 2) {
        throw ServiceError("HTTP " + std::to_string(res->status) + " from " + endpoint.base_url + path, res->body);
    }
    return res->body;
}

}  // namespace

namespace detail {

SplitUrl split_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ValidationError("base URL needs a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
    } else {
        out.origin = url.substr(0, path_start);
        out.prefix = url.substr(path_start);
        while (!out.prefix.empty() && out.prefix.back() == '/') {
            out.prefix.pop_back();
        }
    }
    return out;
}

}  // namespace detail

LlmEndpoint LlmEndpoint::from_env()
{
    LlmEndpoint ep;
    ep.base_url = env_or_empty("DFARAG_LLM_BASE_URL");
    ep.api_key = env_or_empty("DFARAG_LLM_API_KEY");
    ep.model = env_or_empty("DFARAG_LLM_MODEL");
    if (ep.base_url.empty()) {
        throw ValidationError("DFARAG_LLM_BASE_URL is not set");
    }
    return ep;
}

std::string HttpChatClient::complete(const std::string& prompt)
{
    json body = {
        {"model", endpoint_.model},
        {"temperature", endpoint_.temperature},
        {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    auto raw = post_json(endpoint_, "/chat/completions", body);
    try {
        auto reply = json::parse(raw);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ServiceError(std::string("malformed chat completion: ") + e.what(), raw);
    }
}

std::vector<std::vector<float>> HttpEmbeddingClient::embed(const std::vector<std::string>& texts)
{
    json body = {{"model", endpoint_.model}, {"input", texts}};
    auto raw = post_json(endpoint_, "/embeddings", body);
    std::vector<std::vector<float>> out;
    try {
        auto reply = json::parse(raw);
        for (const auto& item : reply.at("data")) {
            out.push_back(item.at("embedding").get<std::vector<float>>());
        }
    } catch (const json::exception& e) {
        throw ServiceError(std::string("malformed embedding reply: ") + e.what(), raw);
    }
    if (out.size() != texts.size()) {
        throw ServiceError("embedding count mismatch", raw);
    }
    return out;
}

}  // namespace dfarag
