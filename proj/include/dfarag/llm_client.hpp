#pragma once

#include <string>
#include <vector>

namespace dfarag {

/// Text-in, text-out completion service.
class CompletionClient {
  public:
    virtual ~CompletionClient() = default;
    /// Throws ServiceError on transport failure or malformed reply.
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Maps texts to equal-length real vectors.
class EmbeddingClient {
  public:
    virtual ~EmbeddingClient() = default;
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

struct LlmEndpoint {
    std::string base_url;  ///< e.g. http://localhost:8000/v1
    std::string api_key;
    std::string model;
    double temperature = 0.0;
    int timeout_seconds = 60;

    /// Reads DFARAG_LLM_BASE_URL, DFARAG_LLM_API_KEY and DFARAG_LLM_MODEL.
    /// Throws ValidationError when the base URL is unset.
    static LlmEndpoint from_env();
};

/// OpenAI-style POST {base}/chat/completions with a single user message.
class HttpChatClient final : public CompletionClient {
  public:
    explicit HttpChatClient(LlmEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::string complete(const std::string& prompt) override;

  private:
    LlmEndpoint endpoint_;
};

/// OpenAI-style POST {base}/embeddings.
class HttpEmbeddingClient final : public EmbeddingClient {
  public:
    explicit HttpEmbeddingClient(LlmEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

  private:
    LlmEndpoint endpoint_;
};

namespace detail {

struct SplitUrl {
    std::string origin;  ///< scheme://host[:port]
    std::string prefix;  ///< path prefix without trailing '/'
};

SplitUrl split_url(const std::string& url);

}  // namespace detail

}  // namespace dfarag
