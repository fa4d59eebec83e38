#include "dfarag/service.hpp"

#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dfarag/persistence.hpp"

namespace dfarag {

namespace {

using json = nlohmann::ordered_json;

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& raw = {})
{
    json body{{"error", message}};
    if (!raw.empty()) {
        body["raw"] = raw;
    }
    send_json(res, status, body);
}

std::optional<std::uint64_t> parse_id(const std::string& text)
{
    if (text.empty() || text.size() > 19 || text.find_first_not_of("0123456789") != std::string::npos) {
        return std::nullopt;
    }
    return std::stoull(text);
}

json tags_json(const std::vector<Tag>& tags)
{
    json out = json::array();
    for (const auto& t : tags) {
        out.push_back(t.str());
    }
    return out;
}

json state_json(const State& s)
{
    json transitions = json::array();
    for (const auto& t : s.transitions) {
        transitions.push_back({{"tag", t.tag.str()}, {"target", t.target.value}});
    }
    return json{{"id", s.id.value},
                {"round", s.round},
                {"role", std::string(role_name(s.role))},
                {"accept", s.accept},
                {"dialogue_ids", json(std::vector<DialogueId>(s.dialogue_ids.begin(), s.dialogue_ids.end()))},
                {"transitions", transitions}};
}

json session_json(const Session& session)
{
    auto snap = session.snapshot();
    json history = json::array();
    for (const auto& turn : snap.history) {
        history.push_back({{"role", std::string(role_name(turn.role))},
                           {"text", turn.text},
                           {"tags", tags_json(turn.tags)},
                           {"state", turn.state_after.value}});
    }
    return json{{"session_id", session.id()},
                {"current", snap.current.value},
                {"last_valid", snap.last_valid.value},
                {"history", history}};
}

json step_json(const StepResult& r)
{
    json path = json::array();
    for (auto q : r.navigation.path) {
        path.push_back(q.value);
    }
    return json{{"tags", tags_json(r.tags)},
                {"consumed", tags_json(r.navigation.consumed)},
                {"path", path},
                {"state", r.navigation.state.value},
                {"matched", r.navigation.matched},
                {"source_state", r.exemplars.source_state.value},
                {"exemplar_ids", json(r.exemplars.dialogue_ids)},
                {"response", r.response}};
}

}  // namespace

struct Service::Worker {
    std::thread thread;
};

Service::Service(ServiceConfig config)
    : config_(std::move(config)), now_([] { return Clock::now(); }), id_salt_(std::random_device{}())
{
    id_salt_ = (id_salt_ << 32) ^ std::random_device{}();
}

Service::~Service()
{
    stop();
}

void Service::load(std::shared_ptr<const Automaton> automaton, std::shared_ptr<const Corpus> corpus)
{
    std::lock_guard lock(mutex_);
    automaton_ = std::move(automaton);
    corpus_ = std::move(corpus);
}

void Service::set_tagger(std::shared_ptr<const Tagger> tagger)
{
    std::lock_guard lock(mutex_);
    tagger_ = std::move(tagger);
}

void Service::set_generator(std::shared_ptr<Generator> generator)
{
    std::lock_guard lock(mutex_);
    generator_ = std::move(generator);
}

void Service::set_clock(std::function<Clock::time_point()> now)
{
    std::lock_guard lock(mutex_);
    now_ = std::move(now);
}

std::size_t Service::session_count()
{
    std::lock_guard lock(mutex_);
    purge_expired_locked(now_());
    return sessions_.size();
}

void Service::purge_expired_locked(Clock::time_point now)
{
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now - it->second.last_used >= config_.idle_timeout) {
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
}

std::shared_ptr<Session> Service::find_session(const std::string& id)
{
    std::lock_guard lock(mutex_);
    const auto now = now_();
    purge_expired_locked(now);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        return nullptr;
    }
    it->second.last_used = now;
    return it->second.session;
}

std::string Service::new_session_id()
{
    std::uint64_t v = mix_seed(id_salt_, ++id_counter_);
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[v & 0xF];
        v >>= 4;
    }
    return out;
}

void Service::mount(httplib::Server& server)
{
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
        if (!config_.cors_origin.empty()) {
            res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        }
    });
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send_error(res, 500, what);
    });

    server.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.status = 200;
        res.set_content("ok", "text/plain");
    });

    server.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        SessionOptions options = config_.session_defaults;
        if (!req.body.empty()) {
            auto body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) {
                return send_error(res, 400, "request body must be a JSON object");
            }
            try {
                if (body.contains("seed")) {
                    options.seed = body.at("seed").get<std::uint64_t>();
                }
                if (body.contains("exemplar_k")) {
                    options.exemplar_k = body.at("exemplar_k").get<std::size_t>();
                }
                if (body.contains("deterministic") && body.at("deterministic").get<bool>()) {
                    options.sampling = SamplingMode::lowest_ids;
                }
            } catch (const json::exception& e) {
                return send_error(res, 400, e.what());
            }
            if (options.exemplar_k == 0) {
                return send_error(res, 400, "exemplar_k must be at least 1");
            }
        }
        std::lock_guard lock(mutex_);
        if (!automaton_ || !corpus_) {
            return send_error(res, 503, "no automaton loaded");
        }
        const auto now = now_();
        purge_expired_locked(now);
        auto id = new_session_id();
        auto session = std::make_shared<Session>(id, automaton_, corpus_, options);
        sessions_.emplace(id, Record{session, now, now});
        send_json(res, 201, json{{"session_id", id}, {"state", session->snapshot().current.value}});
    });

    server.Get(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto session = find_session(req.matches[1].str());
        if (!session) {
            return send_error(res, 404, "unknown session");
        }
        send_json(res, 200, session_json(*session));
    });

    server.Delete(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mutex_);
        purge_expired_locked(now_());
        if (sessions_.erase(req.matches[1].str()) == 0) {
            return send_error(res, 404, "unknown session");
        }
        res.status = 204;
    });

    server.Post(R"(/v1/sessions/([^/]+)/utterances)", [this](const httplib::Request& req, httplib::Response& res) {
        auto session = find_session(req.matches[1].str());
        if (!session) {
            return send_error(res, 404, "unknown session");
        }
        auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body.at("text").is_string()) {
            return send_error(res, 400, "body must be {\"text\": string}");
        }
        std::shared_ptr<const Tagger> tagger;
        std::shared_ptr<Generator> generator;
        {
            std::lock_guard lock(mutex_);
            tagger = tagger_;
            generator = generator_;
        }
        if (!tagger || !generator) {
            return send_error(res, 503, "no tagger or generator configured");
        }
        try {
            auto result = chat_step(*session, body.at("text").get<std::string>(), *tagger, *generator);
            send_json(res, 200, step_json(result));
        } catch (const SessionBusyError& e) {
            send_error(res, 409, e.what());
        } catch (const ServiceError& e) {
            send_error(res, 502, e.what(), e.raw());
        }
    });

    server.Get("/v1/automaton", [this](const httplib::Request&, httplib::Response& res) {
        std::shared_ptr<const Automaton> a;
        {
            std::lock_guard lock(mutex_);
            a = automaton_;
        }
        if (!a) {
            return send_error(res, 503, "no automaton loaded");
        }
        res.status = 200;
        res.set_content(encode_automaton(*a), "application/json");
    });

    server.Get("/v1/automaton/dot", [this](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<const Automaton> a;
        {
            std::lock_guard lock(mutex_);
            a = automaton_;
        }
        if (!a) {
            return send_error(res, 503, "no automaton loaded");
        }
        DotOptions options;
        for (const auto& [name, field] : {std::pair{"max_depth", &options.max_depth},
                                          std::pair{"min_dialogues", &options.min_dialogues}}) {
            if (req.has_param(name)) {
                auto v = parse_id(req.get_param_value(name));
                if (!v) {
                    return send_error(res, 400, std::string(name) + " must be a non-negative integer");
                }
                *field = static_cast<std::size_t>(*v);
            }
        }
        res.status = 200;
        res.set_content(export_dot(*a, options), "text/vnd.graphviz");
    });

    server.Get(R"(/v1/states/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<const Automaton> a;
        {
            std::lock_guard lock(mutex_);
            a = automaton_;
        }
        if (!a) {
            return send_error(res, 503, "no automaton loaded");
        }
        auto id = parse_id(req.matches[1].str());
        if (!id || *id >= a->size()) {
            return send_error(res, 404, "unknown state");
        }
        send_json(res, 200, state_json(a->state(StateId{static_cast<std::uint32_t>(*id)})));
    });

    server.Get(R"(/v1/dialogues/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::shared_ptr<const Corpus> c;
        {
            std::lock_guard lock(mutex_);
            c = corpus_;
        }
        if (!c) {
            return send_error(res, 503, "no corpus loaded");
        }
        auto id = parse_id(req.matches[1].str());
        const Dialogue* d = id ? c->find(static_cast<DialogueId>(*id)) : nullptr;
        if (d == nullptr) {
            return send_error(res, 404, "unknown dialogue");
        }
        json turns = json::array();
        for (const auto& u : d->utterances) {
            turns.push_back({{"round", u.round}, {"role", std::string(role_name(u.role))}, {"text", u.text}});
        }
        send_json(res, 200, json{{"id", d->id}, {"turns", turns}, {"transcript", render_transcript(*d)}});
    });
}

bool Service::listen(const std::string& host, int port)
{
    server_ = std::make_unique<httplib::Server>();
    mount(*server_);
    return server_->listen(host, port);
}

int Service::start(const std::string& host, int port)
{
    stop();
    server_ = std::make_unique<httplib::Server>();
    mount(*server_);
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        server_.reset();
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    worker_ = std::make_unique<Worker>();
    worker_->thread = std::thread([srv = server_.get()] { srv->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::request_stop()
{
    if (server_) {
        server_->stop();
    }
}

void Service::stop()
{
    if (server_) {
        server_->stop();
    }
    if (worker_ && worker_->thread.joinable()) {
        worker_->thread.join();
    }
    worker_.reset();
    server_.reset();
}

}  // namespace dfarag
