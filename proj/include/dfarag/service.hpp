#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "dfarag/automaton.hpp"
#include "dfarag/corpus.hpp"
#include "dfarag/routing.hpp"
#include "dfarag/tagging.hpp"

namespace httplib {
class Server;
}

namespace dfarag {

struct ServiceConfig {
    /// Value of Access-Control-Allow-Origin; empty disables CORS headers.
    std::string cors_origin = "*";
    std::chrono::seconds idle_timeout{30 * 60};
    SessionOptions session_defaults;
};

/// JSON-over-HTTP front end for routing sessions and automaton inspection.
///
/// Endpoints (all under /v1):
///   POST   /sessions                   201 {"session_id", "state"}
///   GET    /sessions/{id}              session snapshot
///   POST   /sessions/{id}/utterances   {"text"} -> routing response
///   DELETE /sessions/{id}              204
///   GET    /automaton                  automaton document
///   GET    /automaton/dot              DOT text
///   GET    /states/{id}                single state
///   GET    /dialogues/{id}             corpus transcript
///   GET    /healthz                    "ok"
///
/// Status codes: 400 malformed body, 404 unknown id, 409 step already in
/// flight, 502 tagger or generator failure, 503 nothing loaded.
class Service {
  public:
    using Clock = std::chrono::steady_clock;

    explicit Service(ServiceConfig config = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Replaces the served automaton and corpus; existing sessions keep theirs.
    void load(std::shared_ptr<const Automaton> automaton, std::shared_ptr<const Corpus> corpus);
    void set_tagger(std::shared_ptr<const Tagger> tagger);
    void set_generator(std::shared_ptr<Generator> generator);
    /// Test hook for idle expiry.
    void set_clock(std::function<Clock::time_point()> now);

    /// Registers every route on `server`.
    void mount(httplib::Server& server);

    /// Binds `host:port` (port 0 picks a free one) and serves until stop().
    /// Returns false if the socket could not be bound.
    bool listen(const std::string& host, int port);
    /// Binds and serves on a background thread; returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();
    /// Asks a running listen() or start() loop to return; does not join.
    void request_stop();

    std::size_t session_count();

  private:
    struct Record {
        std::shared_ptr<Session> session;
        Clock::time_point created;
        Clock::time_point last_used;
    };

    std::shared_ptr<Session> find_session(const std::string& id);
    void purge_expired_locked(Clock::time_point now);
    std::string new_session_id();

    ServiceConfig config_;
    std::function<Clock::time_point()> now_;

    std::mutex mutex_;
    std::shared_ptr<const Automaton> automaton_;
    std::shared_ptr<const Corpus> corpus_;
    std::shared_ptr<const Tagger> tagger_;
    std::shared_ptr<Generator> generator_;
    std::map<std::string, Record> sessions_;
    std::uint64_t id_counter_ = 0;
    std::uint64_t id_salt_;

    std::unique_ptr<httplib::Server> server_;
    struct Worker;
    std::unique_ptr<Worker> worker_;
};

}  // namespace dfarag
