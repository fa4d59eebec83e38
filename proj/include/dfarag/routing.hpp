#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dfarag/automaton.hpp"
#include "dfarag/corpus.hpp"
#include "dfarag/llm_client.hpp"
#include "dfarag/tagging.hpp"

namespace dfarag {

struct NavigationResult {
    StateId state;
    /// Tags in the order they were consumed.
    std::vector<Tag> consumed;
    /// False iff some input tag found no transition.
    bool matched = true;
    /// Starts at the input state, ends at `state`.
    std::vector<StateId> path;
    bool eor_hop = false;
};

/// Deterministic walk over `tags` (a set; order is irrelevant). When `from`
/// has an <eor> edge into a state of `input_role` and tags are present, that
/// hop is taken first. Then, while some remaining tag has a transition, the
/// one whose target tracks the most dialogues is followed (ties: smaller
/// tag). Unmatched tags leave the walk at the last valid state.
NavigationResult navigate(const Automaton& automaton, StateId from, const std::vector<Tag>& tags,
                          Role input_role = Role::user);

/// After a user turn lands on `q`: crosses into the following system stage
/// (if built) and descends along the most-populated children to a leaf.
/// Returns `q` itself when there is no system stage to enter.
StateId advance_past_system(const Automaton& automaton, StateId q);

/// One user turn of the session walk, without retrieval or generation.
struct RouteStep {
    NavigationResult navigation;
    /// Where exemplars come from: the reached state, or `last_valid` when
    /// the walk consumed nothing and took no <eor> hop.
    StateId source;
    /// Session position once the system reply has been given.
    StateId next_current;
};

RouteStep route_turn(const Automaton& automaton, StateId current, StateId last_valid, const std::vector<Tag>& tags);

struct ExemplarSet {
    std::vector<DialogueId> dialogue_ids;
    StateId source_state;
};

enum class SamplingMode {
    seeded,      ///< uniform without replacement
    lowest_ids,  ///< the k smallest ids; golden tests
};

/// Up to k dialogues tracked by `state` (and present in `corpus`), ascending.
/// When more than k qualify they are sampled per `mode`. A state with no
/// usable dialogues falls back to the nearest earlier state on `path`.
ExemplarSet retrieve_exemplars(const Automaton& automaton, StateId state, const Corpus& corpus, std::size_t k,
                               std::uint64_t seed, SamplingMode mode = SamplingMode::seeded,
                               const std::vector<StateId>* path = nullptr);

struct PromptBundle {
    std::string text;
    std::vector<std::string> exemplar_transcripts;
    std::string partial_transcript;
};

/// "<round> USER: ..." / "<round> SYSTEM: ..." lines.
std::string render_transcript(const Dialogue& dialogue);

/// Generation prompt with the exemplars in list order followed by the
/// dialogue to complete. Throws NotFoundError for ids missing from `corpus`.
PromptBundle compile_prompt(const ExemplarSet& exemplars, const Dialogue& partial, const Corpus& corpus);

struct GenerationRequest {
    const PromptBundle& prompt;
    const NavigationResult& navigation;
    const ExemplarSet& exemplars;
    const Dialogue& partial;
    const Corpus& corpus;
};

class Generator {
  public:
    virtual ~Generator() = default;
    /// Throws GeneratorError (or another ServiceError) on failure.
    virtual std::string generate(const GenerationRequest& request) = 0;
};

/// Fixed responses keyed by state id, then by consumed-tag path
/// ("greet/battery"), then a default. JSON:
/// {"by_state": {"2": "..."}, "by_path": {"greet/battery": "..."}, "default": "..."}
class CannedGenerator final : public Generator {
  public:
    static CannedGenerator from_json(const std::string& text);
    static CannedGenerator load(const std::filesystem::path& path);

    void set_state_response(StateId state, std::string text) { by_state_[state.value] = std::move(text); }
    void set_path_response(std::string path, std::string text) { by_path_[std::move(path)] = std::move(text); }
    void set_default(std::string text) { default_ = std::move(text); }

    std::string generate(const GenerationRequest& request) override;

  private:
    std::map<std::uint32_t, std::string> by_state_;
    std::map<std::string, std::string> by_path_;
    std::optional<std::string> default_;
};

/// Replays the system reply of the first exemplar at the round being
/// completed (or its last system reply if shorter). Offline stand-in for an
/// LLM; falls back to `fallback` when there is no exemplar reply.
class ExemplarReplayGenerator final : public Generator {
  public:
    explicit ExemplarReplayGenerator(std::string fallback = "Thank you for reaching out.")
        : fallback_(std::move(fallback))
    {}
    std::string generate(const GenerationRequest& request) override;

  private:
    std::string fallback_;
};

/// Sends the compiled prompt to a completion client and extracts the
/// system line for the round being completed.
class LlmGenerator final : public Generator {
  public:
    explicit LlmGenerator(CompletionClient& client) : client_(client) {}
    std::string generate(const GenerationRequest& request) override;

  private:
    CompletionClient& client_;
};

/// Pulls "<round> SYSTEM: text" out of a completion; the trimmed completion
/// when no such line exists.
std::string extract_system_reply(const std::string& completion, int round);

struct SessionOptions {
    std::uint64_t seed = 0;
    std::size_t exemplar_k = 5;
    SamplingMode sampling = SamplingMode::seeded;
};

struct SessionTurn {
    Role role = Role::user;
    std::string text;
    std::vector<Tag> tags;
    StateId state_after;
};

struct SessionState {
    StateId current;
    StateId last_valid;
    std::vector<SessionTurn> history;
};

class SessionBusyError : public Error {
  public:
    using Error::Error;
};

/// One live conversation. At most one chat_step runs at a time.
class Session {
  public:
    Session(std::string id, std::shared_ptr<const Automaton> automaton, std::shared_ptr<const Corpus> corpus,
            SessionOptions options = {});

    const std::string& id() const noexcept { return id_; }
    const SessionOptions& options() const noexcept { return options_; }
    const Automaton& automaton() const noexcept { return *automaton_; }
    const Corpus& corpus() const noexcept { return *corpus_; }

    SessionState snapshot() const;
    /// Dialogue so far (user and generated system turns).
    Dialogue partial_dialogue() const;

  private:
    friend struct SessionAccess;

    std::string id_;
    std::shared_ptr<const Automaton> automaton_;
    std::shared_ptr<const Corpus> corpus_;
    SessionOptions options_;

    mutable std::mutex state_mutex_;
    std::mutex step_mutex_;
    SessionState state_;
};

struct StepResult {
    std::string response;
    std::vector<Tag> tags;
    NavigationResult navigation;
    ExemplarSet exemplars;
    PromptBundle prompt;
};

/// Tag, navigate, retrieve, compile, generate, then commit both turns.
/// Throws SessionBusyError if another step is in flight; tagger and
/// generator failures propagate and leave the session unchanged.
StepResult chat_step(Session& session, const std::string& user_text, const Tagger& tagger, Generator& generator);

}  // namespace dfarag
