#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dfarag/automaton.hpp"
#include "dfarag/baselines.hpp"
#include "dfarag/corpus.hpp"
#include "dfarag/llm_client.hpp"
#include "dfarag/routing.hpp"
#include "dfarag/tagging.hpp"

namespace dfarag {

enum class Winner { candidate, competitor };
/// candidate_first: the candidate is shown as "m", the competitor as "M".
enum class PresentationOrder { candidate_first, competitor_first };

std::string_view winner_name(Winner w) noexcept;
std::string_view order_name(PresentationOrder o) noexcept;

struct Judgment {
    std::string test_id;
    Winner winner = Winner::candidate;
    std::string raw;
    PresentationOrder order = PresentationOrder::candidate_first;
};

class UnparseableVerdictError : public ServiceError {
  public:
    using ServiceError::ServiceError;
};

/// 'm' or 'M': the last character of `raw` once trailing whitespace is
/// dropped. Throws UnparseableVerdictError otherwise.
char parse_verdict(const std::string& raw);

Winner winner_from_verdict(char verdict, PresentationOrder order);

/// Pairwise judge prompt; `m_output` and `M_output` are the transcripts
/// behind the two identifiers.
std::string render_judge_prompt(const std::string& task_input, const std::string& ground_truth,
                                const std::string& m_output, const std::string& M_output);

struct JudgeRequest {
    const std::string& prompt;
    const Dialogue& ground_truth;
    const Dialogue& m_dialogue;
    const Dialogue& M_dialogue;
};

class Judge {
  public:
    virtual ~Judge() = default;
    virtual std::string name() const = 0;
    virtual std::string verdict(const JudgeRequest& request) = 0;
};

/// Word-level F1 of each output's system turns against the ground truth's.
/// Prefers the higher score when the gap exceeds `margin`; otherwise answers
/// "tie", which carries no verdict.
class ScriptedJudge final : public Judge {
  public:
    explicit ScriptedJudge(double margin = 0.0) : margin_(margin) {}
    std::string name() const override { return "scripted-f1"; }
    std::string verdict(const JudgeRequest& request) override;

  private:
    double margin_;
};

class LlmJudge final : public Judge {
  public:
    explicit LlmJudge(CompletionClient& client, std::string name = "llm") : client_(client), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    std::string verdict(const JudgeRequest& request) override { return client_.complete(request.prompt); }

  private:
    CompletionClient& client_;
    std::string name_;
};

/// Bag-of-words F1 over tokenize_words; 1.0 when both sides are empty.
double token_f1(std::string_view prediction, std::string_view reference);

/// Seeded presentation order, rendered prompt, parsed winner.
/// Throws UnparseableVerdictError (raw text attached) on a bad verdict.
Judgment judge_pair(const Dialogue& ground_truth, const Dialogue& candidate, const Dialogue& competitor, Judge& judge,
                    std::uint64_t seed, std::string test_id = {});

/// 100 * candidate wins / total. Throws UndefinedMetricError when empty.
double compute_win_rate(const std::vector<Judgment>& judgments);

/// One retrieval made for the user turn of `round` in test dialogue `test_id`.
struct RetrievalCase {
    DialogueId test_id = 0;
    int round = 0;
    std::vector<DialogueId> retrieved;
};

/// Share of retrieved exemplars whose user tags at the case's round meet the
/// test turn's user tags. Throws UndefinedMetricError when nothing was
/// retrieved.
double retrieval_precision(const std::vector<RetrievalCase>& cases, const RoundTagTable& train_tags,
                           const RoundTagTable& test_tags);

enum class Strategy { dfa, random, bm25 };
std::string_view strategy_name(Strategy s) noexcept;
Strategy parse_strategy(std::string_view text);

struct EvalConfig {
    std::size_t k = 5;
    std::uint64_t seed = 0;
    SamplingMode sampling = SamplingMode::seeded;
    Strategy candidate = Strategy::dfa;
    Strategy competitor = Strategy::random;
    /// Strategies that get a retrieval-precision figure.
    std::vector<Strategy> precision_strategies{Strategy::dfa, Strategy::random, Strategy::bm25};
};

struct EvalReport {
    std::uint64_t seed = 0;
    std::string judge;
    Strategy candidate = Strategy::dfa;
    Strategy competitor = Strategy::random;
    std::vector<Judgment> judgments;
    std::size_t candidate_wins = 0;
    std::size_t competitor_wins = 0;
    std::size_t unparseable = 0;
    /// Absent when every verdict was unparseable.
    std::optional<double> win_rate;
    std::map<std::string, double> precision;

    std::string to_json() const;
    std::string to_csv() const;
};

struct EvalInputs {
    const Automaton& automaton;
    const Corpus& train;
    const RoundTagTable& train_tags;
    const Corpus& test;
    const Tagger& tagger;
    Generator& generator;
    Judge& judge;
};

/// Teacher-forced comparison: every system turn of every test dialogue is
/// completed from its true prefix by both strategies and judged pairwise.
EvalReport run_evaluation(const EvalInputs& inputs, const EvalConfig& config);

/// Exemplar ids `strategy` picks for the last user turn of `prefix`.
/// `user_tags` holds the tags of each user turn in `prefix`, in order.
std::vector<DialogueId> select_exemplars(Strategy strategy, const Automaton& automaton, const Corpus& train,
                                         const Bm25Index& bm25, const Dialogue& prefix,
                                         const std::vector<std::vector<Tag>>& user_tags, std::size_t k,
                                         std::uint64_t seed, SamplingMode sampling);

}  // namespace dfarag
