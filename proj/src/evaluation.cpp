#include "dfarag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "dfarag/tag.hpp"

namespace dfarag {

namespace {

// Python str.format conventions: {{ and }} are literal braces.
const char* const kJudgeTemplate = R"JUDGE_END(I'll provide you with task prompts given to these models and their corresponding outputs. 
    Your task is to assess these responses, and select the model that produces the output that is most smooth and consistent with the ground truth dialogue. 
    Please note that it is very important for model to provide response in a **similar style and content**.
    
    ## Instruction
    
    {{
        "instruction": """Please act as a helpful customer service agent and complete the following dialogue: """,
        "input": 
        """
            {task_input}
        """,
        "ground truth answer": """
            {raw_diag}
        """
    """
    }}
    
    ## Model Outputs
    
    Here are the unordered outputs from the models. Each output is associated with a specific model, identified by a unique model identifier.
    
    {{
        {{
            "model_identifier": "m",
            "output": """
    {pred_cmp_diag}
            """
        }},
        {{
            "model_identifier": "M",
            "output": """
    {pred_diag}
            """
        }}
    }}
    
    ## Task
    
    Evaluate the models based on the quality and relevance of their outputs, and select the model that generated the best output. 
    Answer by first providing a concise explanation and then end your answer by providing the model identifier of the best output. 
    We will use the last character of your output `output[-1]` as the name of the best model, so make sure you finish with the token of the model identifiers and nothing else: `m` or `M` (no quotes, no dots, no backticks, no new lines, ...). 
    For example:
    
    ### Concise explanation
    ...some text...
    
    ### Which is best, m or M?
    M
    
    Now is your turn.
    
    ## Your answer: "Concise explanation" followed by "Which is best, m or M?"
)JUDGE_END";

std::string format_template(const std::string& tmpl, const std::map<std::string, std::string>& fields)
{
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if ((c == '{' || c == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == c) {
            out.push_back(c);
            ++i;
            continue;
        }
        if (c == '{') {
            auto close = tmpl.find('}', i);
            auto it = fields.find(tmpl.substr(i + 1, close - i - 1));
            if (close == std::string::npos || it == fields.end()) {
                throw std::logic_error("judge template: unknown field");
            }
            out += it->second;
            i = close;
            continue;
        }
        out.push_back(c);
    }
    return out;
}

std::string system_text(const Dialogue& d)
{
    std::string out;
    for (const auto& u : d.utterances) {
        if (u.role == Role::system) {
            if (!out.empty()) {
                out.push_back(' ');
            }
            out += u.text;
        }
    }
    return out;
}

std::string format_score(double v)
{
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(4) << v;
    return ss.str();
}

}  // namespace

std::string_view winner_name(Winner w) noexcept
{
    return w == Winner::candidate ? "candidate" : "competitor";
}

std::string_view order_name(PresentationOrder o) noexcept
{
    return o == PresentationOrder::candidate_first ? "candidate-first" : "competitor-first";
}

char parse_verdict(const std::string& raw)
{
    auto end = raw.find_last_not_of(" \t\r\n");
    if (end != std::string::npos && (raw[end] == 'm' || raw[end] == 'M')) {
        return raw[end];
    }
    throw UnparseableVerdictError("judge output does not end in 'm' or 'M'", raw);
}

Winner winner_from_verdict(char verdict, PresentationOrder order)
{
    const bool m_is_candidate = order == PresentationOrder::candidate_first;
    if (verdict == 'm') {
        return m_is_candidate ? Winner::candidate : Winner::competitor;
    }
    if (verdict == 'M') {
        return m_is_candidate ? Winner::competitor : Winner::candidate;
    }
    throw UnparseableVerdictError("verdict must be 'm' or 'M'", std::string(1, verdict));
}

std::string render_judge_prompt(const std::string& task_input, const std::string& ground_truth,
                                const std::string& m_output, const std::string& M_output)
{
    return format_template(kJudgeTemplate, {{"task_input", task_input},
                                            {"raw_diag", ground_truth},
                                            {"pred_cmp_diag", m_output},
                                            {"pred_diag", M_output}});
}

double token_f1(std::string_view prediction, std::string_view reference)
{
    auto pred = tokenize_words(prediction);
    auto ref = tokenize_words(reference);
    if (pred.empty() && ref.empty()) {
        return 1.0;
    }
    if (pred.empty() || ref.empty()) {
        return 0.0;
    }
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& w : ref) {
        ++counts[w];
    }
    std::size_t common = 0;
    for (const auto& w : pred) {
        if (auto it = counts.find(w); it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(common) / static_cast<double>(pred.size());
    const double r = static_cast<double>(common) / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

std::string ScriptedJudge::verdict(const JudgeRequest& request)
{
    const auto truth = system_text(request.ground_truth);
    const double m = token_f1(system_text(request.m_dialogue), truth);
    const double M = token_f1(system_text(request.M_dialogue), truth);
    std::string out = "### Concise explanation\ntoken F1 against the ground truth: m=" + format_score(m) +
                      ", M=" + format_score(M) + "\n\n### Which is best, m or M?\n";
    if (m > M + margin_) {
        out += "m";
    } else if (M > m + margin_) {
        out += "M";
    } else {
        out += "tie";
    }
    return out;
}

Judgment judge_pair(const Dialogue& ground_truth, const Dialogue& candidate, const Dialogue& competitor, Judge& judge,
                    std::uint64_t seed, std::string test_id)
{
    Rng rng(seed);
    const auto order = rng.below(2) == 0 ? PresentationOrder::candidate_first : PresentationOrder::competitor_first;
    const Dialogue& m = order == PresentationOrder::candidate_first ? candidate : competitor;
    const Dialogue& M = order == PresentationOrder::candidate_first ? competitor : candidate;

    Dialogue task;
    for (const auto& u : ground_truth.utterances) {
        if (u.role == Role::user) {
            task.utterances.push_back(u);
        }
    }
    const auto prompt = render_judge_prompt(render_transcript(task), render_transcript(ground_truth),
                                            render_transcript(m), render_transcript(M));
    auto raw = judge.verdict(JudgeRequest{prompt, ground_truth, m, M});
    const char verdict = parse_verdict(raw);
    return Judgment{std::move(test_id), winner_from_verdict(verdict, order), std::move(raw), order};
}

double compute_win_rate(const std::vector<Judgment>& judgments)
{
    if (judgments.empty()) {
        throw UndefinedMetricError("win rate over zero judgments");
    }
    const auto wins = std::count_if(judgments.begin(), judgments.end(),
                                    [](const Judgment& j) { return j.winner == Winner::candidate; });
    return 100.0 * static_cast<double>(wins) / static_cast<double>(judgments.size());
}

double retrieval_precision(const std::vector<RetrievalCase>& cases, const RoundTagTable& train_tags,
                           const RoundTagTable& test_tags)
{
    std::size_t total = 0;
    std::size_t hits = 0;
    for (const auto& c : cases) {
        const auto* query = test_tags.tags(c.round, Role::user, c.test_id);
        for (auto id : c.retrieved) {
            ++total;
            const auto* tags = train_tags.tags(c.round, Role::user, id);
            if (query == nullptr || tags == nullptr) {
                continue;
            }
            const bool shared = std::any_of(tags->begin(), tags->end(), [&](const Tag& t) {
                return std::find(query->begin(), query->end(), t) != query->end();
            });
            hits += shared ? 1 : 0;
        }
    }
    if (total == 0) {
        throw UndefinedMetricError("retrieval precision over zero retrieved exemplars");
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

std::string_view strategy_name(Strategy s) noexcept
{
    switch (s) {
    case Strategy::dfa: return "dfa";
    case Strategy::random: return "random";
    case Strategy::bm25: return "bm25";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view text)
{
    const auto t = to_lower_ascii(text);
    if (t == "dfa") {
        return Strategy::dfa;
    }
    if (t == "random") {
        return Strategy::random;
    }
    if (t == "bm25") {
        return Strategy::bm25;
    }
    if (t == "embedding") {
        throw UnsupportedStrategyError("embedding retrieval is not available for evaluation");
    }
    throw ValidationError("unknown strategy: " + std::string(text));
}

namespace {

struct DfaTrace {
    RouteStep last;
    ExemplarSet exemplars;
};

DfaTrace trace_dfa(const Automaton& automaton, const Corpus& train, const std::vector<std::vector<Tag>>& user_tags,
                   std::size_t k, std::uint64_t seed, SamplingMode sampling)
{
    StateId current = automaton.start();
    StateId last_valid = automaton.start();
    DfaTrace trace;
    for (const auto& tags : user_tags) {
        trace.last = route_turn(automaton, current, last_valid, tags);
        current = trace.last.next_current;
        last_valid = trace.last.source;
    }
    trace.exemplars =
        retrieve_exemplars(automaton, trace.last.source, train, k, seed, sampling, &trace.last.navigation.path);
    return trace;
}

}  // namespace

std::vector<DialogueId> select_exemplars(Strategy strategy, const Automaton& automaton, const Corpus& train,
                                         const Bm25Index& bm25, const Dialogue& prefix,
                                         const std::vector<std::vector<Tag>>& user_tags, std::size_t k,
                                         std::uint64_t seed, SamplingMode sampling)
{
    switch (strategy) {
    case Strategy::dfa:
        return trace_dfa(automaton, train, user_tags, k, seed, sampling).exemplars.dialogue_ids;
    case Strategy::random:
        return retrieve_random(train, k, seed);
    case Strategy::bm25: {
        std::vector<DialogueId> ids;
        for (const auto& [id, score] : bm25.retrieve(query_text(prefix), k)) {
            ids.push_back(id);
        }
        return ids;
    }
    }
    throw ValidationError("unknown strategy");
}

EvalReport run_evaluation(const EvalInputs& in, const EvalConfig& config)
{
    EvalReport report;
    report.seed = config.seed;
    report.judge = in.judge.name();
    report.candidate = config.candidate;
    report.competitor = config.competitor;

    const Bm25Index bm25(in.train);
    const auto test_tags = tag_corpus(in.test, in.tagger, {}, Role::user).table;
    std::map<Strategy, std::vector<RetrievalCase>> cases;

    std::uint64_t case_index = 0;
    for (const auto& d : in.test.dialogues()) {
        std::vector<std::vector<Tag>> user_tags;
        for (std::size_t i = 0; i < d.utterances.size(); ++i) {
            const auto& u = d.utterances[i];
            if (u.role == Role::user) {
                const auto* tags = test_tags.tags(u.round, Role::user, d.id);
                user_tags.push_back(tags != nullptr ? *tags : std::vector<Tag>{});
                continue;
            }
            if (i == 0 || d.utterances[i - 1].role != Role::user) {
                continue;
            }
            const auto seed = mix_seed(config.seed, case_index++);
            Dialogue prefix{d.id, {d.utterances.begin(), d.utterances.begin() + static_cast<std::ptrdiff_t>(i)}};
            Dialogue truth{d.id, {d.utterances.begin(), d.utterances.begin() + static_cast<std::ptrdiff_t>(i) + 1}};

            auto pick = [&](Strategy s) {
                return select_exemplars(s, in.automaton, in.train, bm25, prefix, user_tags, config.k,
                                        mix_seed(seed, 1 + static_cast<std::uint64_t>(s)), config.sampling);
            };
            for (auto s : config.precision_strategies) {
                cases[s].push_back(RetrievalCase{d.id, u.round, pick(s)});
            }

            const auto route =
                trace_dfa(in.automaton, in.train, user_tags, config.k, mix_seed(seed, 1), config.sampling).last;
            auto complete = [&](Strategy s) {
                ExemplarSet exemplars{pick(s), route.source};
                auto prompt = compile_prompt(exemplars, prefix, in.train);
                auto reply = in.generator.generate(
                    GenerationRequest{prompt, route.navigation, exemplars, prefix, in.train});
                Dialogue out = prefix;
                out.utterances.push_back(Utterance{Role::system, reply, u.round, false});
                return out;
            };
            const auto candidate = complete(config.candidate);
            const auto competitor = complete(config.competitor);
            const auto test_id = std::to_string(d.id) + ":" + std::to_string(u.round);
            try {
                auto j = judge_pair(truth, candidate, competitor, in.judge, mix_seed(seed, 100), test_id);
                (j.winner == Winner::candidate ? report.candidate_wins : report.competitor_wins) += 1;
                report.judgments.push_back(std::move(j));
            } catch (const UnparseableVerdictError&) {
                ++report.unparseable;
            }
        }
    }

    if (!report.judgments.empty()) {
        report.win_rate = compute_win_rate(report.judgments);
    }
    for (const auto& [s, list] : cases) {
        try {
            report.precision[std::string(strategy_name(s))] = retrieval_precision(list, in.train_tags, test_tags);
        } catch (const UndefinedMetricError&) {
            // No retrievals for this strategy; leave it out of the report.
        }
    }
    return report;
}

std::string EvalReport::to_json() const
{
    nlohmann::ordered_json doc;
    doc["seed"] = seed;
    doc["judge"] = judge;
    doc["candidate"] = std::string(strategy_name(candidate));
    doc["competitor"] = std::string(strategy_name(competitor));
    doc["win_rate"] = win_rate ? nlohmann::ordered_json(*win_rate) : nlohmann::ordered_json(nullptr);
    doc["counts"] = {{"candidate", candidate_wins}, {"competitor", competitor_wins}, {"unparseable", unparseable}};
    doc["retrieval_precision"] = nlohmann::ordered_json::object();
    for (const auto& [name, value] : precision) {
        doc["retrieval_precision"][name] = value;
    }
    doc["judgments"] = nlohmann::ordered_json::array();
    for (const auto& j : judgments) {
        doc["judgments"].push_back({{"test_id", j.test_id},
                                    {"winner", std::string(winner_name(j.winner))},
                                    {"order", std::string(order_name(j.order))},
                                    {"raw", j.raw}});
    }
    return doc.dump(2) + "\n";
}

std::string EvalReport::to_csv() const
{
    std::ostringstream out;
    out << "metric,value\n";
    out << "win_rate," << (win_rate ? format_score(*win_rate) : std::string()) << "\n";
    out << "candidate_wins," << candidate_wins << "\n";
    out << "competitor_wins," << competitor_wins << "\n";
    out << "unparseable," << unparseable << "\n";
    for (const auto& [name, value] : precision) {
        out << "precision_" << name << "," << format_score(value) << "\n";
    }
    return out.str();
}

}  // namespace dfarag
