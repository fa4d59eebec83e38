#include "dfarag/routing.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dfarag {

namespace {

const char* const kGenerationPrompt = R"(# Task Description
You are a helpful service agent. Please help me fill in the system response in a dialogue.
Please note that key information is encoded in the dialogue.

The dialogue is with the format:

[ID] [USER/SYSTEM]: [UTTERANCE]

Here is a list of related example dialogues you can use for reference.

{examples}

# Remarks:

1. Please directly generate the completed dialogue according to the format in the example.
2. (**IMPORTANT**) Please make sure the generated utterance ID is consistent with the original input!
)";

std::size_t population(const Automaton& a, StateId q)
{
    return a.state(q).dialogue_ids.size();
}

int next_system_round(const Dialogue& partial)
{
    for (auto it = partial.utterances.rbegin(); it != partial.utterances.rend(); ++it) {
        if (it->role == Role::user) {
            return it->round;
        }
    }
    return partial.utterances.empty() ? 0 : partial.utterances.back().round + 1;
}

}  // namespace

NavigationResult navigate(const Automaton& automaton, StateId from, const std::vector<Tag>& tags, Role input_role)
{
    NavigationResult result;
    StateId cur = from;
    automaton.state(cur);
    result.path.push_back(cur);

    std::set<Tag> remaining;
    for (const auto& t : tags) {
        if (t != end_of_round_tag()) {
            remaining.insert(t);
        }
    }
    if (!remaining.empty()) {
        if (auto hop = eor_target(automaton, cur); hop && automaton.state(*hop).role == input_role) {
            cur = *hop;
            result.path.push_back(cur);
            result.eor_hop = true;
        }
    }
    while (!remaining.empty()) {
        const Tag* best = nullptr;
        StateId best_target{};
        std::size_t best_pop = 0;
        for (const auto& t : remaining) {
            auto target = step(automaton, cur, t);
            if (!target) {
                continue;
            }
            auto pop = population(automaton, *target);
            if (best == nullptr || pop > best_pop) {
                best = &t;
                best_target = *target;
                best_pop = pop;
            }
        }
        if (best == nullptr) {
            break;
        }
        result.consumed.push_back(*best);
        result.path.push_back(best_target);
        cur = best_target;
        remaining.erase(*best);
    }
    result.state = cur;
    result.matched = remaining.empty();
    return result;
}

StateId advance_past_system(const Automaton& automaton, StateId q)
{
    auto hop = eor_target(automaton, q);
    if (!hop || automaton.state(*hop).role != Role::system) {
        return q;
    }
    StateId cur = *hop;
    // Merged automata may contain cycles.
    std::set<StateId> seen{cur};
    for (;;) {
        const Transition* best = nullptr;
        std::size_t best_pop = 0;
        for (const auto& t : automaton.state(cur).transitions) {
            if (t.tag == end_of_round_tag()) {
                continue;
            }
            auto pop = population(automaton, t.target);
            if (best == nullptr || pop > best_pop || (pop == best_pop && t.tag < best->tag)) {
                best = &t;
                best_pop = pop;
            }
        }
        if (best == nullptr || !seen.insert(best->target).second) {
            return cur;
        }
        cur = best->target;
    }
}

RouteStep route_turn(const Automaton& automaton, StateId current, StateId last_valid, const std::vector<Tag>& tags)
{
    RouteStep out;
    out.navigation = navigate(automaton, current, tags, Role::user);
    const auto& nav = out.navigation;
    automaton.state(last_valid);
    out.source = (!nav.matched && nav.consumed.empty() && !nav.eor_hop) ? last_valid : nav.state;
    out.next_current = advance_past_system(automaton, nav.state);
    return out;
}

ExemplarSet retrieve_exemplars(const Automaton& automaton, StateId state, const Corpus& corpus, std::size_t k,
                               std::uint64_t seed, SamplingMode mode, const std::vector<StateId>* path)
{
    if (k == 0) {
        throw std::invalid_argument("retrieve_exemplars: k must be at least 1");
    }
    auto usable = [&](StateId q) {
        std::vector<DialogueId> ids;
        for (auto id : automaton.state(q).dialogue_ids) {
            if (corpus.find(id) != nullptr) {
                ids.push_back(id);
            }
        }
        return ids;
    };

    StateId source = state;
    auto ids = usable(state);
    if (ids.empty() && path != nullptr) {
        auto it = std::find(path->rbegin(), path->rend(), state);
        for (; it != path->rend() && ids.empty(); ++it) {
            source = *it;
            ids = usable(source);
        }
    }
    if (ids.empty() && source != automaton.start()) {
        source = automaton.start();
        ids = usable(source);
    }

    ExemplarSet out{{}, source};
    if (ids.size() <= k || mode == SamplingMode::lowest_ids) {
        ids.resize(std::min(ids.size(), k));
        out.dialogue_ids = std::move(ids);
        return out;
    }
    Rng rng(seed);
    for (auto i : rng.sample_indices(ids.size(), k)) {
        out.dialogue_ids.push_back(ids[i]);
    }
    std::sort(out.dialogue_ids.begin(), out.dialogue_ids.end());
    return out;
}

std::string render_transcript(const Dialogue& dialogue)
{
    std::string out;
    for (const auto& u : dialogue.utterances) {
        out += std::to_string(u.round);
        out += u.role == Role::system ? " SYSTEM: " : " USER: ";
        out += u.text;
        out += '\n';
    }
    return out;
}

PromptBundle compile_prompt(const ExemplarSet& exemplars, const Dialogue& partial, const Corpus& corpus)
{
    PromptBundle bundle;
    std::string examples;
    for (auto id : exemplars.dialogue_ids) {
        auto transcript = render_transcript(corpus.at(id));
        if (!examples.empty()) {
            examples += '\n';
        }
        examples += transcript;
        bundle.exemplar_transcripts.push_back(std::move(transcript));
    }
    if (!examples.empty() && examples.back() == '\n') {
        examples.pop_back();
    }
    bundle.partial_transcript = render_transcript(partial);

    std::string text = kGenerationPrompt;
    auto slot = text.find("{examples}");
    text.replace(slot, std::string("{examples}").size(), examples);
    text += "\n# Dialogue to complete\n\n";
    text += bundle.partial_transcript;
    bundle.text = std::move(text);
    return bundle;
}

CannedGenerator CannedGenerator::from_json(const std::string& text)
{
    CannedGenerator gen;
    try {
        auto doc = nlohmann::json::parse(text);
        if (doc.contains("by_state")) {
            for (const auto& [key, value] : doc.at("by_state").items()) {
                gen.by_state_[static_cast<std::uint32_t>(std::stoul(key))] = value.get<std::string>();
            }
        }
        if (doc.contains("by_path")) {
            for (const auto& [key, value] : doc.at("by_path").items()) {
                gen.by_path_[key] = value.get<std::string>();
            }
        }
        if (doc.contains("default")) {
            gen.default_ = doc.at("default").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("canned generator fixture: ") + e.what(), 0);
    } catch (const std::logic_error& e) {
        throw ParseError(std::string("canned generator fixture: bad state id: ") + e.what(), 0);
    }
    return gen;
}

CannedGenerator CannedGenerator::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string CannedGenerator::generate(const GenerationRequest& request)
{
    if (auto it = by_state_.find(request.navigation.state.value); it != by_state_.end()) {
        return it->second;
    }
    std::string path;
    for (const auto& t : request.navigation.consumed) {
        if (!path.empty()) {
            path.push_back('/');
        }
        path += t.str();
    }
    if (auto it = by_path_.find(path); it != by_path_.end()) {
        return it->second;
    }
    if (default_) {
        return *default_;
    }
    throw GeneratorError("no canned response for state " + std::to_string(request.navigation.state.value));
}

std::string ExemplarReplayGenerator::generate(const GenerationRequest& request)
{
    const int round = next_system_round(request.partial);
    for (auto id : request.exemplars.dialogue_ids) {
        const auto& d = request.corpus.at(id);
        const Utterance* last_system = nullptr;
        for (const auto& u : d.utterances) {
            if (u.role != Role::system || u.text.empty()) {
                continue;
            }
            if (u.round == round) {
                return u.text;
            }
            if (u.round < round) {
                last_system = &u;
            }
        }
        if (last_system != nullptr) {
            return last_system->text;
        }
    }
    return fallback_;
}

std::string extract_system_reply(const std::string& completion, int round)
{
    const std::regex line_re("^\\s*" + std::to_string(round) + "\\s+SYSTEM\\s*:\\s*(.*?)\\s*$", std::regex::icase);
    std::istringstream in(completion);
    std::string line;
    std::string found;
    while (std::getline(in, line)) {
        std::smatch m;
        if (std::regex_match(line, m, line_re)) {
            found = m[1].str();
        }
    }
    return found.empty() ? trim(completion) : found;
}

std::string LlmGenerator::generate(const GenerationRequest& request)
{
    std::string completion;
    try {
        completion = client_.complete(request.prompt.text);
    } catch (const ServiceError& e) {
        throw GeneratorError(std::string("generator transport: ") + e.what(), e.raw());
    }
    auto reply = extract_system_reply(completion, next_system_round(request.partial));
    if (reply.empty()) {
        throw GeneratorError("generator returned an empty reply", completion);
    }
    return reply;
}

Session::Session(std::string id, std::shared_ptr<const Automaton> automaton, std::shared_ptr<const Corpus> corpus,
                 SessionOptions options)
    : id_(std::move(id)), automaton_(std::move(automaton)), corpus_(std::move(corpus)), options_(options)
{
    if (!automaton_ || !corpus_) {
        throw std::invalid_argument("Session needs an automaton and a corpus");
    }
    if (options_.exemplar_k == 0) {
        throw std::invalid_argument("exemplar_k must be at least 1");
    }
    state_.current = automaton_->start();
    state_.last_valid = automaton_->start();
}

SessionState Session::snapshot() const
{
    std::lock_guard lock(state_mutex_);
    return state_;
}

namespace {

Dialogue partial_from(const std::vector<SessionTurn>& history)
{
    Dialogue d;
    for (const auto& turn : history) {
        d.utterances.push_back(Utterance{turn.role, turn.text, static_cast<int>(d.utterances.size() / 2),
                                         turn.role == Role::user && turn.text.empty()});
    }
    return d;
}

}  // namespace

Dialogue Session::partial_dialogue() const
{
    return partial_from(snapshot().history);
}

struct SessionAccess {
    static std::mutex& step_mutex(Session& s) { return s.step_mutex_; }
    static void commit(Session& s, SessionState next)
    {
        std::lock_guard lock(s.state_mutex_);
        s.state_ = std::move(next);
    }
};

StepResult chat_step(Session& session, const std::string& user_text, const Tagger& tagger, Generator& generator)
{
    std::unique_lock step_lock(SessionAccess::step_mutex(session), std::try_to_lock);
    if (!step_lock.owns_lock()) {
        throw SessionBusyError("session " + session.id() + " already has a step in flight");
    }
    const auto& automaton = session.automaton();
    const auto& corpus = session.corpus();
    const auto& options = session.options();
    SessionState next = session.snapshot();

    auto text = trim(user_text);
    auto partial = partial_from(next.history);
    const int round = static_cast<int>(partial.utterances.size() / 2);
    Utterance utterance{Role::user, text, round, text.empty()};

    StepResult result;
    result.tags = extract_tags(utterance, tagger);
    auto route = route_turn(automaton, next.current, next.last_valid, result.tags);
    result.navigation = std::move(route.navigation);
    const auto turn_index = static_cast<std::uint64_t>(next.history.size() / 2);
    result.exemplars = retrieve_exemplars(automaton, route.source, corpus, options.exemplar_k,
                                          mix_seed(options.seed, turn_index), options.sampling,
                                          &result.navigation.path);
    partial.utterances.push_back(utterance);
    result.prompt = compile_prompt(result.exemplars, partial, corpus);
    result.response = generator.generate(
        GenerationRequest{result.prompt, result.navigation, result.exemplars, partial, corpus});

    next.history.push_back(SessionTurn{Role::user, text, result.tags, result.navigation.state});
    next.history.push_back(SessionTurn{Role::system, result.response, {}, route.next_current});
    next.last_valid = route.source;
    next.current = route.next_current;
    SessionAccess::commit(session, std::move(next));
    return result;
}

}  // namespace dfarag
