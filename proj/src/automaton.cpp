#include "dfarag/automaton.hpp"

#include <algorithm>
#include <unordered_map>

namespace dfarag {

namespace {

using Remaining = std::map<DialogueId, std::set<Tag>>;

// Most frequent tag among the remaining sets of `ids`; ties go to the
// lexicographically smallest tag.
std::pair<Tag, std::size_t> most_frequent(const std::vector<DialogueId>& ids, const Remaining& remaining)
{
    std::map<Tag, std::size_t> counts;
    for (auto id : ids) {
        for (const auto& t : remaining.at(id)) {
            ++counts[t];
        }
    }
    std::pair<Tag, std::size_t> best{Tag{}, 0};
    for (const auto& [tag, count] : counts) {
        if (count > best.second) {
            best = {tag, count};
        }
    }
    return best;
}

void grow(Automaton& a, StateId node, int round, Role role, const std::vector<DialogueId>& ids, Remaining& remaining,
          std::map<DialogueId, StateId>& rest)
{
    std::vector<DialogueId> pending;
    for (auto id : ids) {
        if (remaining[id].empty()) {
            rest[id] = node;
        } else {
            pending.push_back(id);
        }
    }
    while (!pending.empty()) {
        auto [tag, count] = most_frequent(pending, remaining);
        std::vector<DialogueId> with_tag;
        std::vector<DialogueId> without_tag;
        for (auto id : pending) {
            (remaining[id].count(tag) != 0 ? with_tag : without_tag).push_back(id);
        }
        auto child = a.add_state(round, role, DialogueIdSet(with_tag.begin(), with_tag.end()));
        a.add_transition(node, tag, child, count);
        for (auto id : with_tag) {
            remaining[id].erase(tag);
        }
        grow(a, child, round, role, with_tag, remaining, rest);
        pending = std::move(without_tag);
    }
}

}  // namespace

const Transition* State::find(const Tag& tag) const noexcept
{
    for (const auto& t : transitions) {
        if (t.tag == tag) {
            return &t;
        }
    }
    return nullptr;
}

Automaton::Automaton(BuildConfig config) : config_(config)
{
    states_.push_back(State{StateId{0}, 0, Role::start, false, {}, {}});
}

const State& Automaton::state(StateId id) const
{
    if (!contains(id)) {
        throw NotFoundError("unknown state id " + std::to_string(id.value));
    }
    return states_[id.value];
}

State& Automaton::mutable_state(StateId id)
{
    if (!contains(id)) {
        throw NotFoundError("unknown state id " + std::to_string(id.value));
    }
    return states_[id.value];
}

std::size_t Automaton::transition_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& s : states_) {
        n += s.transitions.size();
    }
    return n;
}

std::set<Tag> Automaton::alphabet() const
{
    std::set<Tag> out;
    for (const auto& s : states_) {
        for (const auto& t : s.transitions) {
            out.insert(t.tag);
        }
    }
    return out;
}

std::vector<StateId> Automaton::accepts() const
{
    std::vector<StateId> out;
    for (const auto& s : states_) {
        if (s.accept) {
            out.push_back(s.id);
        }
    }
    return out;
}

StateId Automaton::add_state(int round, Role role, DialogueIdSet ids)
{
    StateId id{static_cast<std::uint32_t>(states_.size())};
    states_.push_back(State{id, round, role, false, std::move(ids), {}});
    return id;
}

void Automaton::add_transition(StateId from, Tag tag, StateId to, std::size_t creation_count)
{
    if (!contains(to)) {
        throw NotFoundError("transition target " + std::to_string(to.value) + " does not exist");
    }
    auto& s = mutable_state(from);
    if (s.find(tag) != nullptr) {
        throw ValidationError("state " + std::to_string(from.value) + " already has a transition on '" + tag.str() +
                              "'");
    }
    s.transitions.push_back(Transition{std::move(tag), to, creation_count});
}

std::vector<std::pair<Tag, std::size_t>> tag_frequencies(const RoundTagTable& table, int round, Role role,
                                                         const DialogueIdSet& ids)
{
    std::map<Tag, std::size_t> counts;
    if (const auto* entries = table.entries(round, role)) {
        for (auto id : ids) {
            auto it = entries->find(id);
            if (it == entries->end()) {
                continue;
            }
            for (const auto& t : std::set<Tag>(it->second.begin(), it->second.end())) {
                ++counts[t];
            }
        }
    }
    std::vector<std::pair<Tag, std::size_t>> out(counts.begin(), counts.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

std::map<DialogueId, StateId> build_round_tree(Automaton& automaton, const RoundTagTable& table, int round, Role role,
                                               StateId root, const DialogueIdSet& ids)
{
    Remaining remaining;
    const auto* entries = table.entries(round, role);
    for (auto id : ids) {
        auto& slot = remaining[id];
        if (entries != nullptr) {
            if (auto it = entries->find(id); it != entries->end()) {
                slot.insert(it->second.begin(), it->second.end());
            }
        }
    }
    std::map<DialogueId, StateId> rest;
    grow(automaton, root, round, role, std::vector<DialogueId>(ids.begin(), ids.end()), remaining, rest);
    return rest;
}

Automaton build_automaton(const RoundTagTable& table, const BuildConfig& config)
{
    Automaton a(config);
    auto all_ids = table.dialogue_ids();
    a.mutable_state(a.start()).dialogue_ids = DialogueIdSet(all_ids.begin(), all_ids.end());

    std::map<DialogueId, StateId> last_rest;
    for (auto id : all_ids) {
        last_rest[id] = a.start();
    }
    // Dialogues still following the automaton; stranded or finished ones drop out.
    DialogueIdSet active(all_ids.begin(), all_ids.end());

    auto stages = table.stages();
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const auto& stage = stages[s];
        if (config.max_rounds && stage.round >= *config.max_rounds) {
            break;
        }
        const auto& entries = *table.entries(stage.round, stage.role);

        std::map<StateId, DialogueIdSet> groups;
        DialogueIdSet next_active;
        for (auto id : active) {
            if (entries.count(id) != 0) {
                groups[last_rest[id]].insert(id);
            }
        }
        for (auto& [spawn_from, ids] : groups) {
            StateId root = spawn_from;
            if (s > 0) {
                if (ids.size() <= config.tau) {
                    continue;
                }
                root = a.add_state(stage.round, stage.role, ids);
                a.add_transition(spawn_from, end_of_round_tag(), root, ids.size());
            }
            auto rest = build_round_tree(a, table, stage.round, stage.role, root, ids);
            for (const auto& [id, at] : rest) {
                last_rest[id] = at;
                next_active.insert(id);
            }
        }
        active = std::move(next_active);
        if (active.empty()) {
            break;
        }
    }
    for (const auto& [id, at] : last_rest) {
        a.mutable_state(at).accept = true;
    }
    return a;
}

std::set<Tag> children_tags(const Automaton& automaton, StateId q)
{
    std::set<Tag> out;
    for (const auto& t : automaton.state(q).transitions) {
        if (t.tag != end_of_round_tag()) {
            out.insert(t.tag);
        }
    }
    return out;
}

std::optional<StateId> step(const Automaton& automaton, StateId q, const Tag& tag)
{
    if (const auto* t = automaton.state(q).find(tag)) {
        return t->target;
    }
    return std::nullopt;
}

std::optional<StateId> eor_target(const Automaton& automaton, StateId q)
{
    return step(automaton, q, end_of_round_tag());
}

bool isomorphic(const Automaton& a, const Automaton& b)
{
    return a == b;
}

}  // namespace dfarag
