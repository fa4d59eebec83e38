#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dfarag/common.hpp"
#include "dfarag/tag.hpp"
#include "dfarag/tagging.hpp"

namespace dfarag {

struct StateId {
    std::uint32_t value = 0;
    auto operator<=>(const StateId&) const = default;
    bool operator==(const StateId&) const = default;
};

using DialogueIdSet = std::set<DialogueId>;

struct Transition {
    Tag tag;
    StateId target;
    /// Number of the parent's dialogues carrying `tag` when the edge was
    /// created. Build-time debug data; not persisted.
    std::size_t creation_count = 0;

    bool operator==(const Transition& o) const { return tag == o.tag && target == o.target; }
};

struct State {
    StateId id;
    int round = 0;
    Role role = Role::start;
    bool accept = false;
    /// Dialogues whose tag trajectory passes through this state.
    DialogueIdSet dialogue_ids;
    /// Creation order; at most one entry per tag.
    std::vector<Transition> transitions;

    const Transition* find(const Tag& tag) const noexcept;
    bool operator==(const State&) const = default;
};

struct BuildConfig {
    /// A state spawns the next round only when more than `tau` dialogues
    /// continue from it.
    std::size_t tau = 5;
    double merge_lambda = 0.1;
    std::optional<int> max_rounds;
    std::uint64_t seed = 0;

    bool operator==(const BuildConfig&) const = default;
};

/// Tag automaton with per-state dialogue tracking. State ids are dense:
/// state k lives at index k.
class Automaton {
  public:
    /// Start state only.
    explicit Automaton(BuildConfig config = {});

    StateId start() const noexcept { return StateId{0}; }
    bool contains(StateId id) const noexcept { return id.value < states_.size(); }
    /// Throws NotFoundError.
    const State& state(StateId id) const;
    const std::vector<State>& states() const noexcept { return states_; }
    std::size_t size() const noexcept { return states_.size(); }
    std::size_t transition_count() const noexcept;

    /// Labels in use, <eor> included.
    std::set<Tag> alphabet() const;
    std::vector<StateId> accepts() const;

    const BuildConfig& config() const noexcept { return config_; }
    void set_config(const BuildConfig& config) { config_ = config; }

    StateId add_state(int round, Role role, DialogueIdSet ids);
    /// Throws ValidationError if `from` already has an edge labeled `tag`.
    void add_transition(StateId from, Tag tag, StateId to, std::size_t creation_count = 0);
    State& mutable_state(StateId id);

    bool operator==(const Automaton&) const = default;

  private:
    std::vector<State> states_;
    BuildConfig config_;
};

/// (tag, count) where count is how many of `ids` carry the tag at the
/// stage; count descending, ties by tag ascending.
std::vector<std::pair<Tag, std::size_t>> tag_frequencies(const RoundTagTable& table, int round, Role role,
                                                         const DialogueIdSet& ids);

/// Grows the tag tree for one stage under `root`, always expanding the most
/// frequent remaining tag first. Returns the state each dialogue ends at.
std::map<DialogueId, StateId> build_round_tree(Automaton& automaton, const RoundTagTable& table, int round, Role role,
                                               StateId root, const DialogueIdSet& ids);

/// Round-0 tree from the start state, then one tree per later stage for
/// every state where more than tau still-active dialogues rest, attached by
/// an <eor> edge. Accepting states are where dialogues finish. No merging.
Automaton build_automaton(const RoundTagTable& table, const BuildConfig& config = {});

/// Outgoing labels of `q`, <eor> excluded.
std::set<Tag> children_tags(const Automaton& automaton, StateId q);

std::optional<StateId> step(const Automaton& automaton, StateId q, const Tag& tag);

/// Target of the <eor> edge, if any.
std::optional<StateId> eor_target(const Automaton& automaton, StateId q);

/// Structural equality ignoring debug data.
bool isomorphic(const Automaton& a, const Automaton& b);

}  // namespace dfarag

template <>
struct std::hash<dfarag::StateId> {
    std::size_t operator()(dfarag::StateId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
