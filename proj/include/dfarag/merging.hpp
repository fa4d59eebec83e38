#pragma once

#include <string>
#include <vector>

#include "dfarag/automaton.hpp"

namespace dfarag {

struct MergePair {
    StateId first;
    StateId second;
    double score = 0.0;

    bool operator==(const MergePair&) const = default;
};

struct MergePlan {
    std::vector<MergePair> pairs;
    double lambda = 0.1;

    bool empty() const noexcept { return pairs.empty(); }
};

/// Child-weighted overlap of the outgoing tags of `q` and `q2`, each child
/// weighted by how many dialogues it tracks:
///
///   sum_{t in T(q) & T(q2)} |I(d(q,t))| |I(d(q2,t))|
///   ------------------------------------------------
///   sum_{t in T(q)} |I(d(q,t))| * sum_{t in T(q2)} |I(d(q2,t))|
///
/// <eor> edges are ignored; 0 when either state has no other children.
double similarity(const Automaton& automaton, StateId q, StateId q2);

/// Pairs of distinct states with the same round and role whose similarity
/// exceeds `lambda` (strictly). Sorted by score descending, then by id.
MergePlan plan_merges(const Automaton& automaton, double lambda);

/// Merges planned pairs transitively; when merged states share an outgoing
/// tag the targets are merged too. Merged states take the union of their
/// tracked dialogues, and tracked sets are then closed over edges so every
/// source tracks everything its targets track. States are renumbered
/// densely in order of their smallest original id. The input is untouched.
/// Throws NotFoundError if the plan names a missing state.
Automaton apply_merges(const Automaton& automaton, const MergePlan& plan);

struct MergeReport {
    MergePlan plan;
    std::size_t states_before = 0;
    std::size_t states_after = 0;
    std::size_t passes = 0;

    double merged_fraction() const noexcept
    {
        return states_before == 0 ? 0.0
                                  : static_cast<double>(states_before - states_after) / static_cast<double>(states_before);
    }
    std::string to_json() const;
};

/// plan + apply, repeated up to `max_passes` times or until a plan is empty.
/// The report lists the pairs of the first pass.
Automaton merge_states(const Automaton& automaton, double lambda, std::size_t max_passes = 1,
                       MergeReport* report = nullptr);

}  // namespace dfarag
