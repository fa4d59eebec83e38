#include "dfarag/merging.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <json.hpp>

namespace dfarag {

namespace {

struct ChildWeights {
    std::map<Tag, std::uint64_t> by_tag;
    std::uint64_t total = 0;
};

ChildWeights child_weights(const Automaton& a, const State& s)
{
    ChildWeights w;
    for (const auto& t : s.transitions) {
        if (t.tag == end_of_round_tag()) {
            continue;
        }
        auto weight = static_cast<std::uint64_t>(a.state(t.target).dialogue_ids.size());
        w.by_tag[t.tag] = weight;
        w.total += weight;
    }
    return w;
}

double ratio(std::uint64_t numerator, std::uint64_t total_a, std::uint64_t total_b)
{
    if (total_a == 0 || total_b == 0) {
        return 0.0;
    }
    return static_cast<double>(numerator) / (static_cast<double>(total_a) * static_cast<double>(total_b));
}

class UnionFind {
  public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x)
    {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a == b) {
            return false;
        }
        // Smaller index becomes the root so representatives are class minima.
        if (b < a) {
            std::swap(a, b);
        }
        parent_[b] = a;
        return true;
    }

  private:
    std::vector<std::size_t> parent_;
};

}  // namespace

double similarity(const Automaton& automaton, StateId q, StateId q2)
{
    auto wa = child_weights(automaton, automaton.state(q));
    auto wb = child_weights(automaton, automaton.state(q2));
    std::uint64_t shared = 0;
    for (const auto& [tag, weight] : wa.by_tag) {
        if (auto it = wb.by_tag.find(tag); it != wb.by_tag.end()) {
            shared += weight * it->second;
        }
    }
    return ratio(shared, wa.total, wb.total);
}

MergePlan plan_merges(const Automaton& automaton, double lambda)
{
    MergePlan plan;
    plan.lambda = lambda;

    // Only pairs sharing a child tag can score above zero, so candidates are
    // enumerated through a per-group inverted index instead of all pairs.
    std::map<std::pair<int, Role>, std::map<Tag, std::vector<std::pair<std::uint32_t, std::uint64_t>>>> index;
    std::vector<std::uint64_t> totals(automaton.size(), 0);
    for (const auto& s : automaton.states()) {
        if (s.role == Role::start) {
            continue;
        }
        auto w = child_weights(automaton, s);
        totals[s.id.value] = w.total;
        auto& group = index[{s.round, s.role}];
        for (const auto& [tag, weight] : w.by_tag) {
            group[tag].emplace_back(s.id.value, weight);
        }
    }

    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> shared;
    for (const auto& [key, by_tag] : index) {
        for (const auto& [tag, holders] : by_tag) {
            for (std::size_t i = 0; i < holders.size(); ++i) {
                for (std::size_t j = i + 1; j < holders.size(); ++j) {
                    auto a = holders[i];
                    auto b = holders[j];
                    if (b.first < a.first) {
                        std::swap(a, b);
                    }
                    shared[{a.first, b.first}] += a.second * b.second;
                }
            }
        }
    }
    for (const auto& [ids, numerator] : shared) {
        double score = ratio(numerator, totals[ids.first], totals[ids.second]);
        if (score > lambda) {
            plan.pairs.push_back(MergePair{StateId{ids.first}, StateId{ids.second}, score});
        }
    }
    std::stable_sort(plan.pairs.begin(), plan.pairs.end(),
                     [](const MergePair& a, const MergePair& b) { return a.score > b.score; });
    return plan;
}

Automaton apply_merges(const Automaton& automaton, const MergePlan& plan)
{
    const auto n = automaton.size();
    UnionFind uf(n);
    for (const auto& p : plan.pairs) {
        if (!automaton.contains(p.first) || !automaton.contains(p.second)) {
            throw NotFoundError("merge plan references a missing state (" + std::to_string(p.first.value) + ", " +
                                std::to_string(p.second.value) + ")");
        }
        uf.unite(p.first.value, p.second.value);
    }

    // Cascade: within a class, two edges with the same tag must end in the
    // same class, otherwise determinism breaks.
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<std::size_t, std::map<Tag, std::size_t>> seen;
        for (const auto& s : automaton.states()) {
            auto& by_tag = seen[uf.find(s.id.value)];
            for (const auto& t : s.transitions) {
                auto target = uf.find(t.target.value);
                auto [it, inserted] = by_tag.emplace(t.tag, target);
                if (!inserted && uf.find(it->second) != target) {
                    uf.unite(it->second, target);
                    changed = true;
                }
            }
        }
    }

    // Representatives are class minima, so ascending representative order is
    // ascending smallest-original-id order.
    std::vector<std::uint32_t> new_id(n, 0);
    std::vector<std::size_t> reps;
    for (std::size_t i = 0; i < n; ++i) {
        if (uf.find(i) == i) {
            new_id[i] = static_cast<std::uint32_t>(reps.size());
            reps.push_back(i);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        new_id[i] = new_id[uf.find(i)];
    }

    Automaton out(automaton.config());
    std::vector<State> merged(reps.size());
    std::vector<bool> initialized(reps.size(), false);
    for (const auto& s : automaton.states()) {
        auto& m = merged[new_id[s.id.value]];
        if (!initialized[new_id[s.id.value]]) {
            m.id = StateId{new_id[s.id.value]};
            m.round = s.round;
            m.role = s.role;
            initialized[new_id[s.id.value]] = true;
        }
        m.accept = m.accept || s.accept;
        m.dialogue_ids.insert(s.dialogue_ids.begin(), s.dialogue_ids.end());
        for (const auto& t : s.transitions) {
            if (m.find(t.tag) == nullptr) {
                m.transitions.push_back(Transition{t.tag, StateId{new_id[t.target.value]}, t.creation_count});
            }
        }
    }

    // Close tracked sets over edges (children are mostly created after their
    // parents, so a reverse sweep converges in very few rounds).
    changed = true;
    while (changed) {
        changed = false;
        for (auto it = merged.rbegin(); it != merged.rend(); ++it) {
            for (const auto& t : it->transitions) {
                const auto& child = merged[t.target.value].dialogue_ids;
                auto before = it->dialogue_ids.size();
                it->dialogue_ids.insert(child.begin(), child.end());
                changed = changed || it->dialogue_ids.size() != before;
            }
        }
    }

    out.mutable_state(out.start()) = std::move(merged[0]);
    for (std::size_t i = 1; i < merged.size(); ++i) {
        auto id = out.add_state(merged[i].round, merged[i].role, {});
        out.mutable_state(id) = std::move(merged[i]);
    }
    return out;
}

std::string MergeReport::to_json() const
{
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& p : plan.pairs) {
        pairs.push_back({{"first", p.first.value}, {"second", p.second.value}, {"score", p.score}});
    }
    nlohmann::ordered_json doc = {
        {"lambda", plan.lambda},
        {"passes", passes},
        {"states_before", states_before},
        {"states_after", states_after},
        {"merged_fraction", merged_fraction()},
        {"pairs", std::move(pairs)},
    };
    return doc.dump(2) + "\n";
}

Automaton merge_states(const Automaton& automaton, double lambda, std::size_t max_passes, MergeReport* report)
{
    Automaton current = automaton;
    MergeReport local;
    local.states_before = automaton.size();
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        auto plan = plan_merges(current, lambda);
        if (pass == 0) {
            local.plan = plan;
        }
        if (plan.empty()) {
            break;
        }
        current = apply_merges(current, plan);
        ++local.passes;
    }
    local.plan.lambda = lambda;
    local.states_after = current.size();
    if (report) {
        *report = std::move(local);
    }
    return current;
}

}  // namespace dfarag
