#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dfarag/automaton.hpp"
#include "dfarag/common.hpp"
#include "dfarag/corpus.hpp"
#include "dfarag/tagging.hpp"

namespace testsupport {

using namespace dfarag;

inline std::filesystem::path data_path(const std::string& name)
{
    return std::filesystem::path(DFARAG_TEST_DATA_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<Tag> tags(std::initializer_list<const char*> names)
{
    std::vector<Tag> out;
    for (const auto* n : names) {
        out.emplace_back(n);
    }
    return out;
}

/// The three-dialogue toy table, written out by hand.
inline RoundTagTable golden_table()
{
    RoundTagTable t;
    t.set(0, Role::user, 1, tags({"greet", "battery"}));
    t.set(0, Role::user, 2, tags({"greet", "screen"}));
    t.set(0, Role::user, 3, tags({"refund"}));
    t.set(0, Role::system, 1, tags({"link"}));
    t.set(0, Role::system, 2, tags({"link"}));
    t.set(0, Role::system, 3, tags({"apology"}));
    return t;
}

/// Random table: up to `max_dialogues` dialogues, each a contiguous run of
/// stages from (0, user), at most `max_rounds` rounds, tags from an alphabet
/// of `max_tags` letters. Some entries are empty sets.
inline RoundTagTable random_table(Rng& rng, std::size_t max_dialogues = 12, int max_rounds = 4,
                                  std::size_t max_tags = 6)
{
    RoundTagTable t;
    const auto n = 1 + rng.below(max_dialogues);
    const auto alphabet = 1 + rng.below(max_tags);
    for (std::uint64_t d = 0; d < n; ++d) {
        const auto id = static_cast<DialogueId>(d * 3 + rng.below(3));
        const auto utterances = 1 + rng.below(static_cast<std::uint64_t>(2 * max_rounds));
        for (std::uint64_t u = 0; u < utterances; ++u) {
            const int round = static_cast<int>(u / 2);
            const Role role = u % 2 == 0 ? Role::user : Role::system;
            std::vector<Tag> ts;
            const auto count = rng.below(4);
            for (std::uint64_t k = 0; k < count; ++k) {
                Tag tag(std::string(1, static_cast<char>('a' + rng.below(alphabet))));
                if (std::find(ts.begin(), ts.end(), tag) == ts.end()) {
                    ts.push_back(tag);
                }
            }
            t.set(round, role, id, ts);
        }
    }
    return t;
}

/// Random automaton with a tree skeleton plus random extra edges; dense ids,
/// deterministic per state, roles and rounds consistent along edges.
inline Automaton random_automaton(Rng& rng, std::size_t max_states = 14)
{
    Automaton a;
    const auto n = 1 + rng.below(max_states);
    std::set<DialogueId> all;
    for (int i = 0; i < 10; ++i) {
        all.insert(static_cast<DialogueId>(i));
    }
    a.mutable_state(a.start()).dialogue_ids = all;
    for (std::uint64_t i = 1; i < n; ++i) {
        const StateId parent{static_cast<std::uint32_t>(rng.below(i))};
        const auto& ps = a.state(parent);
        DialogueIdSet ids;
        for (auto id : ps.dialogue_ids) {
            if (rng.below(2) == 0) {
                ids.insert(id);
            }
        }
        Role role = ps.role == Role::start ? Role::user : ps.role;
        auto child = a.add_state(ps.round, role, ids);
        for (int attempt = 0; attempt < 4; ++attempt) {
            Tag tag(std::string(1, static_cast<char>('a' + rng.below(5))));
            if (a.state(parent).find(tag) == nullptr) {
                a.add_transition(parent, tag, child, ids.size());
                break;
            }
        }
        if (rng.below(4) == 0) {
            a.mutable_state(child).accept = true;
        }
    }
    return a;
}

inline DialogueIdSet first_n(std::size_t n, DialogueId offset = 0)
{
    DialogueIdSet out;
    for (std::size_t i = 0; i < n; ++i) {
        out.insert(offset + i);
    }
    return out;
}

/// Two sibling user states under q0 with children weighted as given.
inline Automaton weighted_pair(const std::vector<std::pair<const char*, std::size_t>>& left,
                        const std::vector<std::pair<const char*, std::size_t>>& right)
{
    Automaton a;
    a.mutable_state(a.start()).dialogue_ids = first_n(100);
    auto q = a.add_state(0, Role::user, first_n(50));
    auto q2 = a.add_state(0, Role::user, first_n(50, 50));
    a.add_transition(a.start(), Tag("x"), q);
    a.add_transition(a.start(), Tag("y"), q2);
    DialogueId next = 0;
    for (const auto& [tag, w] : left) {
        a.add_transition(q, Tag(tag), a.add_state(0, Role::user, first_n(w, next)));
        next += w;
    }
    next = 50;
    for (const auto& [tag, w] : right) {
        a.add_transition(q2, Tag(tag), a.add_state(0, Role::user, first_n(w, next)));
        next += w;
    }
    return a;
}

/// Random automaton whose tags and configuration stress the encoders.
inline Automaton awkward_automaton(Rng& rng)
{
    auto a = random_automaton(rng);
    static const char* const odd[] = {"quote\"d", "back\\slash", "new\nline", "uni-\xc3\xa9", "sp ace"};
    const auto extra = rng.below(3);
    for (std::uint64_t i = 0; i < extra && a.size() > 1; ++i) {
        StateId from{static_cast<std::uint32_t>(rng.below(a.size()))};
        StateId to{static_cast<std::uint32_t>(1 + rng.below(a.size() - 1))};
        Tag tag(odd[rng.below(5)]);
        if (a.state(from).find(tag) == nullptr) {
            a.add_transition(from, tag, to);
        }
    }
    BuildConfig config;
    config.tau = rng.below(10);
    config.merge_lambda = static_cast<double>(rng.below(1000)) / 997.0;
    if (rng.below(2) == 0) {
        config.max_rounds = static_cast<int>(rng.below(6));
    }
    config.seed = rng.next();
    a.set_config(config);
    return a;
}

/// BM25 computed straight from the textbook formula over token lists.
inline std::vector<double> brute_bm25(const std::vector<std::vector<std::string>>& docs,
                                      const std::vector<std::string>& query, double k1 = 1.2, double b = 0.75)
{
    const double n = static_cast<double>(docs.size());
    double total = 0;
    for (const auto& d : docs) {
        total += static_cast<double>(d.size());
    }
    const double avgdl = n == 0 ? 0 : total / n;
    std::vector<double> scores(docs.size(), 0.0);
    for (const auto& term : query) {
        double df = 0;
        for (const auto& d : docs) {
            if (std::find(d.begin(), d.end(), term) != d.end()) {
                df += 1;
            }
        }
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (std::size_t i = 0; i < docs.size(); ++i) {
            const double tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), term));
            const double dl = static_cast<double>(docs[i].size());
            scores[i] += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
        }
    }
    return scores;
}

/// Minimal DOT reader for the subset export_dot emits:
/// `digraph NAME {`, attribute statements, node statements `ID [..];` and
/// edge statements `ID -> ID [..];`, closing `}`. Throws on anything else.
struct DotGraph {
    std::string name;
    std::map<std::string, std::map<std::string, std::string>> nodes;
    struct Edge {
        std::string from, to;
        std::map<std::string, std::string> attrs;
    };
    std::vector<Edge> edges;
};

namespace dot_detail {

inline void skip_ws(const std::string& s, std::size_t& i)
{
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
}

inline std::string read_id(const std::string& s, std::size_t& i)
{
    skip_ws(s, i);
    if (i < s.size() && s[i] == '"') {
        std::string out;
        ++i;
        while (i < s.size() && s[i] != '"') {
            if (s[i] == '\\' && i + 1 < s.size()) {
                ++i;
                // Graphviz reads \n inside a label as a line break.
                out.push_back(s[i] == 'n' ? '\n' : s[i]);
                ++i;
                continue;
            }
            out.push_back(s[i++]);
        }
        if (i >= s.size()) {
            throw std::runtime_error("unterminated string");
        }
        ++i;
        return out;
    }
    std::string out;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '.')) {
        out.push_back(s[i++]);
    }
    if (out.empty()) {
        throw std::runtime_error("expected identifier at offset " + std::to_string(i));
    }
    return out;
}

inline std::map<std::string, std::string> read_attrs(const std::string& s, std::size_t& i)
{
    std::map<std::string, std::string> attrs;
    skip_ws(s, i);
    if (i >= s.size() || s[i] != '[') {
        return attrs;
    }
    ++i;
    for (;;) {
        skip_ws(s, i);
        if (i < s.size() && s[i] == ']') {
            ++i;
            return attrs;
        }
        auto key = read_id(s, i);
        skip_ws(s, i);
        if (i >= s.size() || s[i] != '=') {
            throw std::runtime_error("expected '=' in attribute list");
        }
        ++i;
        attrs[key] = read_id(s, i);
        skip_ws(s, i);
        if (i < s.size() && (s[i] == ',' || s[i] == ';')) {
            ++i;
        }
    }
}

}  // namespace dot_detail

inline DotGraph parse_dot(const std::string& s)
{
    using namespace dot_detail;
    DotGraph g;
    std::size_t i = 0;
    if (read_id(s, i) != "digraph") {
        throw std::runtime_error("expected digraph");
    }
    skip_ws(s, i);
    if (i < s.size() && s[i] != '{') {
        g.name = read_id(s, i);
        skip_ws(s, i);
    }
    if (i >= s.size() || s[i] != '{') {
        throw std::runtime_error("expected '{'");
    }
    ++i;
    for (;;) {
        skip_ws(s, i);
        if (i >= s.size()) {
            throw std::runtime_error("missing '}'");
        }
        if (s[i] == '}') {
            ++i;
            skip_ws(s, i);
            if (i != s.size()) {
                throw std::runtime_error("trailing content after graph");
            }
            return g;
        }
        auto id = read_id(s, i);
        skip_ws(s, i);
        if (id == "node" || id == "edge" || id == "graph") {
            read_attrs(s, i);
        } else if (i < s.size() && s[i] == '=') {
            ++i;
            read_id(s, i);
        } else if (s.compare(i, 2, "->") == 0) {
            i += 2;
            DotGraph::Edge e;
            e.from = id;
            e.to = read_id(s, i);
            e.attrs = read_attrs(s, i);
            g.edges.push_back(std::move(e));
        } else {
            if (g.nodes.count(id) != 0) {
                throw std::runtime_error("duplicate node statement " + id);
            }
            g.nodes[id] = read_attrs(s, i);
        }
        skip_ws(s, i);
        if (i >= s.size() || s[i] != ';') {
            throw std::runtime_error("expected ';' at offset " + std::to_string(i));
        }
        ++i;
    }
}

}  // namespace testsupport
