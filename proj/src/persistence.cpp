#include "dfarag/persistence.hpp"

#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dfarag {

using nlohmann::json;
using nlohmann::ordered_json;

std::string encode_automaton(const Automaton& automaton)
{
    const auto& cfg = automaton.config();
    ordered_json config = {
        {"tau", cfg.tau},
        {"merge_lambda", cfg.merge_lambda},
        {"max_rounds", cfg.max_rounds ? ordered_json(*cfg.max_rounds) : ordered_json(nullptr)},
        {"seed", cfg.seed},
    };
    ordered_json states = ordered_json::array();
    for (const auto& s : automaton.states()) {
        ordered_json transitions = ordered_json::array();
        for (const auto& t : s.transitions) {
            transitions.push_back({{"tag", t.tag.str()}, {"target", t.target.value}});
        }
        states.push_back({
            {"id", s.id.value},
            {"round", s.round},
            {"role", role_name(s.role)},
            {"accept", s.accept},
            {"dialogue_ids", ordered_json(std::vector<DialogueId>(s.dialogue_ids.begin(), s.dialogue_ids.end()))},
            {"transitions", std::move(transitions)},
        });
    }
    ordered_json doc = {
        {"version", 1},
        {"build_config", std::move(config)},
        {"start", automaton.start().value},
        {"states", std::move(states)},
    };
    return doc.dump(2) + "\n";
}

Automaton decode_automaton(const std::string& bytes)
{
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw DecodeError(std::string("automaton document is not JSON: ") + e.what());
    }
    try {
        if (!doc.contains("version") || doc.at("version").get<int>() != 1) {
            throw DecodeError("unsupported automaton document version");
        }
        BuildConfig cfg;
        if (doc.contains("build_config")) {
            const auto& c = doc.at("build_config");
            cfg.tau = c.value("tau", cfg.tau);
            cfg.merge_lambda = c.value("merge_lambda", cfg.merge_lambda);
            if (c.contains("max_rounds") && !c.at("max_rounds").is_null()) {
                cfg.max_rounds = c.at("max_rounds").get<int>();
            }
            cfg.seed = c.value("seed", cfg.seed);
        }
        const auto& states = doc.at("states");
        if (!states.is_array() || states.empty()) {
            throw DecodeError("automaton document has no states");
        }
        if (doc.at("start").get<std::uint32_t>() != 0) {
            throw DecodeError("start state must have id 0");
        }

        std::map<std::uint32_t, const json*> by_id;
        for (const auto& s : states) {
            auto id = s.at("id").get<std::uint32_t>();
            if (!by_id.emplace(id, &s).second) {
                throw DecodeError("duplicate state id " + std::to_string(id));
            }
        }
        std::uint32_t expected = 0;
        for (const auto& [id, node] : by_id) {
            if (id != expected++) {
                throw DecodeError("state ids must be dense from 0; missing " + std::to_string(expected - 1));
            }
        }

        Automaton a(cfg);
        for (const auto& [id, node] : by_id) {
            Role role = parse_role(node->at("role").get<std::string>(), true);
            if ((id == 0) != (role == Role::start)) {
                throw DecodeError("state " + std::to_string(id) + ": only the start state may have role start");
            }
            auto ids = node->at("dialogue_ids").get<std::vector<DialogueId>>();
            StateId sid = id == 0 ? a.start() : a.add_state(node->at("round").get<int>(), role, {});
            auto& st = a.mutable_state(sid);
            st.round = node->at("round").get<int>();
            st.accept = node->at("accept").get<bool>();
            st.dialogue_ids = DialogueIdSet(ids.begin(), ids.end());
        }
        for (const auto& [id, node] : by_id) {
            std::set<std::string> labels;
            for (const auto& t : node->at("transitions")) {
                auto tag = t.at("tag").get<std::string>();
                auto target = t.at("target").get<std::uint32_t>();
                if (!labels.insert(tag).second) {
                    throw DecodeError("state " + std::to_string(id) + ": duplicate transition tag '" + tag +
                                      "' violates determinism");
                }
                if (by_id.count(target) == 0) {
                    throw DecodeError("state " + std::to_string(id) + ": dangling transition to " +
                                      std::to_string(target));
                }
                a.add_transition(StateId{id}, Tag(tag), StateId{target});
            }
        }
        return a;
    } catch (const json::exception& e) {
        throw DecodeError(std::string("malformed automaton document: ") + e.what());
    } catch (const ValidationError& e) {
        throw DecodeError(std::string("malformed automaton document: ") + e.what());
    }
}

void save_automaton(const Automaton& automaton, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << encode_automaton(automaton);
}

Automaton load_automaton(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_automaton(ss.str());
}

namespace {

std::string dot_quote(const std::string& text)
{
    std::string out = "\"";
    for (char c : text) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
        }
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

std::string export_dot(const Automaton& automaton, const DotOptions& options)
{
    std::vector<bool> keep(automaton.size(), true);
    if (options.max_depth) {
        std::vector<std::size_t> depth(automaton.size(), SIZE_MAX);
        std::deque<StateId> queue{automaton.start()};
        depth[0] = 0;
        while (!queue.empty()) {
            auto q = queue.front();
            queue.pop_front();
            for (const auto& t : automaton.state(q).transitions) {
                if (depth[t.target.value] == SIZE_MAX) {
                    depth[t.target.value] = depth[q.value] + 1;
                    queue.push_back(t.target);
                }
            }
        }
        for (std::size_t i = 0; i < keep.size(); ++i) {
            keep[i] = depth[i] <= *options.max_depth;
        }
    }
    if (options.min_dialogues) {
        for (std::size_t i = 1; i < keep.size(); ++i) {
            keep[i] = keep[i] && automaton.states()[i].dialogue_ids.size() > *options.min_dialogues;
        }
    }
    keep[0] = true;

    std::ostringstream out;
    out << "digraph dfa {\n";
    out << "  rankdir=LR;\n";
    out << "  node [shape=circle, style=filled, fontsize=10];\n";
    for (const auto& s : automaton.states()) {
        if (!keep[s.id.value]) {
            continue;
        }
        std::string fill = s.role == Role::start ? "black" : s.role == Role::user ? "green" : "blue";
        std::string font = s.role == Role::start ? "white" : "black";
        std::string label = s.role == Role::start ? "q0" : std::to_string(s.id.value);
        out << "  s" << s.id.value << " [label=" << dot_quote(label) << ", fillcolor=" << fill
            << ", fontcolor=" << font << ", shape=" << (s.accept ? "doublecircle" : "circle")
            << ", tooltip=" << dot_quote("|I|=" + std::to_string(s.dialogue_ids.size())) << "];\n";
    }
    for (const auto& s : automaton.states()) {
        if (!keep[s.id.value]) {
            continue;
        }
        for (const auto& t : s.transitions) {
            if (!keep[t.target.value]) {
                continue;
            }
            out << "  s" << s.id.value << " -> s" << t.target.value;
            if (t.tag == end_of_round_tag()) {
                out << " [style=dashed];\n";
            } else {
                out << " [label=" << dot_quote(t.tag.str()) << "];\n";
            }
        }
    }
    out << "}\n";
    return out.str();
}

}  // namespace dfarag
