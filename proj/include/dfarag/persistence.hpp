#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "dfarag/automaton.hpp"

namespace dfarag {

class DecodeError : public Error {
  public:
    using Error::Error;
};

/// Canonical version-1 JSON document: states by id, transitions in creation
/// order, dialogue ids sorted. Identical automata encode to identical bytes.
std::string encode_automaton(const Automaton& automaton);

/// Throws DecodeError on version mismatch, malformed JSON, non-dense ids,
/// dangling targets or a repeated tag on one state.
Automaton decode_automaton(const std::string& bytes);

void save_automaton(const Automaton& automaton, const std::filesystem::path& path);
Automaton load_automaton(const std::filesystem::path& path);

struct DotOptions {
    /// Keep states at most this many edges from the start state.
    std::optional<std::size_t> max_depth;
    /// Keep states tracking more than this many dialogues. The start state
    /// is always kept.
    std::optional<std::size_t> min_dialogues;
};

/// Graphviz digraph: user states green, system states blue, start state
/// black, accepting states double circles; <eor> edges dashed and unlabeled.
/// Without filters there is exactly one node statement per state and one
/// edge statement per transition.
std::string export_dot(const Automaton& automaton, const DotOptions& options = {});

}  // namespace dfarag
