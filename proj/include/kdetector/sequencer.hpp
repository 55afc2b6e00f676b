#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdetector/dump_parser.hpp"
#include "kdetector/edit_distance.hpp"
#include "kdetector/error.hpp"
#include "kdetector/knowledge_miner.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

/// One run of consecutive frames owned by the same component.
struct ComponentOccurrence {
  std::string component;
  std::size_t position = 0;
  std::vector<std::string> functions;

  friend bool operator==(const ComponentOccurrence&, const ComponentOccurrence&) = default;
};

struct ComponentSequence {
  std::string dump_id;
  std::vector<ComponentOccurrence> occurrences;

  std::size_t size() const { return occurrences.size(); }
  bool empty() const { return occurrences.empty(); }
  const ComponentOccurrence& operator[](std::size_t i) const { return occurrences[i]; }

  const std::string& top_component() const { return occurrences.front().component; }

  friend bool operator==(const ComponentSequence&, const ComponentSequence&) = default;
};

/// Maps each function to its component (unmapped ones to `UNKNOWN:<name>`)
/// and collapses runs of equal components.
inline ComponentSequence to_component_sequence(std::span<const std::string> function_names,
                                               const ComponentMap& map, std::string dump_id = {}) {
  if (function_names.empty())
    throw Error(ErrorCode::EmptyStack, "no frames left to sequence for dump '" + dump_id + "'");
  ComponentSequence seq;
  seq.dump_id = std::move(dump_id);
  for (const auto& fn : function_names) {
    auto component = map.component_of(fn);
    std::string name = component ? *component : unknown_component(fn);
    if (seq.occurrences.empty() || seq.occurrences.back().component != name)
      seq.occurrences.push_back({std::move(name), seq.occurrences.size(), {}});
    seq.occurrences.back().functions.push_back(fn);
  }
  return seq;
}

inline ComponentSequence to_component_sequence(std::span<const StackFrame> frames, const ComponentMap& map,
                                               std::string dump_id = {}) {
  std::vector<std::string> names;
  names.reserve(frames.size());
  for (const auto& f : frames) names.push_back(f.function_name);
  return to_component_sequence(std::span<const std::string>(names), map, std::move(dump_id));
}

/// Token-level normalized edit distance between the function runs of two
/// occurrences of the same component.
inline double component_distance(const ComponentOccurrence& a, const ComponentOccurrence& b) {
  if (a.component != b.component)
    throw Error(ErrorCode::ComponentMismatch, "'" + a.component + "' vs '" + b.component + "'");
  return normalized_levenshtein(a.functions, b.functions);
}

/// Debug form: `position<TAB>component<TAB>fn1,fn2,...` per line.
inline std::string format_sequence(const ComponentSequence& seq) {
  std::string out;
  for (const auto& occ : seq.occurrences)
    out += std::to_string(occ.position) + "\t" + occ.component + "\t" + text::join(occ.functions, ",") + "\n";
  return out;
}

}  // namespace kdetector
