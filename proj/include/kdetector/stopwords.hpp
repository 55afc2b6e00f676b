#pragma once

// Stop words: function names that show up in most backtraces yet rarely in
// the exception part of a crash stack (signal handlers, thread entry points,
// dispatch loops). They carry no signal about the failure and are filtered
// before sequencing.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "kdetector/dump_parser.hpp"
#include "kdetector/error.hpp"
#include "kdetector/knowledge_miner.hpp"
#include "kdetector/labeled_pairs.hpp"
#include "kdetector/model_params.hpp"
#include "kdetector/sequencer.hpp"
#include "kdetector/similarity.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

struct StopWord {
  std::string function_name;
  double score = 0.0;

  friend bool operator==(const StopWord&, const StopWord&) = default;
};

struct StopWordList {
  std::vector<StopWord> entries;
  std::size_t cutoff_length = 0;

  std::unordered_set<std::string> active(std::optional<std::size_t> cutoff = std::nullopt) const {
    std::size_t n = std::min(cutoff.value_or(cutoff_length), entries.size());
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.insert(entries[i].function_name);
    return names;
  }

  friend bool operator==(const StopWordList&, const StopWordList&) = default;
};

/// Label-free cutoff used by derive_stop_words: names at or above this score
/// are active until a precision curve picks a better length.
inline constexpr double kDefaultStopScore = 0.5;

/// score(f) = backtrace document frequency * (1 - exception document frequency).
inline StopWordList derive_stop_words(std::span<const CrashDump> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "stop-word derivation needs at least one dump");
  std::map<std::string, std::size_t> in_backtrace, in_exception;
  for (const auto& dump : corpus) {
    std::set<std::string> bt, ex;
    for (const auto& f : dump.backtrace_frames) bt.insert(f.function_name);
    for (const auto& f : dump.exception_frames) ex.insert(f.function_name);
    for (const auto& name : bt) ++in_backtrace[name];
    for (const auto& name : ex) {
      ++in_exception[name];
      in_backtrace.try_emplace(name, 0);
    }
  }
  const double total = static_cast<double>(corpus.size());
  StopWordList list;
  for (const auto& [name, bt_count] : in_backtrace) {
    auto ex = in_exception.find(name);
    double ex_frac = ex == in_exception.end() ? 0.0 : static_cast<double>(ex->second) / total;
    list.entries.push_back({name, (static_cast<double>(bt_count) / total) * (1.0 - ex_frac)});
  }
  std::sort(list.entries.begin(), list.entries.end(), [](const StopWord& a, const StopWord& b) {
    return a.score != b.score ? a.score > b.score : a.function_name < b.function_name;
  });
  list.cutoff_length = static_cast<std::size_t>(
      std::count_if(list.entries.begin(), list.entries.end(), [](const StopWord& w) { return w.score >= kDefaultStopScore; }));
  return list;
}

/// Drops frames whose function is among the first `cutoff` entries (the
/// list's own cutoff by default). Survivors keep their order and indices.
inline std::vector<StackFrame> filter_stop_words(std::span<const StackFrame> frames, const StopWordList& list,
                                                 std::optional<std::size_t> cutoff = std::nullopt) {
  const auto stop = list.active(cutoff);
  std::vector<StackFrame> kept;
  kept.reserve(frames.size());
  for (const auto& f : frames)
    if (!stop.count(f.function_name)) kept.push_back(f);
  return kept;
}

struct PrecisionPoint {
  std::size_t cutoff = 0;
  double precision = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

/// Precision of the thresholded model at every stop-list prefix length
/// 0..max_length (the whole list by default). A pair whose stack filters down
/// to nothing scores 0. With no predicted duplicates precision is reported as 0.
inline std::vector<PrecisionPoint> precision_curve(std::span<const LabeledPair> pairs,
                                                   const std::map<std::string, CrashDump>& dumps,
                                                   const ComponentMap& map, const StopWordList& list,
                                                   const ModelParams& params,
                                                   std::optional<std::size_t> max_length = std::nullopt) {
  const std::size_t last = std::min(max_length.value_or(list.entries.size()), list.entries.size());
  auto lookup = [&](const std::string& id) -> const CrashDump& {
    auto it = dumps.find(id);
    if (it == dumps.end()) throw Error(ErrorCode::FormatError, "pair references unknown dump '" + id + "'");
    return it->second;
  };

  std::vector<PrecisionPoint> curve;
  for (std::size_t cutoff = 0; cutoff <= last; ++cutoff) {
    std::map<std::string, std::optional<ComponentSequence>> sequences;
    auto sequence_of = [&](const std::string& id) -> const std::optional<ComponentSequence>& {
      auto it = sequences.find(id);
      if (it != sequences.end()) return it->second;
      const CrashDump& dump = lookup(id);
      auto kept = filter_stop_words(dump.backtrace_frames, list, cutoff);
      std::optional<ComponentSequence> seq;
      if (!kept.empty()) seq = to_component_sequence(std::span<const StackFrame>(kept), map, id);
      return sequences.emplace(id, std::move(seq)).first->second;
    };
    PrecisionPoint point;
    point.cutoff = cutoff;
    for (const auto& pair : pairs) {
      const auto& a = sequence_of(pair.dump_id_a);
      const auto& b = sequence_of(pair.dump_id_b);
      const Score value = (a && b) ? similarity(*a, *b, params).value : 0.0L;
      if (value < params.threshold) continue;
      if (pair.duplicate()) ++point.true_positives;
      else ++point.false_positives;
    }
    std::size_t predicted = point.true_positives + point.false_positives;
    point.precision = predicted == 0 ? 0.0 : static_cast<double>(point.true_positives) / static_cast<double>(predicted);
    curve.push_back(point);
  }
  return curve;
}

inline constexpr double kPlateauGain = 0.001;
inline constexpr std::size_t kPlateauWindow = 3;

/// First cutoff whose precision gain over the next three lengths stays below
/// 0.001. The last point of the curve qualifies trivially.
inline std::size_t plateau_cutoff(std::span<const PrecisionPoint> curve) {
  if (curve.empty()) return 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    double best_ahead = curve[i].precision;
    for (std::size_t k = 1; k <= kPlateauWindow && i + k < curve.size(); ++k)
      best_ahead = std::max(best_ahead, curve[i + k].precision);
    if (best_ahead - curve[i].precision < kPlateauGain) return curve[i].cutoff;
  }
  return curve.back().cutoff;
}

inline std::string write_stop_words(const StopWordList& list) {
  std::string out = "#cutoff: " + std::to_string(list.cutoff_length) + "\n";
  for (const auto& w : list.entries) out += w.function_name + "\t" + text::format_double(w.score) + "\n";
  return out;
}

inline StopWordList read_stop_words(std::string_view content) {
  StopWordList list;
  bool seen_cutoff = false;
  std::size_t line_no = 0;
  for (std::string_view line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    if (text::starts_with(line, "#cutoff:")) {
      auto value = text::parse_double(line.substr(8));
      if (!value || *value < 0 || *value != static_cast<double>(static_cast<std::size_t>(*value)))
        throw Error(ErrorCode::FormatError, "stop-word line " + std::to_string(line_no) + ": bad cutoff");
      list.cutoff_length = static_cast<std::size_t>(*value);
      seen_cutoff = true;
      continue;
    }
    if (text::starts_with(line, "#")) continue;
    auto fields = text::split(line, '\t');
    std::optional<double> score = fields.size() == 2 ? text::parse_double(fields[1]) : std::nullopt;
    if (!score || fields[0].empty())
      throw Error(ErrorCode::FormatError, "stop-word line " + std::to_string(line_no) + ": expected 'name<TAB>score'");
    list.entries.push_back({std::string(fields[0]), *score});
  }
  if (!seen_cutoff) throw Error(ErrorCode::FormatError, "stop-word file lacks '#cutoff: L' header");
  if (list.cutoff_length > list.entries.size())
    throw Error(ErrorCode::FormatError, "stop-word cutoff exceeds list length");
  return list;
}

}  // namespace kdetector
