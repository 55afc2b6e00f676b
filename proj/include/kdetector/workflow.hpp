#pragma once

// Corpus-level glue shared by the CLI and the acceptance suite: loading dump
// directories, sequencing whole corpora, rebuilding bug history and the
// three-way AUC comparison.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdetector/dump_parser.hpp"
#include "kdetector/error.hpp"
#include "kdetector/knowledge_miner.hpp"
#include "kdetector/labeled_pairs.hpp"
#include "kdetector/sequencer.hpp"
#include "kdetector/similarity.hpp"
#include "kdetector/stopwords.hpp"
#include "kdetector/text.hpp"
#include "kdetector/trainer.hpp"

namespace kdetector {

/// Parses every `*.dump` file of `dir`; the file stem is the fallback id.
inline std::map<std::string, CrashDump> load_dump_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".dump") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::map<std::string, CrashDump> dumps;
  for (const auto& f : files) {
    CrashDump dump = parse_dump(text::read_file(f.string()), f.stem().string());
    std::string id = dump.dump_id;
    if (!dumps.emplace(id, std::move(dump)).second)
      throw Error(ErrorCode::DuplicateDumpId, "dump id '" + id + "' appears twice in '" + dir.string() + "'");
  }
  if (dumps.empty()) throw Error(ErrorCode::EmptyCorpus, "no .dump files in '" + dir.string() + "'");
  return dumps;
}

inline std::vector<CrashDump> dump_values(const std::map<std::string, CrashDump>& dumps) {
  std::vector<CrashDump> out;
  out.reserve(dumps.size());
  for (const auto& [id, d] : dumps) out.push_back(d);
  return out;
}

/// Stop-word filtered backtrace names per dump (dumps that filter to nothing
/// are left out).
inline std::map<std::string, std::vector<std::string>> filtered_stacks(const std::map<std::string, CrashDump>& dumps,
                                                                       const StopWordList& stop_words) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [id, dump] : dumps) {
    auto kept = filter_stop_words(dump.backtrace_frames, stop_words);
    if (kept.empty()) continue;
    auto& names = out[id];
    for (const auto& f : kept) names.push_back(f.function_name);
  }
  return out;
}

inline std::map<std::string, ComponentSequence> sequence_stacks(
    const std::map<std::string, std::vector<std::string>>& stacks, const ComponentMap& map) {
  std::map<std::string, ComponentSequence> out;
  for (const auto& [id, names] : stacks) out.emplace(id, to_component_sequence(std::span<const std::string>(names), map, id));
  return out;
}

/// Bug history for a labelled corpus: dumps in id order get bug ids b1, b2,
/// ...; within a group every dump is marked a duplicate of the group's first.
inline std::vector<FailureRecord> records_from_groups(const std::map<std::string, std::size_t>& group_of,
                                                      const std::map<std::string, ComponentSequence>& sequences) {
  std::vector<FailureRecord> records;
  std::map<std::size_t, BugId> first_in_group;
  std::uint64_t next = 1;
  for (const auto& [id, group] : group_of) {
    auto seq = sequences.find(id);
    if (seq == sequences.end()) continue;
    FailureRecord r;
    r.bug_id = BugId{next++};
    r.dump_id = id;
    r.top_component = seq->second.top_component();
    auto [it, inserted] = first_in_group.emplace(group, r.bug_id);
    if (!inserted) {
      r.dupe_of = it->second;
      r.resolution = "DUPLICATE";
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::map<std::string, std::size_t> read_groups_file(std::string_view content) {
  std::map<std::string, std::size_t> out;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty() || text::starts_with(line, "#")) continue;
    auto fields = text::split(line, '\t');
    auto group = fields.size() == 2 ? text::parse_double(fields[1]) : std::nullopt;
    if (!group || *group < 0) throw Error(ErrorCode::FormatError, "groups line " + std::to_string(line_no) + " malformed");
    out[std::string(fields[0])] = static_cast<std::size_t>(*group);
  }
  return out;
}

struct EvaluationRow {
  std::string method;
  double auc = 0.0;
};

/// AUC of the component model and of the two function-level baselines over
/// the same labelled pairs.
inline std::vector<EvaluationRow> evaluate_methods(std::span<const LabeledPair> pairs,
                                                   const std::map<std::string, std::vector<std::string>>& stacks,
                                                   const std::map<std::string, ComponentSequence>& sequences,
                                                   const ModelParams& params) {
  auto stack_of = [&](const std::string& id) -> const std::vector<std::string>& {
    auto it = stacks.find(id);
    if (it == stacks.end()) throw Error(ErrorCode::FormatError, "pair references unknown dump '" + id + "'");
    return it->second;
  };
  auto features = extract_features(pairs, sequences);
  std::vector<ScoredLabel> model = score_features(features, params), edit, prefix;
  for (const auto& p : pairs) {
    const auto& a = stack_of(p.dump_id_a);
    const auto& b = stack_of(p.dump_id_b);
    edit.push_back({baseline_edit_distance(std::span<const std::string>(a), std::span<const std::string>(b)), p.duplicate()});
    prefix.push_back({baseline_prefix_match(a, b), p.duplicate()});
  }
  return {{"kdetector", compute_auc(model)}, {"edit-distance", compute_auc(edit)}, {"prefix-match", compute_auc(prefix)}};
}

inline std::string format_evaluation(std::span<const EvaluationRow> rows) {
  std::string out = "method\tauc\n";
  for (const auto& r : rows) out += r.method + "\t" + text::format_fixed(r.auc, 6) + "\n";
  return out;
}

}  // namespace kdetector
