#pragma once

// Online triage. An incoming dump runs through parse -> clean -> stop-word
// filter -> sequence, is scored against recent stored failures, and is then
// either bound to an existing bug (Duplicate) or filed as a new one (New).

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kdetector/dump_parser.hpp"
#include "kdetector/error.hpp"
#include "kdetector/knowledge_miner.hpp"
#include "kdetector/model_params.hpp"
#include "kdetector/sequencer.hpp"
#include "kdetector/similarity.hpp"
#include "kdetector/stopwords.hpp"
#include "kdetector/text.hpp"
#include "kdetector/trainer.hpp"

namespace kdetector {

struct StoredFailure {
  FailureRecord record;
  ComponentSequence sequence;
};

using StoredFailurePtr = std::shared_ptr<const StoredFailure>;

/// Persistence behind a FailureStore. A remote tracker client would
/// implement the same two calls.
class BugStoreBackend {
 public:
  virtual ~BugStoreBackend() = default;
  virtual std::vector<StoredFailure> load() = 0;
  virtual void append(const StoredFailure& failure) = 0;
};

namespace detail {

inline nlohmann::json record_to_json(const FailureRecord& r) {
  nlohmann::json j;
  j["bug_id"] = to_string(r.bug_id);
  j["dump_id"] = r.dump_id;
  j["resolution"] = r.resolution;
  j["creation_time"] = text::format_time(r.creation_time);
  j["dupe_of"] = r.dupe_of ? nlohmann::json(to_string(*r.dupe_of)) : nlohmann::json(nullptr);
  j["dump_path"] = r.dump_path;
  j["top_component"] = r.top_component;
  return j;
}

inline FailureRecord record_from_json(const nlohmann::json& j) {
  FailureRecord r;
  auto bug = parse_bug_id(j.at("bug_id").get<std::string>());
  if (!bug) throw Error(ErrorCode::FormatError, "bad bug_id in store record");
  r.bug_id = *bug;
  r.dump_id = j.at("dump_id").get<std::string>();
  r.resolution = j.value("resolution", "");
  auto t = text::parse_time(j.at("creation_time").get<std::string>());
  if (!t) throw Error(ErrorCode::FormatError, "bad creation_time for " + to_string(r.bug_id));
  r.creation_time = *t;
  if (j.contains("dupe_of") && !j["dupe_of"].is_null()) {
    auto d = parse_bug_id(j["dupe_of"].get<std::string>());
    if (!d) throw Error(ErrorCode::FormatError, "bad dupe_of for " + to_string(r.bug_id));
    r.dupe_of = *d;
  }
  r.dump_path = j.value("dump_path", "");
  r.top_component = j.value("top_component", "");
  return r;
}

inline nlohmann::json sequence_to_json(const ComponentSequence& s) {
  nlohmann::json occ = nlohmann::json::array();
  for (const auto& o : s.occurrences) occ.push_back({{"component", o.component}, {"functions", o.functions}});
  return {{"dump_id", s.dump_id}, {"occurrences", occ}};
}

inline ComponentSequence sequence_from_json(const nlohmann::json& j) {
  ComponentSequence s;
  s.dump_id = j.at("dump_id").get<std::string>();
  for (const auto& o : j.at("occurrences"))
    s.occurrences.push_back({o.at("component").get<std::string>(), s.occurrences.size(),
                             o.at("functions").get<std::vector<std::string>>()});
  return s;
}

}  // namespace detail

/// Directory of two JSON-lines files: `bugs.jsonl` (one bug record per line)
/// and `sequences.jsonl` (the component sequence of each record's dump).
class FileBugStore final : public BugStoreBackend {
 public:
  explicit FileBugStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::vector<StoredFailure> load() override {
    std::vector<StoredFailure> out;
    if (!std::filesystem::exists(bugs_path())) return out;
    std::unordered_map<std::string, ComponentSequence> sequences;
    const std::string sequence_lines =
        std::filesystem::exists(sequences_path()) ? text::read_file(sequences_path().string()) : std::string();
    for (auto line : text::split_lines(sequence_lines)) {
      if (text::trim(line).empty()) continue;
      auto s = detail::sequence_from_json(parse_line(line));
      sequences[s.dump_id] = std::move(s);
    }
    const std::string bug_lines = text::read_file(bugs_path().string());
    for (auto line : text::split_lines(bug_lines)) {
      if (text::trim(line).empty()) continue;
      StoredFailure f;
      f.record = detail::record_from_json(parse_line(line));
      auto it = sequences.find(f.record.dump_id);
      if (it == sequences.end())
        throw Error(ErrorCode::FormatError, "bug store has no sequence for dump '" + f.record.dump_id + "'");
      f.sequence = it->second;
      out.push_back(std::move(f));
    }
    return out;
  }

  void append(const StoredFailure& failure) override {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    append_line(sequences_path(), detail::sequence_to_json(failure.sequence).dump());
    append_line(bugs_path(), detail::record_to_json(failure.record).dump());
  }

  std::filesystem::path bugs_path() const { return dir_ / "bugs.jsonl"; }
  std::filesystem::path sequences_path() const { return dir_ / "sequences.jsonl"; }

 private:
  static nlohmann::json parse_line(std::string_view line) {
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, std::string("bug store line: ") + e.what());
    }
  }

  static void append_line(const std::filesystem::path& path, const std::string& line) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::StoreWriteError, "cannot open '" + path.string() + "'");
    out << line << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::StoreWriteError, "write to '" + path.string() + "' failed");
  }

  std::filesystem::path dir_;
};

/// Append-only log of failures. Appends are serialized; readers work on a
/// snapshot of immutable entries.
class FailureStore {
 public:
  explicit FailureStore(std::unique_ptr<BugStoreBackend> backend = nullptr) : backend_(std::move(backend)) {
    if (!backend_) return;
    for (auto& f : backend_->load()) insert(std::make_shared<const StoredFailure>(std::move(f)));
  }

  std::vector<StoredFailurePtr> snapshot() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

  bool contains(const std::string& dump_id) const {
    std::lock_guard lock(mutex_);
    return by_dump_.count(dump_id) > 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  /// Assigns the next bug id to `record` and appends it.
  StoredFailurePtr append(FailureRecord record, ComponentSequence sequence) {
    std::lock_guard lock(mutex_);
    if (by_dump_.count(record.dump_id))
      throw Error(ErrorCode::DuplicateDumpId, "dump '" + record.dump_id + "' is already stored");
    record.bug_id = BugId{next_id_};
    if (record.dupe_of && *record.dupe_of == record.bug_id) record.dupe_of.reset();
    auto entry = std::make_shared<const StoredFailure>(StoredFailure{std::move(record), std::move(sequence)});
    if (backend_) backend_->append(*entry);
    insert_locked(entry);
    return entry;
  }

 private:
  void insert(StoredFailurePtr entry) {
    std::lock_guard lock(mutex_);
    if (by_dump_.count(entry->record.dump_id))
      throw Error(ErrorCode::DuplicateDumpId, "bug store repeats dump '" + entry->record.dump_id + "'");
    insert_locked(std::move(entry));
  }

  void insert_locked(StoredFailurePtr entry) {
    next_id_ = std::max(next_id_, entry->record.bug_id.value + 1);
    by_dump_.emplace(entry->record.dump_id, entries_.size());
    entries_.push_back(std::move(entry));
  }

  mutable std::mutex mutex_;
  std::unique_ptr<BugStoreBackend> backend_;
  std::vector<StoredFailurePtr> entries_;
  std::unordered_map<std::string, std::size_t> by_dump_;
  std::uint64_t next_id_ = 1;
};

/// Which stored failures count as "recent".
struct RecencyWindow {
  enum class Kind { Days, LastRecords, All };
  Kind kind = Kind::Days;
  std::size_t amount = 30;

  static RecencyWindow days(std::size_t d) { return {Kind::Days, d}; }
  static RecencyWindow last_records(std::size_t k) { return {Kind::LastRecords, k}; }
  static RecencyWindow all() { return {Kind::All, 0}; }
};

enum class Verdict { Duplicate, New };

inline std::string_view to_string(Verdict v) { return v == Verdict::Duplicate ? "duplicate" : "new"; }

struct DetectionResult {
  Verdict verdict = Verdict::New;
  /// Duplicate: the canonical bug bound to. New: the filed bug, once filed.
  std::optional<BugId> bug_id;
  double score = 0.0;
  std::optional<std::string> matched_dump_id;
  std::size_t candidates_considered = 0;
  ModelParams params_used;
};

/// A dump that went through the pipeline but is not stored yet.
struct PreparedFailure {
  std::string dump_id;
  std::string dump_path;
  ComponentSequence sequence;
};

using Clock = std::function<text::TimePoint()>;

inline Clock system_clock() {
  return [] { return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()); };
}

class Detector {
 public:
  Detector(FailureStore& store, ComponentMap map, StopWordList stop_words, Clock clock = system_clock())
      : store_(store), map_(std::move(map)), stop_words_(std::move(stop_words)), clock_(std::move(clock)) {}

  PreparedFailure prepare(std::string_view dump_text, std::string_view fallback_id = {},
                          std::string dump_path = {}) const {
    CrashDump dump = parse_dump(dump_text, fallback_id);
    auto kept = filter_stop_words(dump.backtrace_frames, stop_words_);
    if (kept.empty())
      throw Error(ErrorCode::EmptyStack, "every frame of dump '" + dump.dump_id + "' is a stop word");
    PreparedFailure out;
    out.dump_id = dump.dump_id;
    out.dump_path = std::move(dump_path);
    out.sequence = to_component_sequence(std::span<const StackFrame>(kept), map_, dump.dump_id);
    return out;
  }

  /// Runs the pipeline and stores the failure as its own bug, optionally
  /// marked as a duplicate of `dupe_of`.
  StoredFailurePtr ingest(std::string_view dump_text, std::string_view fallback_id = {}, std::string dump_path = {},
                          std::optional<BugId> dupe_of = std::nullopt) {
    PreparedFailure prepared = prepare(dump_text, fallback_id, std::move(dump_path));
    return store(prepared, dupe_of, dupe_of ? "DUPLICATE" : "");
  }

  DetectionResult detect(const ComponentSequence& sequence, const ModelParams& params,
                         const RecencyWindow& window = {}) const {
    params.validate();
    DetectionResult result;
    result.params_used = params;
    const auto snapshot = store_.snapshot();
    if (snapshot.empty() || sequence.empty()) return result;

    std::vector<FailureRecord> records;
    records.reserve(snapshot.size());
    for (const auto& e : snapshot) records.push_back(e->record);
    const Grouping grouping = build_groups(records);

    std::size_t begin = 0;
    std::optional<text::TimePoint> oldest;
    if (window.kind == RecencyWindow::Kind::LastRecords)
      begin = snapshot.size() > window.amount ? snapshot.size() - window.amount : 0;
    else if (window.kind == RecencyWindow::Kind::Days)
      oldest = clock_() - std::chrono::days(static_cast<long>(window.amount));

    const StoredFailure* best = nullptr;
    Score best_score = -1.0L;
    for (std::size_t i = begin; i < snapshot.size(); ++i) {
      const StoredFailure& candidate = *snapshot[i];
      if (oldest && candidate.record.creation_time < *oldest) continue;
      ++result.candidates_considered;
      const Score value = similarity(sequence, candidate.sequence, params).value;
      bool wins = !best || value > best_score ||
                  (value == best_score && (candidate.record.creation_time > best->record.creation_time ||
                                           (candidate.record.creation_time == best->record.creation_time &&
                                            candidate.record.bug_id < best->record.bug_id)));
      if (wins) {
        best = &candidate;
        best_score = value;
      }
    }
    if (!best) return result;
    result.score = static_cast<double>(best_score);
    result.matched_dump_id = best->record.dump_id;
    if (best_score >= params.threshold) {
      result.verdict = Verdict::Duplicate;
      result.bug_id = grouping.canonical(best->record.bug_id);
    }
    return result;
  }

  /// Duplicate: stores the failure with dupe_of set to the bound bug.
  /// New: files it as a fresh bug and records the new id in the result.
  StoredFailurePtr bind_or_file(const PreparedFailure& failure, DetectionResult& result) {
    if (result.verdict == Verdict::Duplicate) return store(failure, result.bug_id, "DUPLICATE");
    auto entry = store(failure, std::nullopt, "");
    result.bug_id = entry->record.bug_id;
    return entry;
  }

  const ComponentMap& component_map() const { return map_; }
  const StopWordList& stop_words() const { return stop_words_; }

 private:
  StoredFailurePtr store(const PreparedFailure& failure, std::optional<BugId> dupe_of, std::string resolution) {
    FailureRecord record;
    record.dump_id = failure.dump_id;
    record.resolution = std::move(resolution);
    record.creation_time = clock_();
    record.dupe_of = dupe_of;
    record.top_component = failure.sequence.top_component();
    record.dump_path = failure.dump_path;
    return store_.append(std::move(record), failure.sequence);
  }

  FailureStore& store_;
  ComponentMap map_;
  StopWordList stop_words_;
  Clock clock_;
};

/// One-line JSON report of a detection, for standard output.
inline std::string format_detection(const std::string& dump_id, const DetectionResult& r, bool filed) {
  nlohmann::json j;
  j["dump_id"] = dump_id;
  j["verdict"] = to_string(r.verdict);
  j["bug_id"] = r.bug_id ? nlohmann::json(to_string(*r.bug_id)) : nlohmann::json(nullptr);
  j["score"] = r.score;
  j["matched_dump_id"] = r.matched_dump_id ? nlohmann::json(*r.matched_dump_id) : nlohmann::json(nullptr);
  j["candidates_considered"] = r.candidates_considered;
  j["params"] = {{"m", r.params_used.m}, {"n", r.params_used.n}, {"threshold", r.params_used.threshold}};
  j["filed"] = filed;
  return j.dump();
}

}  // namespace kdetector
