#pragma once

// Command-line front end. `run` is the whole program minus `main`, so the
// test suites can drive every subcommand in-process.
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kdetector/detector.hpp"
#include "kdetector/dump_parser.hpp"
#include "kdetector/error.hpp"
#include "kdetector/knowledge_miner.hpp"
#include "kdetector/labeled_pairs.hpp"
#include "kdetector/model_params.hpp"
#include "kdetector/stopwords.hpp"
#include "kdetector/synth.hpp"
#include "kdetector/text.hpp"
#include "kdetector/trainer.hpp"
#include "kdetector/workflow.hpp"

namespace kdetector::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct Config {
  std::string map_path = "component_map.tsv";
  std::string stopwords_path = "stopwords.tsv";
  std::string params_path = "params.txt";
  std::string store_path = "bugstore";
  std::string now;
  std::optional<std::size_t> window_days;
  std::optional<std::size_t> window_last;
  std::uint64_t seed = 0;
  std::optional<double> threshold;
};

namespace detail {

namespace fs = std::filesystem;

inline text::TimePoint resolve_now(const Config& cfg) {
  if (cfg.now.empty()) return system_clock()();
  auto t = text::parse_time(cfg.now);
  if (!t) throw Error(ErrorCode::FormatError, "--now expects YYYY-MM-DDTHH:MM:SSZ, got '" + cfg.now + "'");
  return *t;
}

inline RecencyWindow resolve_window(const Config& cfg) {
  if (cfg.window_last) return RecencyWindow::last_records(*cfg.window_last);
  return RecencyWindow::days(cfg.window_days.value_or(30));
}

inline ComponentMap load_map(const Config& cfg) { return read_component_map(text::read_file(cfg.map_path)); }

inline StopWordList load_stop_words(const Config& cfg) {
  return read_stop_words(text::read_file(cfg.stopwords_path));
}

inline ModelParams load_params(const Config& cfg) {
  ModelParams p = read_params(text::read_file(cfg.params_path));
  if (cfg.threshold) p.threshold = *cfg.threshold;
  p.validate();
  return p;
}

inline void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

struct PreparedCorpus {
  std::map<std::string, CrashDump> dumps;
  std::map<std::string, std::vector<std::string>> stacks;
  std::map<std::string, ComponentSequence> sequences;
};

inline PreparedCorpus prepare_corpus(const fs::path& dump_dir, const ComponentMap& map, const StopWordList& list) {
  PreparedCorpus c;
  c.dumps = load_dump_dir(dump_dir);
  c.stacks = filtered_stacks(c.dumps, list);
  c.sequences = sequence_stacks(c.stacks, map);
  return c;
}

inline int cmd_mine(const Config& cfg, const std::string& root, const std::string& index_path,
                    const std::string& out_path, const std::string& timestamp, std::ostream& out, std::ostream& err) {
  std::map<std::string, std::vector<std::string>> index;
  if (!index_path.empty()) index = load_function_index(text::read_file(index_path));
  MiningReport report = mine_source_tree(root, index);
  text::TimePoint stamp{};
  if (!timestamp.empty()) {
    auto t = text::parse_time(timestamp);
    if (!t) throw Error(ErrorCode::FormatError, "--timestamp expects YYYY-MM-DDTHH:MM:SSZ");
    stamp = *t;
  } else if (report.manifests.latest_mtime) {
    stamp = *report.manifests.latest_mtime;
  }
  const std::string target = out_path.empty() ? cfg.map_path : out_path;
  text::write_file(target, write_component_map(report.map, stamp));
  print_warnings(report.warnings, err);
  out << "manifests\t" << report.manifests.manifests.size() << "\n"
      << "files\t" << report.manifests.file_to_component.size() << "\n"
      << "unmapped_files\t" << report.manifests.unmapped_files.size() << "\n"
      << "functions\t" << report.map.function_count() << "\n"
      << "components\t" << report.map.component_count() << "\n"
      << "skipped_declaration_lines\t" << report.skipped_declaration_lines << "\n"
      << "written\t" << target << "\n";
  return kExitOk;
}

inline int cmd_stopwords(const Config& cfg, const std::string& corpus_dir, const std::string& out_path,
                         const std::string& pairs_path, std::optional<std::size_t> cutoff, std::ostream& out) {
  auto dumps = load_dump_dir(corpus_dir);
  auto corpus = dump_values(dumps);
  StopWordList list = derive_stop_words(corpus);
  if (!pairs_path.empty()) {
    auto pairs = read_training_set(text::read_file(pairs_path));
    ModelParams params = fs::exists(cfg.params_path) ? load_params(cfg) : ModelParams{};
    if (cfg.threshold) params.threshold = *cfg.threshold;
    auto curve = precision_curve(pairs, dumps, load_map(cfg), list, params);
    out << "cutoff\tprecision\n";
    for (const auto& p : curve) out << p.cutoff << "\t" << text::format_fixed(p.precision, 6) << "\n";
    list.cutoff_length = plateau_cutoff(curve);
  }
  if (cutoff) {
    if (*cutoff > list.entries.size()) throw Error(ErrorCode::FormatError, "--cutoff exceeds the derived list length");
    list.cutoff_length = *cutoff;
  }
  const std::string target = out_path.empty() ? cfg.stopwords_path : out_path;
  text::write_file(target, write_stop_words(list));
  out << "dumps\t" << corpus.size() << "\n"
      << "entries\t" << list.entries.size() << "\n"
      << "cutoff\t" << list.cutoff_length << "\n";
  for (std::size_t i = 0; i < list.cutoff_length; ++i)
    out << "stop\t" << list.entries[i].function_name << "\t" << text::format_fixed(list.entries[i].score, 6) << "\n";
  out << "written\t" << target << "\n";
  return kExitOk;
}

inline int cmd_train(const Config& cfg, const std::string& pairs_path, const std::string& dump_dir,
                     const std::string& report_path, const std::string& out_path, std::ostream& out) {
  auto pairs = read_training_set(text::read_file(pairs_path));
  auto corpus = prepare_corpus(dump_dir, load_map(cfg), load_stop_words(cfg));
  auto features = extract_features(pairs, corpus.sequences);
  TuningResult tuned = tune_parameters(features);
  tuned.params.threshold = cfg.threshold ? *cfg.threshold : select_threshold(features, tuned.params);
  const std::string target = out_path.empty() ? cfg.params_path : out_path;
  text::write_file(target, write_params(tuned.params));
  if (!report_path.empty()) text::write_file(report_path, write_tuning_report(tuned));
  out << "pairs\t" << pairs.size() << "\n"
      << "grid_points\t" << tuned.grid.size() << "\n"
      << "m\t" << text::format_fixed(tuned.params.m, 1) << "\n"
      << "n\t" << text::format_fixed(tuned.params.n, 1) << "\n"
      << "threshold\t" << text::format_double(tuned.params.threshold) << "\n"
      << "auc\t" << text::format_fixed(tuned.best_auc, 6) << "\n"
      << "written\t" << target << "\n";
  return kExitOk;
}

inline int cmd_evaluate(const Config& cfg, const std::string& pairs_path, const std::string& dump_dir,
                        std::ostream& out) {
  auto pairs = read_training_set(text::read_file(pairs_path));
  auto corpus = prepare_corpus(dump_dir, load_map(cfg), load_stop_words(cfg));
  auto rows = evaluate_methods(pairs, corpus.stacks, corpus.sequences, load_params(cfg));
  out << format_evaluation(rows);
  return kExitOk;
}

inline Detector make_detector(const Config& cfg, FailureStore& store) {
  const text::TimePoint now = resolve_now(cfg);
  return Detector(store, load_map(cfg), load_stop_words(cfg), [now] { return now; });
}

inline int cmd_ingest(const Config& cfg, const std::string& dump_path, const std::string& dupe_of, std::ostream& out) {
  FailureStore store(std::make_unique<FileBugStore>(cfg.store_path));
  Detector detector = make_detector(cfg, store);
  std::optional<BugId> target;
  if (!dupe_of.empty()) {
    target = parse_bug_id(dupe_of);
    if (!target) throw Error(ErrorCode::FormatError, "--dupe-of expects a bug id like b42");
  }
  auto entry = detector.ingest(text::read_file(dump_path), fs::path(dump_path).stem().string(), dump_path, target);
  out << kdetector::detail::record_to_json(entry->record).dump() << "\n";
  return kExitOk;
}

inline int cmd_detect(const Config& cfg, const std::string& dump_path, bool no_file, std::ostream& out) {
  FailureStore store(std::make_unique<FileBugStore>(cfg.store_path));
  Detector detector = make_detector(cfg, store);
  PreparedFailure prepared = detector.prepare(text::read_file(dump_path), fs::path(dump_path).stem().string(), dump_path);
  DetectionResult result = detector.detect(prepared.sequence, load_params(cfg), resolve_window(cfg));
  bool filed = false;
  // A dump that is already stored is reported but not filed again.
  if (!no_file && !store.contains(prepared.dump_id)) {
    detector.bind_or_file(prepared, result);
    filed = true;
  }
  out << format_detection(prepared.dump_id, result, filed) << "\n";
  return kExitOk;
}

inline int cmd_synth(const Config& cfg, const synth::Options& options, const std::string& out_dir, double train_ratio,
                     std::ostream& out, std::ostream& err) {
  synth::Corpus corpus = synth::generate(options);
  fs::create_directories(out_dir);
  synth::write_corpus(corpus, out_dir);

  // Pair sampling needs top components, hence the same mining and stop-word
  // pipeline the other subcommands run.
  MiningReport mined = mine_source_tree(fs::path(out_dir) / "src");
  auto dumps = load_dump_dir(fs::path(out_dir) / "dumps");
  StopWordList list = derive_stop_words(dump_values(dumps));
  auto sequences = sequence_stacks(filtered_stacks(dumps, list), mined.map);
  auto records = records_from_groups(corpus.group_of, sequences);
  Grouping grouping = build_groups(records);
  auto [train_bugs, test_bugs] = split_by_group(grouping, train_ratio, cfg.seed);

  auto sample_side = [&](const std::set<BugId>& side, std::uint64_t seed) {
    std::vector<FailureRecord> subset;
    for (const auto& r : records)
      if (side.count(r.bug_id)) subset.push_back(r);
    SamplingResult s = sample_pairs(build_groups(subset), subset, {seed, NegativeMatch::TopComponent});
    print_warnings(s.warnings, err);
    return s.pairs;
  };
  TrainingSet train = sample_side(train_bugs, cfg.seed);
  TrainingSet test = sample_side(test_bugs, cfg.seed + 1);
  TrainingSet all = train;
  all.insert(all.end(), test.begin(), test.end());
  text::write_file((fs::path(out_dir) / "pairs.train.tsv").string(), write_training_set(train));
  text::write_file((fs::path(out_dir) / "pairs.test.tsv").string(), write_training_set(test));
  text::write_file((fs::path(out_dir) / "pairs.tsv").string(), write_training_set(all));
  out << "groups\t" << options.groups << "\n"
      << "dumps\t" << corpus.dumps.size() << "\n"
      << "train_pairs\t" << train.size() << "\n"
      << "test_pairs\t" << test.size() << "\n"
      << "written\t" << out_dir << "\n";
  return kExitOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Duplicate crash-failure detection toolkit", "kdetector"};
  app.set_config("--config", "", "Read options from a TOML/INI config file");
  app.require_subcommand(1);

  Config cfg;
  app.add_option("--map", cfg.map_path, "Component map snapshot")->capture_default_str();
  app.add_option("--stopwords", cfg.stopwords_path, "Stop-word list")->capture_default_str();
  app.add_option("--params", cfg.params_path, "Model parameters file")->capture_default_str();
  app.add_option("--store", cfg.store_path, "Bug store directory")->capture_default_str();
  app.add_option("--now", cfg.now, "Current time (ISO-8601 UTC); defaults to the system clock");
  auto* days_opt = app.add_option("--window-days", cfg.window_days, "Recency window in days (default 30)");
  app.add_option("--window-last", cfg.window_last, "Recency window as the last K records")->excludes(days_opt);
  app.add_option("--seed", cfg.seed, "Seed for sampling and splitting")->capture_default_str();
  app.add_option("--threshold", cfg.threshold, "Override the decision threshold")->check(CLI::Range(0.0, 1.0));

  std::string mine_root, mine_index, mine_out, mine_timestamp;
  auto* mine = app.add_subcommand("mine", "Mine a Function->Component map from a source tree");
  mine->add_option("src-root", mine_root, "Source tree root")->required()->check(CLI::ExistingDirectory);
  mine->add_option("--index", mine_index, "Precomputed function index (path<TAB>name)")->check(CLI::ExistingFile);
  mine->add_option("--out", mine_out, "Output path (defaults to --map)");
  mine->add_option("--timestamp", mine_timestamp, "Snapshot stamp (defaults to the newest mined file)");

  std::string sw_dir, sw_out, sw_pairs;
  std::optional<std::size_t> sw_cutoff;
  auto* stop = app.add_subcommand("stopwords", "Derive the stop-word list from a dump corpus");
  stop->add_option("corpus-dir", sw_dir, "Directory of .dump files")->required()->check(CLI::ExistingDirectory);
  stop->add_option("--out", sw_out, "Output path (defaults to --stopwords)");
  stop->add_option("--pairs", sw_pairs, "Labelled pairs; selects the cutoff by the precision plateau")
      ->check(CLI::ExistingFile);
  stop->add_option("--cutoff", sw_cutoff, "Explicit cutoff length");

  std::string train_pairs, train_dumps, train_report, train_out;
  auto* train = app.add_subcommand("train", "Tune (m, n) by AUC grid search and pick a threshold");
  train->add_option("pairs-file", train_pairs, "Labelled pairs")->required()->check(CLI::ExistingFile);
  train->add_option("--dumps", train_dumps, "Directory of .dump files")->required()->check(CLI::ExistingDirectory);
  train->add_option("--report", train_report, "Write the 441-point grid here");
  train->add_option("--out", train_out, "Output path (defaults to --params)");

  std::string eval_pairs, eval_dumps;
  auto* evaluate = app.add_subcommand("evaluate", "AUC of the model against both baselines");
  evaluate->add_option("pairs-file", eval_pairs, "Labelled pairs")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--dumps", eval_dumps, "Directory of .dump files")->required()->check(CLI::ExistingDirectory);

  std::string ingest_dump, ingest_dupe;
  auto* ingest = app.add_subcommand("ingest", "Store a dump as a failure record");
  ingest->add_option("dump", ingest_dump, "Dump file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--dupe-of", ingest_dupe, "Mark as duplicate of this bug (e.g. b42)");

  std::string detect_dump;
  bool detect_no_file = false;
  auto* detect = app.add_subcommand("detect", "Detect duplicates, then bind or file");
  detect->add_option("dump", detect_dump, "Dump file")->required()->check(CLI::ExistingFile);
  detect->add_flag("--no-file", detect_no_file, "Report only; leave the store untouched");

  synth::Options synth_opts;
  std::string synth_out = "synthetic";
  double synth_ratio = 0.5;
  auto* syn = app.add_subcommand("synth", "Generate a seeded synthetic corpus");
  syn->add_option("--groups", synth_opts.groups, "Number of duplicate groups")->capture_default_str();
  syn->add_option("--per-group", synth_opts.per_group, "Dumps per group")->capture_default_str();
  syn->add_option("--noise", synth_opts.noise, "Per-frame mutation probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  syn->add_option("--seed", synth_opts.seed, "Generator seed")->capture_default_str();
  syn->add_option("--components", synth_opts.components, "Number of components")->capture_default_str();
  syn->add_option("--top-components", synth_opts.top_components, "Components allowed on top of a stack")
      ->capture_default_str();
  syn->add_option("--train-ratio", synth_ratio, "Share of groups in the training split")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  syn->add_option("--out", synth_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*mine) return detail::cmd_mine(cfg, mine_root, mine_index, mine_out, mine_timestamp, out, err);
    if (*stop) return detail::cmd_stopwords(cfg, sw_dir, sw_out, sw_pairs, sw_cutoff, out);
    if (*train) return detail::cmd_train(cfg, train_pairs, train_dumps, train_report, train_out, out);
    if (*evaluate) return detail::cmd_evaluate(cfg, eval_pairs, eval_dumps, out);
    if (*ingest) return detail::cmd_ingest(cfg, ingest_dump, ingest_dupe, out);
    if (*detect) return detail::cmd_detect(cfg, detect_dump, detect_no_file, out);
    if (*syn) return detail::cmd_synth(cfg, synth_opts, synth_out, synth_ratio, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace kdetector::cli
