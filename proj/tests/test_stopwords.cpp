#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "kdetector/stopwords.hpp"
#include "kdetector/text.hpp"

using namespace kdetector;

namespace {

CrashDump dump_of(const std::string& id, const std::vector<std::string>& exception, const std::vector<std::string>& backtrace) {
  CrashDump d;
  d.dump_id = id;
  for (std::size_t i = 0; i < exception.size(); ++i) d.exception_frames.push_back({i, exception[i], exception[i]});
  for (std::size_t i = 0; i < backtrace.size(); ++i) d.backtrace_frames.push_back({i, backtrace[i], backtrace[i]});
  return d;
}

std::vector<StackFrame> frames_of(const std::vector<std::string>& names) {
  std::vector<StackFrame> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({i, names[i], names[i]});
  return out;
}

std::vector<std::string> names_of(const std::vector<StackFrame>& frames) {
  std::vector<std::string> out;
  for (const auto& f : frames) out.push_back(f.function_name);
  return out;
}

double score_of(const StopWordList& list, const std::string& name) {
  for (const auto& w : list.entries)
    if (w.function_name == name) return w.score;
  return -1.0;
}

}  // namespace

TEST(DeriveStopWords, ScoreDefinition) {
  std::vector<CrashDump> corpus{
      dump_of("1", {"x"}, {"top", "x", "y", "bottom"}),
      dump_of("2", {"y"}, {"top", "y", "bottom"}),
      dump_of("3", {"x", "only_ex"}, {"top", "x", "bottom"}),
      dump_of("4", {"z"}, {"top", "z"}),
  };
  auto list = derive_stop_words(corpus);
  EXPECT_DOUBLE_EQ(score_of(list, "top"), 1.0);
  EXPECT_DOUBLE_EQ(score_of(list, "bottom"), 0.75);
  EXPECT_DOUBLE_EQ(score_of(list, "x"), 0.5 * 0.5);
  EXPECT_DOUBLE_EQ(score_of(list, "y"), 0.5 * 0.75);
  EXPECT_DOUBLE_EQ(score_of(list, "only_ex"), 0.0);
  EXPECT_EQ(list.entries.front().function_name, "top");
  EXPECT_EQ(list.cutoff_length, 2u);
}

TEST(DeriveStopWords, SortedByScoreThenName) {
  std::vector<CrashDump> corpus{dump_of("1", {}, {"b", "a", "c"}), dump_of("2", {}, {"c", "a", "b"})};
  auto list = derive_stop_words(corpus);
  ASSERT_EQ(list.entries.size(), 3u);
  EXPECT_EQ(list.entries[0].function_name, "a");
  EXPECT_EQ(list.entries[1].function_name, "b");
  EXPECT_EQ(list.entries[2].function_name, "c");
}

TEST(DeriveStopWords, EmptyCorpus) {
  try {
    derive_stop_words(std::vector<CrashDump>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
}

TEST(DeriveStopWords, ScaffoldFramesOfFig2StyleDumpTopTheList) {
  std::vector<CrashDump> corpus{parse_dump(text::read_file(std::string(KDETECTOR_FIXTURES) + "/fig2.dump"), "fig2")};
  const char* middles[][3] = {{"a::f", "a::g", "a::h"}, {"b::f", "b::g", "b::h"}, {"c::f", "a::g", "c::h"}};
  int k = 0;
  for (const auto& middle : middles) {
    std::string content = "[HEADER]\npid: " + std::to_string(++k) +
                          "\ntime: 2019-07-04T10:00:00Z\n[CRASH_STACK]\nexception:\n0: void " + middle[0] +
                          "() + 0x1\nbacktrace:\n0: void rt::CrashHandler::onSignal(int) + 0x24\n";
    for (int i = 0; i < 3; ++i) content += std::to_string(i + 1) + ": void " + middle[i] + "() + 0x2\n";
    content += "4: void rt::Thread::run() + 0x5\n";
    corpus.push_back(parse_dump(content));
  }
  auto list = derive_stop_words(corpus);
  ASSERT_GE(list.entries.size(), 2u);
  std::vector<std::string> top{list.entries[0].function_name, list.entries[1].function_name};
  std::sort(top.begin(), top.end());
  // Backtrace frames 0 and 9 of the fixture.
  EXPECT_EQ(top, (std::vector<std::string>{corpus[0].backtrace_frames.front().function_name,
                                           corpus[0].backtrace_frames.back().function_name}));
  EXPECT_DOUBLE_EQ(list.entries[1].score, 1.0);
  EXPECT_LT(list.entries[2].score, 1.0);
}

TEST(DeriveStopWords, PermutationInvariant) {
  std::mt19937 rng(17);
  std::vector<CrashDump> corpus;
  for (int i = 0; i < 25; ++i) {
    std::vector<std::string> ex, bt;
    for (int k = 0; k < 1 + static_cast<int>(rng() % 3); ++k) ex.push_back("f" + std::to_string(rng() % 10));
    for (int k = 0; k < 2 + static_cast<int>(rng() % 6); ++k) bt.push_back("f" + std::to_string(rng() % 10));
    corpus.push_back(dump_of(std::to_string(i), ex, bt));
  }
  auto reference = derive_stop_words(corpus);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(corpus.begin(), corpus.end(), rng);
    EXPECT_EQ(derive_stop_words(corpus), reference);
  }
}

TEST(FilterStopWords, KeepsOrderAndIndices) {
  StopWordList list{{{"f1", 0.9}}, 1};
  auto kept = filter_stop_words(frames_of({"f0", "f1", "f2"}), list);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].function_name, "f0");
  EXPECT_EQ(kept[0].index, 0u);
  EXPECT_EQ(kept[1].function_name, "f2");
  EXPECT_EQ(kept[1].index, 2u);
}

TEST(FilterStopWords, AllStopWordsLeavesNothing) {
  StopWordList list{{{"a", 1.0}, {"b", 1.0}}, 2};
  EXPECT_TRUE(filter_stop_words(frames_of({"a", "b", "a"}), list).empty());
}

TEST(FilterStopWords, ExplicitCutoffOverridesListCutoff) {
  StopWordList list{{{"a", 1.0}, {"b", 0.9}, {"c", 0.1}}, 1};
  auto frames = frames_of({"a", "b", "c", "d"});
  EXPECT_EQ(names_of(filter_stop_words(frames, list)), (std::vector<std::string>{"b", "c", "d"}));
  EXPECT_EQ(names_of(filter_stop_words(frames, list, 3)), std::vector<std::string>{"d"});
  EXPECT_EQ(names_of(filter_stop_words(frames, list, 99)), std::vector<std::string>{"d"});
}

TEST(FilterStopWords, IdentityAtZeroAndMonotoneRemoval) {
  std::mt19937 rng(23);
  StopWordList list;
  for (int i = 0; i < 8; ++i) list.entries.push_back({"f" + std::to_string(i), 1.0 - i / 10.0});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> names(rng() % 15);
    for (auto& n : names) n = "f" + std::to_string(rng() % 12);
    auto frames = frames_of(names);
    EXPECT_EQ(filter_stop_words(frames, list, 0), frames);
    for (std::size_t cut = 0; cut < list.entries.size(); ++cut) {
      auto wide = filter_stop_words(frames, list, cut);
      auto narrow = filter_stop_words(frames, list, cut + 1);
      EXPECT_TRUE(std::includes(wide.begin(), wide.end(), narrow.begin(), narrow.end(),
                                [](const StackFrame& a, const StackFrame& b) { return a.index < b.index; }));
    }
  }
}

TEST(PrecisionCurve, ZeroCutoffEqualsUnfilteredEvaluation) {
  ComponentMap map;
  map.function_to_component = {{"s", "S"}, {"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"c1", "C"}};
  std::map<std::string, CrashDump> dumps{
      {"d1", dump_of("d1", {}, {"s", "a1", "b1"})},
      {"d2", dump_of("d2", {}, {"s", "a2", "b1"})},
      {"d3", dump_of("d3", {}, {"s", "c1"})},
  };
  StopWordList list{{{"s", 1.0}}, 1};
  TrainingSet pairs{{"d1", "d2", PairLabel::Duplicate}, {"d1", "d3", PairLabel::NonDuplicate},
                    {"d2", "d3", PairLabel::NonDuplicate}};
  ModelParams params{1.0, 1.0, 0.3};
  auto curve = precision_curve(pairs, dumps, map, list, params);
  ASSERT_EQ(curve.size(), 2u);

  // Direct evaluation without filtering.
  std::size_t tp = 0, fp = 0;
  for (const auto& pair : pairs) {
    auto seq = [&](const std::string& id) {
      return to_component_sequence(std::span<const StackFrame>(dumps.at(id).backtrace_frames), map, id);
    };
    if (similarity(seq(pair.dump_id_a), seq(pair.dump_id_b), params).value < params.threshold) continue;
    (pair.duplicate() ? tp : fp) += 1;
  }
  EXPECT_EQ(curve[0].true_positives, tp);
  EXPECT_EQ(curve[0].false_positives, fp);
  // The shared scaffold component makes every pair look alike until filtered.
  EXPECT_EQ(curve[0].false_positives, 2u);
  EXPECT_EQ(curve[1].false_positives, 0u);
  EXPECT_DOUBLE_EQ(curve[1].precision, 1.0);
  EXPECT_GE(curve[1].precision, curve[0].precision);
}

TEST(PrecisionCurve, FullyFilteredDumpScoresZero) {
  ComponentMap map;
  std::map<std::string, CrashDump> dumps{{"a", dump_of("a", {}, {"s"})}, {"b", dump_of("b", {}, {"s"})}};
  StopWordList list{{{"s", 1.0}}, 1};
  TrainingSet pairs{{"a", "b", PairLabel::Duplicate}};
  auto curve = precision_curve(pairs, dumps, map, list, {1.0, 1.0, 0.5});
  EXPECT_EQ(curve[0].true_positives, 1u);
  EXPECT_EQ(curve[1].true_positives, 0u);
  EXPECT_DOUBLE_EQ(curve[1].precision, 0.0);
}

TEST(PlateauCutoff, FirstStablePoint) {
  auto curve_of = [](std::vector<double> precisions) {
    std::vector<PrecisionPoint> curve;
    for (std::size_t i = 0; i < precisions.size(); ++i) curve.push_back({i, precisions[i], 0, 0});
    return curve;
  };
  EXPECT_EQ(plateau_cutoff(curve_of({0.5, 0.6, 0.7, 0.7, 0.7, 0.7})), 2u);
  // A dip followed by recovery inside the window is not a plateau.
  EXPECT_EQ(plateau_cutoff(curve_of({0.5, 0.5, 0.4, 0.6, 0.6, 0.6, 0.6})), 3u);
  EXPECT_EQ(plateau_cutoff(curve_of({0.8, 0.8005, 0.8009, 0.8})), 0u);
  EXPECT_EQ(plateau_cutoff(curve_of({0.1, 0.2, 0.3})), 2u);
  EXPECT_EQ(plateau_cutoff(std::vector<PrecisionPoint>{}), 0u);
}

TEST(StopWordFile, RoundTrip) {
  StopWordList list{{{"rt::Thread::run", 1.0}, {"rt::CrashHandler::onSignal", 0.975}, {"x::y", 0.1}}, 2};
  std::string content = write_stop_words(list);
  EXPECT_EQ(content.rfind("#cutoff: 2\n", 0), 0u);
  EXPECT_EQ(read_stop_words(content), list);
  EXPECT_THROW(read_stop_words("a\t0.5\n"), Error);
  EXPECT_THROW(read_stop_words("#cutoff: 3\na\t0.5\n"), Error);
  EXPECT_THROW(read_stop_words("#cutoff: 0\na 0.5\n"), Error);
}
