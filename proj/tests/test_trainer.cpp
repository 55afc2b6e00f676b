#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kdetector/trainer.hpp"
#include "oracles.hpp"

using namespace kdetector;

namespace {

FailureRecord record(std::uint64_t bug, std::optional<std::uint64_t> dupe = std::nullopt, std::string top = "T") {
  FailureRecord r;
  r.bug_id = BugId{bug};
  r.dump_id = "d" + std::to_string(bug);
  if (dupe) r.dupe_of = BugId{*dupe};
  r.top_component = std::move(top);
  return r;
}

std::vector<std::vector<std::uint64_t>> raw_groups(const Grouping& g) {
  std::vector<std::vector<std::uint64_t>> out;
  for (const auto& group : g.groups) {
    out.emplace_back();
    for (BugId b : group) out.back().push_back(b.value);
  }
  return out;
}

std::vector<ScoredLabel> labeled(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<ScoredLabel> out;
  for (double s : pos) out.push_back({s, true});
  for (double s : neg) out.push_back({s, false});
  return out;
}

std::vector<std::pair<double, bool>> as_pairs(const std::vector<ScoredLabel>& items) {
  std::vector<std::pair<double, bool>> out;
  for (const auto& s : items) out.emplace_back(s.score, s.positive);
  return out;
}

}  // namespace

TEST(BugIds, FormatAndParse) {
  EXPECT_EQ(to_string(BugId{42}), "b42");
  EXPECT_EQ(parse_bug_id("b42"), BugId{42});
  EXPECT_EQ(parse_bug_id("42"), std::nullopt);
  EXPECT_EQ(parse_bug_id("b"), std::nullopt);
  EXPECT_EQ(parse_bug_id("b4x"), std::nullopt);
}

TEST(BuildGroups, ChainsIntoOneGroup) {
  std::vector<FailureRecord> records{record(1, 2), record(2), record(3, 2)};
  auto g = build_groups(records);
  EXPECT_EQ(raw_groups(g), (std::vector<std::vector<std::uint64_t>>{{1, 2, 3}}));
  EXPECT_EQ(g.canonical(BugId{3}), BugId{1});
}

TEST(BuildGroups, NoLinksMeansSingletons) {
  std::vector<FailureRecord> records{record(3), record(1), record(2)};
  EXPECT_EQ(raw_groups(build_groups(records)), (std::vector<std::vector<std::uint64_t>>{{1}, {2}, {3}}));
}

TEST(BuildGroups, CycleIsOneGroup) {
  std::vector<FailureRecord> records{record(1, 2), record(2, 1)};
  EXPECT_EQ(raw_groups(build_groups(records)), (std::vector<std::vector<std::uint64_t>>{{1, 2}}));
}

TEST(BuildGroups, DanglingAndSelfLinksSkipped) {
  std::vector<FailureRecord> records{record(1, 99), record(2, 2), record(3)};
  auto g = build_groups(records);
  EXPECT_EQ(g.groups.size(), 3u);
  ASSERT_EQ(g.dangling.size(), 2u);
  EXPECT_EQ(g.dangling[0], std::make_pair(BugId{1}, BugId{99}));
}

TEST(BuildGroups, MatchesTransitiveClosure) {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<FailureRecord> records;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<std::uint64_t> dupe;
      if (rng() % 2) {
        std::size_t j = rng() % n;
        if (j != i) {
          dupe = j;
          edges.emplace_back(i, j);
        }
      }
      records.push_back(record(i, dupe));
    }
    auto g = build_groups(records);
    auto reach = oracle::transitive_closure(n, edges);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        EXPECT_EQ(g.group_of.at(BugId{i}) == g.group_of.at(BugId{j}), reach[i][j]);
  }
}

TEST(SamplePairs, WithinGroupCombinations) {
  std::vector<FailureRecord> records{record(1), record(2, 1), record(3, 1)};
  auto result = sample_pairs(build_groups(records), records);
  EXPECT_EQ(result.positives, 3u);
  EXPECT_EQ(result.negatives, 0u);
  EXPECT_TRUE(result.insufficient_negatives);
  EXPECT_EQ(result.warnings.size(), 1u);
}

TEST(SamplePairs, DifferentTopComponentsGiveNoNegatives) {
  std::vector<FailureRecord> records{record(1, std::nullopt, "A"), record(2, std::nullopt, "B")};
  auto result = sample_pairs(build_groups(records), records);
  EXPECT_TRUE(result.pairs.empty());
  EXPECT_FALSE(result.insufficient_negatives);
}

TEST(SamplePairs, BalancedAndDeterministic) {
  std::vector<FailureRecord> records;
  for (std::uint64_t g = 0; g < 6; ++g)
    for (std::uint64_t k = 0; k < 3; ++k)
      records.push_back(record(g * 3 + k + 1, k ? std::optional<std::uint64_t>(g * 3 + 1) : std::nullopt, g % 2 ? "A" : "B"));
  auto grouping = build_groups(records);
  auto a = sample_pairs(grouping, records, {5});
  auto b = sample_pairs(grouping, records, {5});
  EXPECT_EQ(a.pairs, b.pairs);
  EXPECT_EQ(a.positives, 18u);
  EXPECT_EQ(a.negatives, 18u);
  EXPECT_FALSE(a.insufficient_negatives);
  std::set<LabeledPair> unique(a.pairs.begin(), a.pairs.end());
  EXPECT_EQ(unique.size(), a.pairs.size());
  std::map<std::string, const FailureRecord*> by_dump;
  for (const auto& r : records) by_dump[r.dump_id] = &r;
  for (const auto& p : a.pairs) {
    const auto& x = *by_dump.at(p.dump_id_a);
    const auto& y = *by_dump.at(p.dump_id_b);
    bool same_group = grouping.group_of.at(x.bug_id) == grouping.group_of.at(y.bug_id);
    EXPECT_EQ(same_group, p.duplicate());
    if (!p.duplicate()) {
      EXPECT_EQ(x.top_component, y.top_component);
    }
  }
}

TEST(SamplePairs, AnySharedComponentMode) {
  std::vector<FailureRecord> records{record(1, std::nullopt, "A"), record(2, std::nullopt, "B"), record(3, 1, "A")};
  auto seq = [](std::vector<std::string> comps) {
    ComponentSequence s;
    for (auto& c : comps) s.occurrences.push_back({c, s.occurrences.size(), {c}});
    return s;
  };
  std::map<std::string, ComponentSequence> sequences{
      {"d1", seq({"A", "X"})}, {"d2", seq({"B", "X"})}, {"d3", seq({"A", "Y"})}};
  auto result = sample_pairs(build_groups(records), records, {1, NegativeMatch::AnySharedComponent}, &sequences);
  EXPECT_EQ(result.positives, 1u);
  ASSERT_EQ(result.negatives, 1u);
  EXPECT_EQ(result.pairs[1], (LabeledPair{"d1", "d2", PairLabel::NonDuplicate}));
  EXPECT_THROW(sample_pairs(build_groups(records), records, {1, NegativeMatch::AnySharedComponent}), Error);
}

TEST(SplitByGroup, GroupsNeverSpanBothSides) {
  std::vector<FailureRecord> records;
  for (std::uint64_t i = 1; i <= 40; ++i) {
    const std::uint64_t head = (i - 1) / 4 * 4 + 1;
    records.push_back(record(i, i == head ? std::nullopt : std::optional<std::uint64_t>(head)));
  }
  auto grouping = build_groups(records);
  auto [train, test] = split_by_group(grouping, 0.5, 9);
  EXPECT_EQ(train.size() + test.size(), records.size());
  for (const auto& group : grouping.groups) {
    bool in_train = train.count(group.front()) > 0;
    for (BugId b : group) EXPECT_EQ(train.count(b) > 0, in_train);
  }
  EXPECT_EQ(split_by_group(grouping, 0.5, 9), split_by_group(grouping, 0.5, 9));
}

TEST(ComputeAuc, Examples) {
  EXPECT_DOUBLE_EQ(compute_auc(labeled({0.9, 0.8}, {0.2, 0.1})), 1.0);
  EXPECT_DOUBLE_EQ(compute_auc(labeled({0.5, 0.5}, {0.5, 0.5, 0.5})), 0.5);
  auto mixed = labeled({0.9, 0.4}, {0.6, 0.1});
  EXPECT_DOUBLE_EQ(oracle::pairwise_auc(as_pairs(mixed)), 0.75);
  EXPECT_DOUBLE_EQ(compute_auc(mixed), 0.75);
}

TEST(ComputeAuc, Degenerate) {
  try {
    compute_auc(labeled({0.1, 0.2}, {}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSet);
  }
  EXPECT_THROW(compute_auc(labeled({}, {0.3})), Error);
}

TEST(ComputeAuc, MatchesPairwiseOracleAndMonotoneInvariance) {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredLabel> items(2 + rng() % 20);
    for (auto& s : items) s = {(rng() % 6) / 5.0, rng() % 2 == 0};
    items[0].positive = true;
    items[1].positive = false;
    const double auc = compute_auc(items);
    EXPECT_NEAR(auc, oracle::pairwise_auc(as_pairs(items)), 1e-12);
    auto transformed = items;
    for (auto& s : transformed) s.score = std::exp(3.0 * s.score) - 7.0;
    EXPECT_NEAR(compute_auc(transformed), auc, 1e-12);
  }
}

TEST(TuneParameters, ConstantAucKeepsOrigin) {
  // Both pairs align identically, so every grid point ties.
  std::vector<PairFeatures> features{{{{"A", 0, 0, 0, 0.0}}, 1, true}, {{{"A", 0, 0, 0, 0.0}}, 1, false}};
  auto result = tune_parameters(features);
  EXPECT_EQ(result.params.m, 0.0);
  EXPECT_EQ(result.params.n, 0.0);
  EXPECT_DOUBLE_EQ(result.best_auc, 0.5);
  ASSERT_EQ(result.grid.size(), 441u);
  EXPECT_EQ(result.grid[22].m, 0.1);  // exact i/10 values
  EXPECT_EQ(result.grid[22].n, 0.1);
  EXPECT_EQ(result.grid.back().m, 2.0);
}

TEST(TuneParameters, TopHeavyDuplicatesPreferPositiveM) {
  // Duplicates agree on the top two of six components; negatives share the tail.
  std::vector<PairFeatures> features;
  for (int k = 0; k < 5; ++k) {
    features.push_back({{{"A", 0, 0, 0, 0.0}, {"B", 1, 1, 1, 0.1 * k}}, 5, true});
    features.push_back({{{"X", 2, 2, 2, 0.0}, {"Y", 3, 3, 3, 0.0}, {"Z", 4, 4, 4, 0.0}}, 5, false});
  }
  auto result = tune_parameters(features);
  double origin = compute_auc(score_features(features, {0.0, 0.0, 0.5}));
  EXPECT_GE(result.best_auc, origin);
  EXPECT_DOUBLE_EQ(result.best_auc, 1.0);
  EXPECT_GT(result.params.m, 0.0);
  for (const auto& g : result.grid) EXPECT_LE(g.auc, result.best_auc);
  auto again = tune_parameters(features);
  EXPECT_EQ(again.params, result.params);
}

TEST(SelectThreshold, GapMidpoint) {
  EXPECT_DOUBLE_EQ(select_threshold(labeled({1.0, 1.0}, {0.0, 0.0})), 0.5);
  EXPECT_DOUBLE_EQ(select_threshold(labeled({0.9, 0.8}, {0.4, 0.2})), 0.6);
}

TEST(SelectThreshold, MatchesF1Sweep) {
  std::mt19937 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredLabel> items(2 + rng() % 15);
    for (auto& s : items) s = {(rng() % 11) / 10.0, rng() % 2 == 0};
    items[0].positive = true;
    items[1].positive = false;
    auto pairs = as_pairs(items);
    // Candidate cut points: every observed score plus every half-way point.
    std::vector<double> scores;
    for (const auto& s : items) scores.push_back(s.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    double best = -1.0;
    for (double s : scores) best = std::max(best, oracle::f1_at(pairs, s));
    const double chosen = select_threshold(items);
    EXPECT_NEAR(oracle::f1_at(pairs, chosen), best, 1e-12);
    // No smaller cut point reaches the same F1 with a different prediction set.
    for (double s : scores)
      if (s < chosen && oracle::f1_at(pairs, s) == best) {
        bool same_predictions = true;
        for (const auto& [score, label] : pairs) same_predictions &= (score >= s) == (score >= chosen);
        EXPECT_TRUE(same_predictions) << s << " vs " << chosen;
      }
  }
}

TEST(SelectThreshold, Degenerate) { EXPECT_THROW(select_threshold(labeled({0.3}, {})), Error); }

TEST(TrainingSetFile, RoundTripAndCanonicalOrder) {
  TrainingSet pairs{{"z", "a", PairLabel::Duplicate}, {"b", "c", PairLabel::NonDuplicate}};
  EXPECT_EQ(pairs[0].dump_id_a, "a");
  std::string content = write_training_set(pairs);
  EXPECT_EQ(content, "a\tz\tduplicate\nb\tc\tnon-duplicate\n");
  EXPECT_EQ(read_training_set(content), pairs);
  EXPECT_THROW(read_training_set("a\ta\tduplicate\n"), Error);
  EXPECT_THROW(read_training_set("a\tb\tmaybe\n"), Error);
  EXPECT_THROW(read_training_set("a\tb\n"), Error);
}

TEST(TuningReport, RowsAndSummary) {
  std::vector<PairFeatures> features{{{{"A", 0, 0, 0, 0.0}}, 1, true}, {{}, 1, false}};
  auto result = tune_parameters(features);
  std::string report = write_tuning_report(result);
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 442);
  EXPECT_EQ(report.rfind("0.0\t0.0\t1\n", 0), 0u);
  EXPECT_NE(report.find("# best m=0.0 n=0.0 auc=1\n"), std::string::npos);
}
