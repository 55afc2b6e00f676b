#pragma once

// Training data and coefficient tuning: historical failures are grouped by
// their dupe_of links, dump pairs are sampled from the groups, and (m, n) is
// chosen by exhaustive AUC grid search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdetector/error.hpp"
#include "kdetector/labeled_pairs.hpp"
#include "kdetector/model_params.hpp"
#include "kdetector/sequencer.hpp"
#include "kdetector/similarity.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

struct BugId {
  std::uint64_t value = 0;

  friend auto operator<=>(const BugId&, const BugId&) = default;
};

inline std::string to_string(BugId id) { return "b" + std::to_string(id.value); }

inline std::optional<BugId> parse_bug_id(std::string_view s) {
  s = text::trim(s);
  if (s.size() < 2 || s.front() != 'b') return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return BugId{v};
}

struct FailureRecord {
  BugId bug_id;
  std::string dump_id;
  std::string resolution;
  text::TimePoint creation_time{};
  std::optional<BugId> dupe_of;
  std::string top_component;
  std::string dump_path;

  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

/// Disjoint sets over 0..n-1 with path halving and union by size.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct Grouping {
  /// Each group sorted ascending; groups ordered by their smallest member.
  std::vector<std::vector<BugId>> groups;
  std::map<BugId, std::size_t> group_of;
  /// dupe_of edges that were skipped: (bug, missing or self target).
  std::vector<std::pair<BugId, BugId>> dangling;

  BugId canonical(BugId bug) const { return groups.at(group_of.at(bug)).front(); }
};

inline Grouping build_groups(std::span<const FailureRecord> records) {
  std::map<BugId, std::size_t> index;
  for (const auto& r : records) index.emplace(r.bug_id, index.size());
  UnionFind uf(index.size());
  Grouping out;
  for (const auto& r : records) {
    if (!r.dupe_of) continue;
    auto target = index.find(*r.dupe_of);
    if (target == index.end() || *r.dupe_of == r.bug_id) {
      out.dangling.emplace_back(r.bug_id, *r.dupe_of);
      continue;
    }
    uf.unite(index.at(r.bug_id), target->second);
  }
  std::map<std::size_t, std::vector<BugId>> by_root;
  for (const auto& [bug, i] : index) by_root[uf.find(i)].push_back(bug);
  for (auto& [root, members] : by_root) out.groups.push_back(std::move(members));
  std::sort(out.groups.begin(), out.groups.end());
  for (std::size_t g = 0; g < out.groups.size(); ++g)
    for (BugId bug : out.groups[g]) out.group_of[bug] = g;
  return out;
}

enum class NegativeMatch { TopComponent, AnySharedComponent };

struct SamplingOptions {
  std::uint64_t seed = 0;
  NegativeMatch negative_match = NegativeMatch::TopComponent;
};

struct SamplingResult {
  TrainingSet pairs;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  /// Set when fewer negative candidates existed than positives.
  bool insufficient_negatives = false;
  std::vector<std::string> warnings;
};

/// Positives: every within-group dump pair. Negatives: cross-group pairs whose
/// stacks share the top component (or any component), drawn uniformly without
/// replacement until they balance the positives. `sequences` is only consulted
/// for NegativeMatch::AnySharedComponent.
inline SamplingResult sample_pairs(const Grouping& grouping, std::span<const FailureRecord> records,
                                   const SamplingOptions& options = {},
                                   const std::map<std::string, ComponentSequence>* sequences = nullptr) {
  std::map<BugId, const FailureRecord*> by_bug;
  for (const auto& r : records) by_bug[r.bug_id] = &r;

  SamplingResult out;
  for (const auto& group : grouping.groups)
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j)
        out.pairs.emplace_back(by_bug.at(group[i])->dump_id, by_bug.at(group[j])->dump_id, PairLabel::Duplicate);
  out.positives = out.pairs.size();

  auto components_of = [&](const FailureRecord& r) {
    std::set<std::string> names;
    if (!sequences) throw Error(ErrorCode::FormatError, "any-component negatives need the stack sequences");
    auto it = sequences->find(r.dump_id);
    if (it == sequences->end()) throw Error(ErrorCode::FormatError, "no sequence for dump '" + r.dump_id + "'");
    for (const auto& occ : it->second.occurrences) names.insert(occ.component);
    return names;
  };

  std::vector<const FailureRecord*> ordered;
  for (const auto& [bug, r] : by_bug) ordered.push_back(r);
  std::vector<std::set<std::string>> component_sets;
  if (options.negative_match == NegativeMatch::AnySharedComponent)
    for (const auto* r : ordered) component_sets.push_back(components_of(*r));

  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    for (std::size_t j = i + 1; j < ordered.size(); ++j) {
      if (grouping.group_of.at(ordered[i]->bug_id) == grouping.group_of.at(ordered[j]->bug_id)) continue;
      bool related = false;
      if (options.negative_match == NegativeMatch::TopComponent) {
        related = !ordered[i]->top_component.empty() && ordered[i]->top_component == ordered[j]->top_component;
      } else {
        const auto& a = component_sets[i];
        const auto& b = component_sets[j];
        related = std::any_of(a.begin(), a.end(), [&](const std::string& c) { return b.count(c) > 0; });
      }
      if (related) candidates.emplace_back(i, j);
    }
  }

  if (candidates.size() < out.positives) {
    out.insufficient_negatives = true;
    out.warnings.push_back("InsufficientNegatives: " + std::to_string(candidates.size()) +
                           " negative candidates for " + std::to_string(out.positives) + " positives");
  }
  std::mt19937_64 rng(options.seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(std::min(candidates.size(), out.positives));
  for (auto [i, j] : candidates)
    out.pairs.emplace_back(ordered[i]->dump_id, ordered[j]->dump_id, PairLabel::NonDuplicate);
  out.negatives = candidates.size();
  std::sort(out.pairs.begin(), out.pairs.end(), [](const LabeledPair& x, const LabeledPair& y) {
    if (x.label != y.label) return x.label == PairLabel::Duplicate;
    return x < y;
  });
  return out;
}

/// Partitions whole groups into a training and a testing side, so no group
/// spans both. `train_ratio` is the share of groups sent to training.
inline std::pair<std::set<BugId>, std::set<BugId>> split_by_group(const Grouping& grouping, double train_ratio,
                                                                  std::uint64_t seed) {
  std::vector<std::size_t> order(grouping.groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(order.size())));
  std::pair<std::set<BugId>, std::set<BugId>> sides;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& side = k < n_train ? sides.first : sides.second;
    for (BugId bug : grouping.groups[order[k]]) side.insert(bug);
  }
  return sides;
}

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

/// ROC AUC as the normalized Mann-Whitney statistic, with tied scores
/// sharing their average rank.
inline double compute_auc(std::span<const ScoredLabel> items) {
  std::size_t positives = 0;
  for (const auto& s : items) positives += s.positive ? 1 : 0;
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0)
    throw Error(ErrorCode::DegenerateSet, "AUC needs at least one positive and one negative");

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return items[a].score < items[b].score; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
    // Ranks i+1..j share their mean.
    const double mean_rank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (items[order[k]].positive) positive_rank_sum += mean_rank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

/// Everything the model needs from a pair, independent of (m, n): the LCS
/// alignment and the normalizing depth.
struct PairFeatures {
  std::vector<MatchedPair> matched;
  std::size_t max_position = 0;
  bool duplicate = false;
};

inline std::vector<PairFeatures> extract_features(std::span<const LabeledPair> pairs,
                                                  const std::map<std::string, ComponentSequence>& sequences) {
  std::vector<PairFeatures> out;
  out.reserve(pairs.size());
  auto lookup = [&](const std::string& id) -> const ComponentSequence& {
    auto it = sequences.find(id);
    if (it == sequences.end()) throw Error(ErrorCode::FormatError, "pair references unknown dump '" + id + "'");
    return it->second;
  };
  for (const auto& pair : pairs) {
    const auto& a = lookup(pair.dump_id_a);
    const auto& b = lookup(pair.dump_id_b);
    if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyStack, "pair with an empty sequence");
    out.push_back({lcs_match(a, b), std::max(a.size(), b.size()) - 1, pair.duplicate()});
  }
  return out;
}

inline std::vector<ScoredLabel> score_features(std::span<const PairFeatures> features, const ModelParams& p) {
  std::vector<ScoredLabel> scored;
  scored.reserve(features.size());
  for (const auto& f : features) scored.push_back({static_cast<double>(score_matches(f.matched, f.max_position, p)), f.duplicate});
  return scored;
}

struct GridPoint {
  double m = 0.0;
  double n = 0.0;
  double auc = 0.0;
};

struct TuningResult {
  ModelParams params;
  double best_auc = 0.0;
  std::vector<GridPoint> grid;
};

inline constexpr int kGridSteps = 20;  // 0.0, 0.1, ..., 2.0 on each axis

/// Exhaustive search over m, n in {0.0, 0.1, ..., 2.0}, m outer. The first
/// point reaching the maximum AUC wins; only strict improvements replace it.
inline TuningResult tune_parameters(std::span<const PairFeatures> training) {
  TuningResult result;
  result.params.m = 0.0;
  result.params.n = 0.0;
  result.best_auc = 0.0;
  result.grid.reserve((kGridSteps + 1) * (kGridSteps + 1));
  bool first = true;
  for (int i = 0; i <= kGridSteps; ++i) {
    for (int j = 0; j <= kGridSteps; ++j) {
      ModelParams p;
      p.m = i / 10.0;
      p.n = j / 10.0;
      auto scored = score_features(training, p);
      double auc = compute_auc(scored);
      result.grid.push_back({p.m, p.n, auc});
      if (first || auc > result.best_auc) {
        result.best_auc = auc;
        result.params.m = p.m;
        result.params.n = p.n;
        first = false;
      }
    }
  }
  return result;
}

/// Threshold maximizing F1 for the rule "duplicate iff score >= threshold".
/// F1 is constant between consecutive distinct scores, so each such interval
/// is represented by its midpoint (the lowest score by itself); ties go to
/// the smaller threshold.
inline double select_threshold(std::span<const ScoredLabel> scored) {
  std::size_t total_pos = 0;
  for (const auto& s : scored) total_pos += s.positive ? 1 : 0;
  if (total_pos == 0 || total_pos == scored.size())
    throw Error(ErrorCode::DegenerateSet, "threshold selection needs both labels");

  std::vector<ScoredLabel> sorted(scored.begin(), scored.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

  // Walk from the highest score down; after consuming every item with score
  // >= s, the prediction set is exactly those items.
  double best_f1 = -1.0, best_threshold = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double s = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == s) {
      (sorted[i].positive ? tp : fp) += 1;
      ++i;
    }
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + total_pos);
    const double threshold = i < sorted.size() ? (s + sorted[i].score) / 2.0 : s;
    if (f1 > best_f1 || (f1 == best_f1 && threshold < best_threshold)) {
      best_f1 = f1;
      best_threshold = threshold;
    }
  }
  return best_threshold;
}

inline double select_threshold(std::span<const PairFeatures> training, const ModelParams& params) {
  return select_threshold(score_features(training, params));
}

inline std::string write_tuning_report(const TuningResult& result) {
  std::string out;
  for (const auto& g : result.grid)
    out += text::format_fixed(g.m, 1) + "\t" + text::format_fixed(g.n, 1) + "\t" + text::format_double(g.auc) + "\n";
  out += "# best m=" + text::format_fixed(result.params.m, 1) + " n=" + text::format_fixed(result.params.n, 1) +
         " auc=" + text::format_double(result.best_auc) + "\n";
  return out;
}

}  // namespace kdetector
