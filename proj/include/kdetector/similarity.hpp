#pragma once

// Call-stack similarity over component sequences.
//
// Components shared by both stacks are aligned with a longest common
// subsequence. Each aligned pair contributes exp(-m * pos) * exp(-n * dist),
// where pos is the deeper of its two positions and dist the normalized
// function-level edit distance between the two runs. The sum is normalized
// by sum_{i=0}^{max} exp(-m * i), max being the last position of the longer
// sequence, so the score lies in [0, 1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "kdetector/edit_distance.hpp"
#include "kdetector/error.hpp"
#include "kdetector/model_params.hpp"
#include "kdetector/sequencer.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

struct MatchedPair {
  std::string component;
  std::size_t pos_a = 0;
  std::size_t pos_b = 0;
  std::size_t pos = 0;
  double dist = 0.0;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

/// Scores are carried in extended precision: terms deep in a long stack
/// (e^-38 and below) would otherwise vanish below one ulp of the sum.
using Score = long double;

struct SimilarityScore {
  Score value = 0.0L;
  std::vector<MatchedPair> matched;
  std::size_t max_position = 0;
};

namespace detail {

inline bool sequence_less(const ComponentSequence& a, const ComponentSequence& b) {
  return std::lexicographical_compare(a.occurrences.begin(), a.occurrences.end(), b.occurrences.begin(),
                                      b.occurrences.end(), [](const ComponentOccurrence& x, const ComponentOccurrence& y) {
                                        return std::tie(x.component, x.functions) < std::tie(y.component, y.functions);
                                      });
}

inline std::vector<MatchedPair> lcs_match_ordered(const ComponentSequence& a, const ComponentSequence& b) {
  const std::size_t na = a.size(), nb = b.size();
  struct Cell {
    std::size_t length = 0;
    std::size_t cost = 0;  // sum of pos_a + pos_b over the suffix alignment
  };
  auto better = [](const Cell& x, const Cell& y) {
    return x.length != y.length ? x.length > y.length : x.cost < y.cost;
  };
  // table[i][j] describes the best alignment of a[i..] with b[j..].
  std::vector<Cell> table((na + 1) * (nb + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return table[i * (nb + 1) + j]; };

  for (std::size_t i = na; i-- > 0;) {
    for (std::size_t j = nb; j-- > 0;) {
      Cell best = at(i + 1, j);
      if (better(at(i, j + 1), best)) best = at(i, j + 1);
      if (a[i].component == b[j].component) {
        Cell take{at(i + 1, j + 1).length + 1, at(i + 1, j + 1).cost + i + j};
        if (better(take, best)) best = take;
      }
      at(i, j) = best;
    }
  }

  std::vector<MatchedPair> matched;
  matched.reserve(at(0, 0).length);
  std::size_t i = 0, j = 0;
  while (i < na && j < nb) {
    const Cell& here = at(i, j);
    if (a[i].component == b[j].component) {
      const Cell& next = at(i + 1, j + 1);
      if (next.length + 1 == here.length && next.cost + i + j == here.cost) {
        matched.push_back({a[i].component, i, j, std::max(i, j), component_distance(a[i], b[j])});
        ++i, ++j;
        continue;
      }
    }
    const Cell& down = at(i + 1, j);
    if (down.length == here.length && down.cost == here.cost) ++i;
    else ++j;
  }
  return matched;
}

}  // namespace detail

/// Maximum-length common subsequence of component names. Among all maximal
/// alignments the one with the smallest sum of positions is returned, so
/// matches stay as close to the top of both stacks as possible. Remaining
/// ties are resolved on a canonical argument order, which makes the result
/// independent of which stack is passed first.
inline std::vector<MatchedPair> lcs_match(const ComponentSequence& a, const ComponentSequence& b) {
  if (!detail::sequence_less(b, a)) return detail::lcs_match_ordered(a, b);
  auto matched = detail::lcs_match_ordered(b, a);
  for (auto& m : matched) std::swap(m.pos_a, m.pos_b);
  return matched;
}

/// Scores a given alignment. Shared by the online scorer and the tuner so
/// both evaluate exactly the same formula.
inline Score score_matches(std::span<const MatchedPair> matched, std::size_t max_position, const ModelParams& p) {
  const Score m = p.m, n = p.n;
  Score numerator = 0.0L;
  for (const auto& mp : matched)
    numerator += std::exp(-m * static_cast<Score>(mp.pos)) * std::exp(-n * static_cast<Score>(mp.dist));
  Score denominator = 0.0L;
  for (std::size_t i = 0; i <= max_position; ++i) denominator += std::exp(-m * static_cast<Score>(i));
  return numerator / denominator;
}

inline SimilarityScore similarity(const ComponentSequence& a, const ComponentSequence& b, const ModelParams& p) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyStack, "cannot score an empty component sequence");
  SimilarityScore score;
  score.matched = lcs_match(a, b);
  score.max_position = std::max(a.size(), b.size()) - 1;
  score.value = score_matches(score.matched, score.max_position, p);
  return score;
}

/// Character-level edit-distance similarity of two stack texts.
inline double baseline_edit_distance(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

/// Same, over function names joined with newlines.
inline double baseline_edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  return baseline_edit_distance(text::join(a, "\n"), text::join(b, "\n"));
}

/// Length of the common top-of-stack prefix over the longer stack length.
inline double baseline_prefix_match(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  std::size_t common = 0;
  while (common < a.size() && common < b.size() && a[common] == b[common]) ++common;
  return static_cast<double>(common) / static_cast<double>(longest);
}

}  // namespace kdetector
