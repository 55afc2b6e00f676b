#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <numeric>
#include <vector>

namespace kdetector {

/// Levenshtein distance (unit-cost insert, delete, substitute) between two
/// random-access ranges. Works for characters of a string as well as for
/// tokens such as whole function names.
template <typename RangeA, typename RangeB>
std::size_t levenshtein(const RangeA& a, const RangeB& b) {
  const std::size_t n = std::size(b);
  std::vector<std::size_t> row(n + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  std::size_t i = 0;
  for (const auto& x : a) {
    std::size_t diagonal = row[0];
    row[0] = ++i;
    std::size_t j = 0;
    for (const auto& y : b) {
      std::size_t above = row[j + 1];
      row[j + 1] = x == y ? diagonal : 1 + std::min({diagonal, above, row[j]});
      diagonal = above;
      ++j;
    }
  }
  return row[n];
}

/// Levenshtein distance divided by the longer length; 0 when both are empty.
template <typename RangeA, typename RangeB>
double normalized_levenshtein(const RangeA& a, const RangeB& b) {
  const std::size_t longest = std::max<std::size_t>(std::size(a), std::size(b));
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

}  // namespace kdetector
