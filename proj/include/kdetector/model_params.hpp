#pragma once

#include <string>
#include <string_view>

#include "kdetector/error.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

/// Coefficients of the similarity model plus the duplicate decision cutoff.
/// `m` damps deeper stack positions, `n` damps function-level divergence.
struct ModelParams {
  double m = 1.0;
  double n = 1.0;
  double threshold = 0.5;

  void validate() const {
    if (!(m >= 0.0) || !(n >= 0.0))
      throw Error(ErrorCode::FormatError, "model coefficients must be non-negative");
    if (!(threshold >= 0.0 && threshold <= 1.0))
      throw Error(ErrorCode::FormatError, "threshold must lie in [0, 1]");
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline constexpr std::string_view kParamsVersion = "#kdetector-params v1";

inline std::string write_params(const ModelParams& p) {
  return std::string(kParamsVersion) + "\nm=" + text::format_double(p.m) + " n=" + text::format_double(p.n) +
         " threshold=" + text::format_double(p.threshold) + "\n";
}

inline ModelParams read_params(std::string_view content) {
  auto lines = text::split_lines(content);
  if (lines.empty() || text::trim(lines.front()) != kParamsVersion)
    throw Error(ErrorCode::FormatError, "params file lacks '" + std::string(kParamsVersion) + "' header");
  ModelParams p;
  bool seen_m = false, seen_n = false, seen_t = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    for (std::string_view field : text::split(text::trim(lines[i]), ' ')) {
      if (field.empty()) continue;
      auto eq = field.find('=');
      if (eq == std::string_view::npos) throw Error(ErrorCode::FormatError, "bad params field '" + std::string(field) + "'");
      auto key = field.substr(0, eq);
      auto value = text::parse_double(field.substr(eq + 1));
      if (!value) throw Error(ErrorCode::FormatError, "bad number in params field '" + std::string(field) + "'");
      if (key == "m") p.m = *value, seen_m = true;
      else if (key == "n") p.n = *value, seen_n = true;
      else if (key == "threshold") p.threshold = *value, seen_t = true;
      else throw Error(ErrorCode::FormatError, "unknown params key '" + std::string(key) + "'");
    }
  }
  if (!seen_m || !seen_n || !seen_t) throw Error(ErrorCode::FormatError, "params file needs m, n and threshold");
  p.validate();
  return p;
}

}  // namespace kdetector
