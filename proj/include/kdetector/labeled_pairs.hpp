#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdetector/error.hpp"
#include "kdetector/text.hpp"

namespace kdetector {

enum class PairLabel { Duplicate, NonDuplicate };

inline std::string_view to_string(PairLabel label) {
  return label == PairLabel::Duplicate ? "duplicate" : "non-duplicate";
}

/// Unordered dump pair; the constructor stores the ids in ascending order.
struct LabeledPair {
  std::string dump_id_a;
  std::string dump_id_b;
  PairLabel label = PairLabel::NonDuplicate;

  LabeledPair() = default;
  LabeledPair(std::string a, std::string b, PairLabel l) : label(l) {
    if (a == b) throw Error(ErrorCode::FormatError, "pair needs two distinct dumps, got '" + a + "' twice");
    if (b < a) std::swap(a, b);
    dump_id_a = std::move(a);
    dump_id_b = std::move(b);
  }

  bool duplicate() const { return label == PairLabel::Duplicate; }

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
  friend auto operator<=>(const LabeledPair& x, const LabeledPair& y) {
    if (auto c = x.dump_id_a <=> y.dump_id_a; c != 0) return c;
    return x.dump_id_b <=> y.dump_id_b;
  }
};

using TrainingSet = std::vector<LabeledPair>;

inline std::string write_training_set(const TrainingSet& pairs) {
  std::string out;
  for (const auto& p : pairs) out += p.dump_id_a + "\t" + p.dump_id_b + "\t" + std::string(to_string(p.label)) + "\n";
  return out;
}

inline TrainingSet read_training_set(std::string_view content) {
  TrainingSet pairs;
  std::size_t line_no = 0;
  for (std::string_view line : text::split_lines(content)) {
    ++line_no;
    if (text::trim(line).empty() || text::starts_with(line, "#")) continue;
    auto fields = text::split(line, '\t');
    auto where = "pairs line " + std::to_string(line_no);
    if (fields.size() != 3) throw Error(ErrorCode::FormatError, where + ": expected 3 tab-separated fields");
    PairLabel label;
    if (fields[2] == "duplicate") label = PairLabel::Duplicate;
    else if (fields[2] == "non-duplicate") label = PairLabel::NonDuplicate;
    else throw Error(ErrorCode::FormatError, where + ": unknown label '" + std::string(fields[2]) + "'");
    pairs.emplace_back(std::string(fields[0]), std::string(fields[1]), label);
  }
  return pairs;
}

}  // namespace kdetector
