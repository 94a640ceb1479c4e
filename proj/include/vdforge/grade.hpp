#pragma once

// Answer extraction and correctness metrics (exact match and numeric
// tolerance match).

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vdforge/corpus.hpp"

namespace vdforge::grade {

inline constexpr double kDefaultTolerance = 0.5;

struct MetricSpec {
  enum class Kind { ExactMatch, ToleranceMatch };
  Kind kind = Kind::ExactMatch;
  double tol = kDefaultTolerance;

  static MetricSpec exact() { return {Kind::ExactMatch, 0.0}; }
  static MetricSpec tolerance(double tol = kDefaultTolerance);
  // "em" or "tm".
  static MetricSpec parse(std::string_view name, double tol = kDefaultTolerance);
  std::string name() const { return kind == Kind::ExactMatch ? "em" : "tm"; }
};

// Content of the last <answer>...</answer> pair; otherwise the trimmed text;
// nullopt when that is empty.
std::optional<std::string> extract_answer(std::string_view text);

// NFC, lowercase, collapsed internal whitespace, outer whitespace stripped,
// trailing '%' and '.' removed.
std::string normalize(std::string_view s);

// Strict locale-independent number: [+-]digits[.digits][e[+-]digits]. No
// thousands separators.
std::optional<double> parse_number(std::string_view s);

bool exact_match(std::string_view pred, std::string_view gold);
bool tolerance_match(std::string_view pred, std::string_view gold, double tol);
bool matches(const MetricSpec& metric, std::string_view pred, std::string_view gold);

// Fills extracted_answer and correct for one record.
void grade_record(ResponseRecord& rec, const QaInstance& inst, const MetricSpec& metric);

// Grades every record against its instance's gold answer. Throws Error naming
// the first record whose instance is unknown or lacks a gold answer.
void grade_records(std::span<ResponseRecord> records, std::span<const QaInstance> instances,
                   const MetricSpec& metric);

}  // namespace vdforge::grade
