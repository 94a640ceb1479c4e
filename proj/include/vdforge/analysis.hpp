#pragma once

// Diagnostics: resolution-accuracy sweeps, quality-sensitivity category
// distributions, response-length statistics and run comparison tables.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vdforge/grade.hpp"
#include "vdforge/pairs.hpp"
#include "vdforge/policy.hpp"

namespace vdforge::analysis {

inline constexpr std::array<double, 6> kDefaultSweepAlphas = {1.0, 0.8, 0.6, 0.4, 0.2, 0.1};

// Fixed-point percentage of a fraction, e.g. (0.671085, 2) -> "67.11".
std::string format_percent(double fraction, int decimals);
// Signed fixed-point value, e.g. 3.98 -> "+3.98".
std::string format_signed(double value, int decimals);

struct SweepRow {
  double alpha = 1.0;
  double accuracy = 0.0;
  std::int64_t correct = 0;
  std::int64_t total = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

SweepRow make_sweep_row(double alpha, std::int64_t correct, std::int64_t total);

class SweepFailure : public Error {
 public:
  SweepFailure(const std::string& what, SweepResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const SweepResult& partial() const noexcept { return partial_; }

 private:
  SweepResult partial_;
};

// For each alpha (1.0 means the HQ view) generates or replays one response
// per instance, grades it and tabulates accuracy. A backend failure throws
// SweepFailure carrying the rows completed so far.
SweepResult resolution_sweep(policy::Generator& gen, std::span<const QaInstance> instances,
                             std::span<const double> alphas, const grade::MetricSpec& metric,
                             const DecodeParams& decode = {}, int jobs = 1,
                             std::vector<ResponseRecord>* graded = nullptr);

void write_sweep_csv(std::ostream& out, const SweepResult& sweep);
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);
// Accuracy is recomputed from the correct/total columns.
SweepResult read_sweep_csv(const std::filesystem::path& path);
std::string format_sweep_table(const SweepResult& sweep);

struct CategoryDistribution {
  std::array<std::int64_t, 4> counts{};  // indexed by Category
  std::int64_t total = 0;

  std::int64_t count(Category c) const { return counts[static_cast<std::size_t>(c)]; }
  double fraction(Category c) const;
};

CategoryDistribution category_distribution(std::span<const ViewPair> views);
CategoryDistribution distribution_from_counts(std::int64_t always_correct,
                                              std::int64_t quality_sensitive,
                                              std::int64_t always_wrong,
                                              std::int64_t paradoxically_robust);
void write_categories_csv(std::ostream& out, const CategoryDistribution& d);
std::string format_category_table(const CategoryDistribution& d);

struct LengthSummary {
  std::string view;
  Category category = Category::AlwaysCorrect;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

struct HistogramBin {
  std::string view;
  Category category = Category::AlwaysCorrect;
  std::int64_t lo = 0;  // inclusive
  std::int64_t hi = 0;  // exclusive
  std::int64_t count = 0;
};

struct LengthReport {
  std::vector<LengthSummary> summaries;  // empty groups are absent
  std::vector<HistogramBin> histogram;
  const LengthSummary* find(std::string_view view, Category c) const;
};

// Linear interpolation between order statistics (position q * (n - 1)).
double quantile(std::span<const double> sorted, double q);

LengthReport length_stats(std::span<const ViewPair> views, std::int64_t bin_width = 10);
void write_lengths_csv(std::ostream& out, const LengthReport& report);
void write_histogram_csv(std::ostream& out, const LengthReport& report);

struct DatasetResult {
  std::string dataset;
  double accuracy = 0.0;
  std::optional<std::int64_t> correct;
  std::optional<std::int64_t> total;
};

struct RunResults {
  std::string name;
  std::vector<DatasetResult> datasets;
};

// results.csv: dataset,accuracy,correct,total (correct/total may be blank).
RunResults read_results_csv(const std::filesystem::path& path, std::string name = {});
void write_results_csv(std::ostream& out, const RunResults& run);

struct ReportRow {
  std::string run;
  std::vector<double> accuracy;  // per dataset, in RunReport::datasets order
  std::vector<double> delta;     // accuracy - baseline accuracy
  std::vector<bool> best;        // highest value in its column (ties all marked)
};

struct RunReport {
  std::vector<std::string> datasets;
  std::vector<ReportRow> rows;  // baseline first
};

// Throws Error listing the symmetric difference when dataset sets differ.
RunReport compare_runs(const RunResults& baseline, std::span<const RunResults> treatments);
void write_report_csv(std::ostream& out, const RunReport& report);
std::string format_report_table(const RunReport& report);

}  // namespace vdforge::analysis
