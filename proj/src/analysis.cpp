#include "vdforge/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace vdforge::analysis {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(where + ": invalid number '" + s + "'");
  }
  return v;
}

std::int64_t to_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error(where + ": invalid integer '" + s + "'");
  }
  return v;
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(decimals) << v;
  std::string s = os.str();
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

}  // namespace

std::string format_percent(double fraction, int decimals) { return fixed(fraction * 100.0, decimals); }

std::string format_signed(double value, int decimals) {
  std::string s = fixed(value, decimals);
  if (s.find_first_not_of("0.") == std::string::npos) return s;
  return s[0] == '-' ? s : "+" + s;
}

// ---- sweep ----------------------------------------------------------------------

SweepRow make_sweep_row(double alpha, std::int64_t correct, std::int64_t total) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("sweep alpha must be in (0, 1]");
  if (total <= 0) throw Error("sweep row needs a positive total");
  if (correct < 0 || correct > total) throw Error("sweep row needs 0 <= correct <= total");
  return SweepRow{alpha, static_cast<double>(correct) / static_cast<double>(total), correct, total};
}

SweepResult resolution_sweep(policy::Generator& gen, std::span<const QaInstance> instances,
                             std::span<const double> alphas, const grade::MetricSpec& metric,
                             const DecodeParams& decode, int jobs,
                             std::vector<ResponseRecord>* graded) {
  if (instances.empty()) throw Error("sweep needs at least one instance");
  for (const auto& inst : instances) {
    if (!inst.gold_answer) throw Error("instance \"" + inst.id + "\" has no gold answer");
  }
  SweepResult result;
  for (double alpha : alphas) {
    const ViewSpec view = alpha == 1.0 ? ViewSpec::hq() : ViewSpec::resolution(alpha);
    std::vector<ResponseRecord> records;
    try {
      const ViewSpec views[] = {view};
      const DecodeParams decodes[] = {decode};
      records = gen.generate_all(instances, views, decodes, jobs);
    } catch (const Error& e) {
      throw SweepFailure("sweep failed at alpha " + format_real(alpha) + ": " + e.what(), result);
    }
    grade::grade_records(records, instances, metric);
    std::int64_t correct = 0;
    for (const auto& r : records) correct += *r.correct ? 1 : 0;
    result.rows.push_back(make_sweep_row(alpha, correct, static_cast<std::int64_t>(records.size())));
    if (graded) graded->insert(graded->end(), records.begin(), records.end());
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "alpha,accuracy,correct,total\n";
  for (const auto& r : sweep.rows) {
    out << format_real(r.alpha) << ',' << format_real(r.accuracy) << ',' << r.correct << ','
        << r.total << '\n';
  }
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_sweep_csv(out, sweep);
}

SweepResult read_sweep_csv(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty() || split_csv(lines[0]) != std::vector<std::string>{"alpha", "accuracy", "correct", "total"}) {
    throw Error(path.string() + ": expected header alpha,accuracy,correct,total");
  }
  SweepResult s;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_csv(lines[i]);
    const std::string where = path.string() + " line " + std::to_string(i + 1);
    if (cells.size() != 4) throw Error(where + ": expected 4 columns");
    s.rows.push_back(make_sweep_row(to_double(cells[0], where), to_int(cells[2], where),
                                    to_int(cells[3], where)));
  }
  return s;
}

std::string format_sweep_table(const SweepResult& sweep) {
  std::ostringstream os;
  os << "Resolution  Accuracy  Correct  Total  Change\n";
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const auto& r = sweep.rows[i];
    const std::string change =
        i == 0 ? "--" : format_signed((r.accuracy - sweep.rows[0].accuracy) * 100.0, 2) + "%";
    os << pad_right(format_percent(r.alpha, 0) + "% (" + format_real(r.alpha) + ")", 12)
       << pad_left(format_percent(r.accuracy, 2) + "%", 8) << pad_left(std::to_string(r.correct), 9)
       << pad_left(std::to_string(r.total), 7) << "  " << change << '\n';
  }
  return os.str();
}

// ---- categories -----------------------------------------------------------------

double CategoryDistribution::fraction(Category c) const {
  return total == 0 ? 0.0 : static_cast<double>(count(c)) / static_cast<double>(total);
}

CategoryDistribution category_distribution(std::span<const ViewPair> views) {
  CategoryDistribution d;
  for (const auto& v : views) {
    ++d.counts[static_cast<std::size_t>(classify(v.hq, v.lq))];
    ++d.total;
  }
  return d;
}

CategoryDistribution distribution_from_counts(std::int64_t always_correct,
                                              std::int64_t quality_sensitive,
                                              std::int64_t always_wrong,
                                              std::int64_t paradoxically_robust) {
  CategoryDistribution d;
  d.counts = {always_correct, quality_sensitive, always_wrong, paradoxically_robust};
  for (auto c : d.counts) {
    if (c < 0) throw Error("category counts must be non-negative");
    d.total += c;
  }
  return d;
}

void write_categories_csv(std::ostream& out, const CategoryDistribution& d) {
  out << "category,count,fraction\n";
  for (Category c : kAllCategories) {
    out << to_string(c) << ',' << d.count(c) << ',' << format_real(d.fraction(c)) << '\n';
  }
}

std::string format_category_table(const CategoryDistribution& d) {
  std::ostringstream os;
  os << "Category              Count  Percent\n";
  for (Category c : kAllCategories) {
    os << pad_right(std::string(to_string(c)), 20) << pad_left(std::to_string(d.count(c)), 7)
       << pad_left(format_percent(d.fraction(c), 1) + "%", 9) << '\n';
  }
  os << pad_right("total", 20) << pad_left(std::to_string(d.total), 7) << '\n';
  return os.str();
}

// ---- lengths ----------------------------------------------------------------------

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

const LengthSummary* LengthReport::find(std::string_view view, Category c) const {
  for (const auto& s : summaries) {
    if (s.view == view && s.category == c) return &s;
  }
  return nullptr;
}

LengthReport length_stats(std::span<const ViewPair> views, std::int64_t bin_width) {
  if (bin_width <= 0) throw Error("histogram bin width must be positive");
  // Group key: (view label, category); HQ groups first, then LQ labels.
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  std::vector<std::string> view_order;
  auto note_view = [&](const std::string& v) {
    if (std::find(view_order.begin(), view_order.end(), v) == view_order.end()) view_order.push_back(v);
  };
  for (const auto& v : views) {
    const Category c = classify(v.hq, v.lq);
    note_view(v.hq.view_label);
    note_view(v.lq.view_label);
    groups[{v.hq.view_label, static_cast<int>(c)}].push_back(static_cast<double>(v.hq.token_count));
    groups[{v.lq.view_label, static_cast<int>(c)}].push_back(static_cast<double>(v.lq.token_count));
  }

  LengthReport report;
  for (const auto& view : view_order) {
    for (Category c : kAllCategories) {
      auto it = groups.find({view, static_cast<int>(c)});
      if (it == groups.end() || it->second.empty()) continue;
      auto values = it->second;
      std::sort(values.begin(), values.end());
      LengthSummary s;
      s.view = view;
      s.category = c;
      s.n = values.size();
      double sum = 0.0;
      for (double x : values) sum += x;
      s.mean = sum / static_cast<double>(values.size());
      s.median = quantile(values, 0.5);
      s.p25 = quantile(values, 0.25);
      s.p75 = quantile(values, 0.75);
      report.summaries.push_back(s);

      std::map<std::int64_t, std::int64_t> bins;
      for (double x : values) {
        const auto t = static_cast<std::int64_t>(x);
        ++bins[(t / bin_width) * bin_width];
      }
      for (const auto& [lo, count] : bins) {
        report.histogram.push_back(HistogramBin{view, c, lo, lo + bin_width, count});
      }
    }
  }
  return report;
}

void write_lengths_csv(std::ostream& out, const LengthReport& report) {
  out << "view,category,mean,median,p25,p75,n\n";
  for (const auto& s : report.summaries) {
    out << s.view << ',' << to_string(s.category) << ',' << format_real(s.mean) << ','
        << format_real(s.median) << ',' << format_real(s.p25) << ',' << format_real(s.p75) << ','
        << s.n << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const LengthReport& report) {
  out << "view,category,bin_lo,bin_hi,count\n";
  for (const auto& b : report.histogram) {
    out << b.view << ',' << to_string(b.category) << ',' << b.lo << ',' << b.hi << ',' << b.count
        << '\n';
  }
}

// ---- run comparison ----------------------------------------------------------------

RunResults read_results_csv(const std::filesystem::path& path, std::string name) {
  auto lines = read_lines(path);
  if (lines.empty()) throw Error(path.string() + ": empty results file");
  auto header = split_csv(lines[0]);
  if (header.size() < 2 || header[0] != "dataset" || header[1] != "accuracy") {
    throw Error(path.string() + ": expected header dataset,accuracy,correct,total");
  }
  RunResults run;
  run.name = name.empty() ? path.stem().string() : std::move(name);
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_csv(lines[i]);
    const std::string where = path.string() + " line " + std::to_string(i + 1);
    if (cells.size() < 2) throw Error(where + ": expected at least dataset and accuracy");
    DatasetResult r;
    r.dataset = cells[0];
    if (r.dataset.empty()) throw Error(where + ": empty dataset name");
    if (!seen.insert(r.dataset).second) throw Error(where + ": duplicate dataset " + r.dataset);
    r.accuracy = to_double(cells[1], where);
    if (cells.size() > 2 && !cells[2].empty()) r.correct = to_int(cells[2], where);
    if (cells.size() > 3 && !cells[3].empty()) r.total = to_int(cells[3], where);
    run.datasets.push_back(std::move(r));
  }
  return run;
}

void write_results_csv(std::ostream& out, const RunResults& run) {
  out << "dataset,accuracy,correct,total\n";
  for (const auto& d : run.datasets) {
    out << d.dataset << ',' << format_real(d.accuracy) << ',';
    if (d.correct) out << *d.correct;
    out << ',';
    if (d.total) out << *d.total;
    out << '\n';
  }
}

RunReport compare_runs(const RunResults& baseline, std::span<const RunResults> treatments) {
  RunReport report;
  std::map<std::string, double> base;
  for (const auto& d : baseline.datasets) {
    report.datasets.push_back(d.dataset);
    base[d.dataset] = d.accuracy;
  }

  std::vector<std::map<std::string, double>> runs;
  for (const auto& t : treatments) {
    std::map<std::string, double> m;
    for (const auto& d : t.datasets) m[d.dataset] = d.accuracy;
    std::vector<std::string> diff;
    for (const auto& [k, v] : base) {
      if (!m.contains(k)) diff.push_back(k + " (only in " + baseline.name + ")");
    }
    for (const auto& [k, v] : m) {
      if (!base.contains(k)) diff.push_back(k + " (only in " + t.name + ")");
    }
    if (!diff.empty()) {
      std::string msg = "dataset sets differ between " + baseline.name + " and " + t.name + ":";
      for (const auto& d : diff) msg += " " + d;
      throw Error(msg);
    }
    runs.push_back(std::move(m));
  }

  auto add_row = [&](const std::string& name, const std::map<std::string, double>& acc) {
    ReportRow row;
    row.run = name;
    for (const auto& ds : report.datasets) {
      row.accuracy.push_back(acc.at(ds));
      row.delta.push_back(acc.at(ds) - base.at(ds));
    }
    report.rows.push_back(std::move(row));
  };
  add_row(baseline.name, base);
  for (std::size_t i = 0; i < treatments.size(); ++i) add_row(treatments[i].name, runs[i]);

  for (std::size_t col = 0; col < report.datasets.size(); ++col) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& row : report.rows) best = std::max(best, row.accuracy[col]);
    for (auto& row : report.rows) row.best.push_back(row.accuracy[col] == best);
  }
  return report;
}

void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "run,dataset,accuracy,delta,best\n";
  for (const auto& row : report.rows) {
    for (std::size_t c = 0; c < report.datasets.size(); ++c) {
      out << row.run << ',' << report.datasets[c] << ',' << format_real(row.accuracy[c]) << ','
          << format_real(row.delta[c]) << ',' << (row.best[c] ? 1 : 0) << '\n';
    }
  }
}

std::string format_report_table(const RunReport& report) {
  std::size_t name_w = 3;
  for (const auto& r : report.rows) name_w = std::max(name_w, r.run.size());
  std::vector<std::string> header{pad_right("run", name_w)};
  std::vector<std::vector<std::string>> cells(report.rows.size());
  std::vector<std::size_t> widths(report.datasets.size());
  for (std::size_t c = 0; c < report.datasets.size(); ++c) {
    widths[c] = report.datasets[c].size();
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
      const auto& row = report.rows[r];
      std::string cell = fixed(row.accuracy[c], 2);
      if (r > 0) cell += " (" + format_signed(row.delta[c], 2) + ")";
      if (row.best[c]) cell += " *";
      widths[c] = std::max(widths[c], cell.size());
      cells[r].push_back(std::move(cell));
    }
  }
  std::ostringstream os;
  os << pad_right("run", name_w);
  for (std::size_t c = 0; c < report.datasets.size(); ++c) os << "  " << pad_left(report.datasets[c], widths[c]);
  os << '\n';
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    os << pad_right(report.rows[r].run, name_w);
    for (std::size_t c = 0; c < report.datasets.size(); ++c) os << "  " << pad_left(cells[r][c], widths[c]);
    os << '\n';
  }
  os << "(* = best in column)\n";
  return os.str();
}

}  // namespace vdforge::analysis
