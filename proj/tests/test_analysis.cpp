#include <map>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "vdforge/analysis.hpp"

using namespace vdforge;
using namespace vdforge::analysis;

namespace {

const std::filesystem::path kData = VDFORGE_TEST_DATA;

std::vector<ViewPair> graded_views(const std::vector<std::pair<bool, bool>>& g) {
  std::vector<QaInstance> inst;
  std::vector<ResponseRecord> recs;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::string id = "v" + std::to_string(i);
    inst.push_back(oracle::instance(id));
    recs.push_back(oracle::record(id, "hq", "hq", g[i].first));
    recs.push_back(oracle::record(id, "res:0.1", "lq", g[i].second));
  }
  return join_views(inst, recs, "res:0.1");
}

std::vector<QaInstance> synth_corpus(int n, std::uint64_t seed) {
  std::vector<QaInstance> out;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    QaInstance q = oracle::instance("k" + std::to_string(i));
    q.question = "What is the value in row 1, column 1?";
    q.gold_answer = std::to_string(10 + rng() % 90);
    q.glyph_px = 30 + static_cast<int>(rng() % 61);
    out.push_back(q);
  }
  return out;
}

// Backend that fails on one view label and otherwise delegates.
class FlakyBackend final : public policy::Backend {
 public:
  FlakyBackend(policy::Backend& inner, std::string bad) : inner_(inner), bad_(std::move(bad)) {}
  const std::string& policy_id() const override { return inner_.policy_id(); }
  ResponseRecord generate(const policy::GenerationRequest& req) override {
    if (req.view.label() == bad_) throw Error("service unavailable");
    return inner_.generate(req);
  }

 private:
  policy::Backend& inner_;
  std::string bad_;
};

RunResults run(const std::string& name, std::vector<std::pair<std::string, double>> acc) {
  RunResults r;
  r.name = name;
  for (auto& [d, a] : acc) r.datasets.push_back({d, a, std::nullopt, std::nullopt});
  return r;
}

}  // namespace

TEST_CASE("reference sweep counts give the expected percentages") {
  CHECK(format_percent(make_sweep_row(1.0, 1063, 1584).accuracy, 2) == "67.11");
  CHECK(format_percent(make_sweep_row(0.1, 529, 1584).accuracy, 2) == "33.40");

  const auto sweep = read_sweep_csv(kData / "sweep_hitab.csv");
  const std::vector<std::pair<std::int64_t, std::string>> want = {
      {1063, "67.11"}, {1077, "67.99"}, {1077, "67.99"}, {1055, "66.60"}, {895, "56.50"}, {529, "33.40"}};
  REQUIRE(sweep.rows.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(sweep.rows[i].alpha == kDefaultSweepAlphas[i]);
    CHECK(sweep.rows[i].correct == want[i].first);
    CHECK(sweep.rows[i].total == 1584);
    CHECK(std::fabs(sweep.rows[i].accuracy - double(want[i].first) / 1584) <= 1e-12);
    CHECK(format_percent(sweep.rows[i].accuracy, 2) == want[i].second);
  }
  const auto table = format_sweep_table(sweep);
  CHECK(table.find("67.11") != std::string::npos);
  CHECK(table.find("33.40") != std::string::npos);
}

TEST_CASE("sweep rows validate their counts") {
  CHECK_THROWS_AS(make_sweep_row(1.0, 5, 4), Error);
  CHECK_THROWS_AS(make_sweep_row(1.0, -1, 4), Error);
  CHECK_THROWS_AS(make_sweep_row(0.0, 1, 4), Error);
  CHECK_THROWS_AS(make_sweep_row(1.0, 0, 0), Error);
}

TEST_CASE("sweep csv round-trips") {
  oracle::TempDir dir("sweep");
  SweepResult s;
  s.rows = {make_sweep_row(1.0, 3, 7), make_sweep_row(0.25, 1, 7)};
  write_sweep_csv(dir / "s.csv", s);
  const auto back = read_sweep_csv(dir / "s.csv");
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1].alpha == 0.25);
  CHECK(back.rows[1].accuracy == 1.0 / 7);
  oracle::spit(dir / "bad.csv", "a,b\n");
  CHECK_THROWS_AS(read_sweep_csv(dir / "bad.csv"), Error);
}

TEST_CASE("reference category counts give the expected fractions") {
  // Stable correct, quality sensitive, stable wrong, random fluctuation.
  const auto d = distribution_from_counts(456, 607, 448, 73);
  CHECK(d.total == 1584);
  CHECK(format_percent(d.fraction(Category::AlwaysCorrect), 1) == "28.8");
  CHECK(format_percent(d.fraction(Category::QualitySensitive), 1) == "38.3");
  CHECK(format_percent(d.fraction(Category::ParadoxicallyRobust), 1) == "4.6");
  CHECK(format_percent(d.fraction(Category::AlwaysWrong), 1) == "28.3");
  // HQ accuracy and LQ accuracy follow from the same counts.
  CHECK(d.count(Category::AlwaysCorrect) + d.count(Category::QualitySensitive) == 1063);
  CHECK(d.count(Category::AlwaysCorrect) + d.count(Category::ParadoxicallyRobust) == 529);
  const auto table = format_category_table(d);
  CHECK(table.find("38.3") != std::string::npos);
}

TEST_CASE("rounded category fractions sum to 100 within the rounding residue") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 500; ++t) {
    const auto d = distribution_from_counts(rng() % 1000, rng() % 1000, rng() % 1000, 1 + rng() % 1000);
    double sum = 0;
    for (Category c : kAllCategories) sum += std::stod(format_percent(d.fraction(c), 1));
    CHECK(std::fabs(sum - 100.0) <= 0.2 + 1e-9);
  }
}

TEST_CASE("all-correct fixture puts every instance in one category") {
  std::vector<std::pair<bool, bool>> g(37, {true, true});
  const auto views = graded_views(g);
  const auto d = category_distribution(views);
  CHECK(d.count(Category::AlwaysCorrect) == 37);
  CHECK(d.count(Category::QualitySensitive) == 0);
  CHECK(d.count(Category::AlwaysWrong) == 0);
  CHECK(d.count(Category::ParadoxicallyRobust) == 0);
  CHECK(d.total == 37);
}

TEST_CASE("category counts on 1000 instances equal a direct recount") {
  std::mt19937_64 rng(33);
  std::vector<std::pair<bool, bool>> g;
  for (int i = 0; i < 1000; ++i) g.push_back({rng() % 3 != 0, rng() % 2 == 0});
  std::map<std::pair<bool, bool>, std::int64_t> brute;
  for (auto p : g) ++brute[p];
  const auto d = category_distribution(graded_views(g));
  CHECK(d.count(Category::AlwaysCorrect) == brute[{true, true}]);
  CHECK(d.count(Category::QualitySensitive) == brute[{true, false}]);
  CHECK(d.count(Category::AlwaysWrong) == brute[{false, false}]);
  CHECK(d.count(Category::ParadoxicallyRobust) == brute[{false, true}]);
  CHECK(d.total == 1000);

  std::ostringstream csv;
  write_categories_csv(csv, d);
  CHECK(oracle::lines_of(csv.str()).size() == 5);
}

TEST_CASE("ungraded pairs are rejected by the distribution") {
  auto views = graded_views({{true, false}});
  views[0].lq.correct.reset();
  CHECK_THROWS_AS(category_distribution(views), Error);
}

TEST_CASE("length quartiles match the sort-and-index oracle") {
  std::mt19937_64 rng(17);
  std::vector<QaInstance> inst;
  std::vector<ResponseRecord> recs;
  std::map<std::pair<std::string, Category>, std::vector<std::int64_t>> groups;
  for (int i = 0; i < 400; ++i) {
    const std::string id = "L" + std::to_string(i);
    inst.push_back(oracle::instance(id));
    const bool hc = rng() % 2, lc = rng() % 3 == 0;
    auto h = oracle::record(id, "hq", "x", hc);
    auto l = oracle::record(id, "res:0.1", "y", lc);
    h.token_count = static_cast<std::int64_t>(rng() % 200);
    l.token_count = static_cast<std::int64_t>(rng() % 300);
    const Category c = classify(h, l);
    groups[{"hq", c}].push_back(h.token_count);
    groups[{"res:0.1", c}].push_back(l.token_count);
    recs.push_back(h);
    recs.push_back(l);
  }
  const auto views = join_views(inst, recs, "res:0.1");
  const auto report = length_stats(views);
  std::size_t present = 0;
  for (const auto& [key, xs] : groups) {
    const auto* s = report.find(key.first, key.second);
    REQUIRE(s != nullptr);
    ++present;
    CHECK(s->n == xs.size());
    long double sum = 0;
    for (auto x : xs) sum += x;
    CHECK(s->mean == doctest::Approx(static_cast<double>(sum / xs.size())).epsilon(1e-12));
    CHECK(s->p25 == doctest::Approx(oracle::quartile(xs, 1)).epsilon(1e-12));
    CHECK(s->median == doctest::Approx(oracle::quartile(xs, 2)).epsilon(1e-12));
    CHECK(s->p75 == doctest::Approx(oracle::quartile(xs, 3)).epsilon(1e-12));
  }
  CHECK(report.summaries.size() == present);

  // Histogram bins of each group add up to the group size.
  std::map<std::pair<std::string, Category>, std::int64_t> binned;
  for (const auto& b : report.histogram) {
    CHECK(b.hi - b.lo == 10);
    binned[{b.view, b.category}] += b.count;
  }
  for (const auto& [key, xs] : groups) CHECK(binned[key] == static_cast<std::int64_t>(xs.size()));

  std::ostringstream csv;
  write_lengths_csv(csv, report);
  CHECK(oracle::lines_of(csv.str())[0] == "view,category,mean,median,p25,p75,n");
}

TEST_CASE("singleton and empty length groups") {
  auto views = graded_views({{true, false}});
  views[0].hq.token_count = 17;
  views[0].lq.token_count = 40;
  const auto report = length_stats(views);
  const auto* s = report.find("hq", Category::QualitySensitive);
  REQUIRE(s != nullptr);
  CHECK(s->mean == 17);
  CHECK(s->median == 17);
  CHECK(s->p25 == 17);
  CHECK(s->p75 == 17);
  CHECK(report.find("hq", Category::AlwaysCorrect) == nullptr);
  CHECK(report.summaries.size() == 2);
}

TEST_CASE("compare_runs computes the HiTab delta") {
  const auto base = read_results_csv(kData / "baseline_7b.csv");
  const auto lf = read_results_csv(kData / "vd_lf_7b.csv");
  CHECK(base.name == "baseline_7b");
  const RunResults treatments[] = {lf};
  const auto report = compare_runs(base, treatments);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.datasets[0] == "HiTab");
  CHECK(std::fabs(report.rows[1].delta[0] - (71.91 - 67.93)) <= 1e-12);
  CHECK(format_signed(report.rows[1].delta[0], 2) == "+3.98");
  CHECK(format_report_table(report).find("71.91 (+3.98) *") != std::string::npos);
}

TEST_CASE("comparing a run with itself gives the zero report") {
  const auto base = read_results_csv(kData / "vd_lb_7b.csv");
  const RunResults same[] = {base};
  const auto report = compare_runs(base, same);
  for (const auto& row : report.rows)
    for (double d : row.delta) CHECK(d == 0.0);
  CHECK(format_signed(-0.0, 2) == "0.00");
  CHECK(format_signed(-0.001, 2) == "0.00");
}

TEST_CASE("best markers match exhaustive comparison") {
  const auto base = read_results_csv(kData / "baseline_7b.csv");
  const RunResults treatments[] = {read_results_csv(kData / "sft_7b.csv"), read_results_csv(kData / "vd_lf_7b.csv"),
                                   read_results_csv(kData / "vd_lb_7b.csv")};
  const auto report = compare_runs(base, treatments);
  REQUIRE(report.rows.size() == 4);
  for (std::size_t c = 0; c < report.datasets.size(); ++c) {
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
      bool beaten = false;
      for (std::size_t o = 0; o < report.rows.size(); ++o)
        beaten = beaten || report.rows[o].accuracy[c] > report.rows[r].accuracy[c];
      CHECK(report.rows[r].best[c] == !beaten);
    }
  }
  // In the reference runs VD-LF leads on HiTab and VD-LB on WikiTQ.
  CHECK(report.rows[2].best[0]);
  CHECK(report.rows[3].best[1]);

  const auto tied = run("t", {{"a", 50.0}, {"b", 40.0}});
  const RunResults again[] = {run("u", {{"a", 50.0}, {"b", 39.0}})};
  const auto tie_report = compare_runs(tied, again);
  CHECK(tie_report.rows[0].best[0]);
  CHECK(tie_report.rows[1].best[0]);

  std::ostringstream csv;
  write_report_csv(csv, report);
  CHECK(oracle::lines_of(csv.str()).size() == 1 + 4 * 5);
}

TEST_CASE("differing dataset sets report the symmetric difference") {
  const auto a = run("a", {{"HiTab", 1}, {"VQA", 2}});
  const RunResults b[] = {run("b", {{"HiTab", 1}, {"GQA", 2}})};
  try {
    compare_runs(a, b);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("VQA") != std::string::npos);
    CHECK(msg.find("GQA") != std::string::npos);
    CHECK(msg.find("HiTab") == std::string::npos);
  }
}

TEST_CASE("results csv rejects malformed input") {
  oracle::TempDir dir("results");
  oracle::spit(dir / "a.csv", "name,score\nx,1\n");
  CHECK_THROWS_AS(read_results_csv(dir / "a.csv"), Error);
  oracle::spit(dir / "b.csv", "dataset,accuracy\nx,1\nx,2\n");
  CHECK_THROWS_AS(read_results_csv(dir / "b.csv"), Error);
  oracle::spit(dir / "c.csv", "dataset,accuracy\nx,high\n");
  CHECK_THROWS_AS(read_results_csv(dir / "c.csv"), Error);
}

TEST_CASE("replayed all-correct records give a perfect HQ sweep") {
  oracle::TempDir dir("replay");
  std::vector<QaInstance> inst;
  {
    policy::ResponseCache cache(dir / "r.jsonl");
    for (int i = 0; i < 9; ++i) {
      inst.push_back(oracle::instance("p" + std::to_string(i)));
      cache.insert(oracle::record(inst.back().id, "hq", "<answer>yes</answer>", {}, "cached"));
    }
  }
  policy::ReplayBackend replay(dir / "r.jsonl", "cached");
  policy::Generator gen(replay, nullptr, dir / "m.jsonl");
  const double alphas[] = {1.0};
  const auto s = resolution_sweep(gen, inst, alphas, grade::MetricSpec::exact());
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].accuracy == 1.0);
  CHECK(s.rows[0].total == 9);
}

TEST_CASE("synthetic sweep follows the threshold rule and drops across the knee") {
  const auto inst = synth_corpus(300, 1);
  policy::SyntheticBackend backend({});
  policy::Generator gen(backend, nullptr, "m.jsonl");
  const auto s = resolution_sweep(gen, inst, kDefaultSweepAlphas, grade::MetricSpec::exact(), {}, 4);
  REQUIRE(s.rows.size() == kDefaultSweepAlphas.size());
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    std::int64_t legible = 0;
    for (const auto& q : inst) legible += *q.glyph_px * kDefaultSweepAlphas[i] + 1e-9 >= 6.0;
    CHECK(s.rows[i].correct == legible);
    if (i > 0) CHECK(s.rows[i].accuracy <= s.rows[i - 1].accuracy);
  }
  // 0.2 keeps every glyph of at least 30 px legible; 0.1 loses those below 60.
  CHECK(s.rows[4].accuracy == 1.0);
  CHECK(s.rows[4].accuracy - s.rows[5].accuracy > 0.20);
}

TEST_CASE("sweep accuracy is invariant to instance order") {
  auto inst = synth_corpus(120, 2);
  policy::SyntheticBackend backend({});
  policy::Generator gen(backend, nullptr, "m.jsonl");
  const double alphas[] = {0.3, 0.1, 0.07};
  const auto a = resolution_sweep(gen, inst, alphas, grade::MetricSpec::exact());
  std::shuffle(inst.begin(), inst.end(), std::mt19937_64(5));
  const auto b = resolution_sweep(gen, inst, alphas, grade::MetricSpec::exact(), {}, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.rows[i].correct == b.rows[i].correct);
    CHECK(a.rows[i].accuracy == b.rows[i].accuracy);
  }
}

TEST_CASE("a failing backend keeps the completed sweep rows") {
  const auto inst = synth_corpus(20, 3);
  policy::SyntheticBackend inner({});
  FlakyBackend flaky(inner, "res:0.2");
  policy::Generator gen(flaky, nullptr, "m.jsonl");
  const double alphas[] = {1.0, 0.5, 0.2, 0.1};
  try {
    resolution_sweep(gen, inst, alphas, grade::MetricSpec::exact(), {}, 2);
    FAIL("expected a sweep failure");
  } catch (const SweepFailure& e) {
    REQUIRE(e.partial().rows.size() == 2);
    CHECK(e.partial().rows[1].alpha == 0.5);
    CHECK(std::string(e.what()).find("service unavailable") != std::string::npos);
  }
  auto no_gold = inst;
  no_gold[4].gold_answer.reset();
  CHECK_THROWS_AS(resolution_sweep(gen, no_gold, alphas, grade::MetricSpec::exact()), Error);
}

TEST_CASE("synthetic LQ responses run longer in the quality-sensitive group") {
  const auto inst = synth_corpus(200, 4);
  policy::SyntheticBackend backend({});
  policy::Generator gen(backend, nullptr, "m.jsonl");
  const std::vector<ViewSpec> views = {ViewSpec::hq(), ViewSpec::resolution(0.1)};
  const std::vector<DecodeParams> decodes = {{}};
  auto recs = gen.generate_all(inst, views, decodes, 4);
  grade::grade_records(recs, inst, grade::MetricSpec::exact());
  const auto vp = join_views(inst, recs, "res:0.1");
  const auto report = length_stats(vp);
  const auto* hq = report.find("hq", Category::QualitySensitive);
  const auto* lq = report.find("res:0.1", Category::QualitySensitive);
  REQUIRE(hq);
  REQUIRE(lq);
  double hs = 0, ls = 0, n = 0;
  for (const auto& v : vp)
    if (classify(v.hq, v.lq) == Category::QualitySensitive) hs += v.hq.token_count, ls += v.lq.token_count, ++n;
  CHECK(hq->mean == doctest::Approx(hs / n));
  CHECK(lq->mean == doctest::Approx(ls / n));
  CHECK(lq->mean > hq->mean);
}
