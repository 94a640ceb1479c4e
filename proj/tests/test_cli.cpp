#include <rapidjson/document.h>

#include <cstdio>
#include <sys/wait.h>

#include "doctest.h"
#include "oracles.hpp"
#include "vdforge/pairs.hpp"

namespace {

const std::filesystem::path kData = VDFORGE_TEST_DATA;

struct Result {
  int rc = -1;
  std::string out;
  std::string err;
};

Result run_cli(const oracle::TempDir& dir, const std::string& args) {
  const auto out = dir / "_stdout";
  const auto err = dir / "_stderr";
  const std::string cmd = "VDFORGE_CACHE_DIR= \"" + std::string(VDFORGE_BIN) + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = oracle::slurp(out);
  r.err = oracle::slurp(err);
  return r;
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("usage errors exit 2 with usage text on stderr") {
  oracle::TempDir dir("cli");
  auto r = run_cli(dir, "--bogus");
  CHECK(r.rc == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(r.out.empty());

  r = run_cli(dir, "");
  CHECK(r.rc == 2);

  r = run_cli(dir, "pairs --mode vd-lb");
  CHECK(r.rc == 2);
  CHECK(r.err.find("--responses") != std::string::npos);

  r = run_cli(dir, "report");
  CHECK(r.rc == 2);

  r = run_cli(dir, "--help");
  CHECK(r.rc == 0);
  for (const char* sub : {"synth", "degrade", "generate", "grade", "pairs", "train", "sweep", "report"})
    CHECK(r.out.find(sub) != std::string::npos);
}

TEST_CASE("runtime failures exit 1 with a message") {
  oracle::TempDir dir("cli");
  auto r = run_cli(dir, "grade --instances " + q(dir / "missing.jsonl") + " --responses " + q(dir / "r.jsonl"));
  CHECK(r.rc == 1);
  CHECK(r.err.find("missing.jsonl") != std::string::npos);
}

TEST_CASE("synthetic pipeline from corpus to trained policy") {
  oracle::TempDir dir("cli");
  const auto corpus = dir / "corpus";
  auto r = run_cli(dir, "-q synth --out " + q(corpus) +
                            " --n 40 --rows 2 --cols 2 --value-max 99 --glyph-min 30 --glyph-max 90 --seed 5");
  REQUIRE(r.rc == 0);
  CHECK(std::filesystem::exists(corpus / "instances.jsonl"));
  CHECK(std::filesystem::exists(corpus / "synth.conf"));

  const auto responses = corpus / "responses.jsonl";
  r = run_cli(dir, "-q generate --instances " + q(corpus / "instances.jsonl") + " --out " + q(responses));
  REQUIRE(r.rc == 0);
  CHECK(oracle::lines_of(oracle::slurp(responses)).size() == 80);

  SUBCASE("pairs on ungraded records fail and name the record") {
    r = run_cli(dir, "pairs --mode vd-lb --responses " + q(responses) + " --out " + q(dir / "p.jsonl"));
    CHECK(r.rc == 1);
    CHECK(r.err.find("ungraded") != std::string::npos);
    CHECK(r.err.find("synth-00000") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "p.jsonl"));
  }

  SUBCASE("grade, pair, train") {
    r = run_cli(dir, "-q grade --instances " + q(corpus / "instances.jsonl") + " --responses " + q(responses));
    REQUIRE(r.rc == 0);
    const auto graded = vdforge::load_records(responses);
    REQUIRE(graded.size() == 80);
    for (const auto& rec : graded) CHECK(rec.correct.has_value());

    const auto pairs = dir / "pairs.jsonl";
    r = run_cli(dir, "-q pairs --mode vd-lb --responses " + q(responses) + " --out " + q(pairs));
    REQUIRE(r.rc == 0);
    const auto lines = oracle::lines_of(oracle::slurp(pairs));
    REQUIRE_FALSE(lines.empty());
    const auto instances = vdforge::load_instances(corpus / "instances.jsonl");
    std::size_t small = 0;
    for (const auto& i : instances) small += *i.glyph_px < 60;
    CHECK(lines.size() == small);
    for (const auto& line : lines) {
      rapidjson::Document d;
      d.Parse(line.c_str());
      REQUIRE_FALSE(d.HasParseError());
      CHECK(std::string(d["mode"].GetString()) == "vd_lb");
    }

    r = run_cli(dir, "-q train --pairs " + q(pairs) + " --steps 50 --history " + q(dir / "h.csv") + " --out " +
                         q(dir / "policy.json"));
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("final_dpo_loss=") != std::string::npos);
    CHECK(r.out.find("train_margin=") != std::string::npos);
    CHECK(oracle::lines_of(oracle::slurp(dir / "h.csv")).size() == 51);
    CHECK(std::filesystem::exists(dir / "policy.json"));

    r = run_cli(dir, "report --responses " + q(responses) + " --out-dir " + q(dir / "rep"));
    REQUIRE(r.rc == 0);
    CHECK(std::filesystem::exists(dir / "rep/categories.csv"));
    CHECK(oracle::lines_of(oracle::slurp(dir / "rep/lengths.csv"))[0] == "view,category,mean,median,p25,p75,n");
  }

  SUBCASE("sweep writes a monotone csv") {
    r = run_cli(dir, "-q sweep --instances " + q(corpus / "instances.jsonl") + " --out " + q(dir / "s.csv"));
    REQUIRE(r.rc == 0);
    const auto lines = oracle::lines_of(oracle::slurp(dir / "s.csv"));
    REQUIRE(lines.size() == 7);
    CHECK(lines[0] == "alpha,accuracy,correct,total");
    double prev = 2;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto c1 = lines[i].find(',');
      const double acc = std::stod(lines[i].substr(c1 + 1));
      CHECK(acc <= prev);
      prev = acc;
    }
  }
}

TEST_CASE("printed config is accepted back and reproduces itself") {
  oracle::TempDir dir("cli");
  auto r = run_cli(dir, "pairs --print-config --mode vd-lb --alpha 0.2 --responses x.jsonl --out y.jsonl --no-dedup");
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("pairs.mode") != std::string::npos);
  CHECK(r.out.find("0.2") != std::string::npos);
  oracle::spit(dir / "run.conf", r.out);
  auto again = run_cli(dir, "--config " + q(dir / "run.conf") + " pairs --print-config");
  REQUIRE(again.rc == 0);
  CHECK(again.out == r.out);
}

TEST_CASE("report renders the reference fixtures") {
  oracle::TempDir dir("cli");
  auto r = run_cli(dir, "report --counts 456,607,448,73");
  REQUIRE(r.rc == 0);
  for (const char* pct : {"28.8", "38.3", "4.6", "28.3"}) CHECK(r.out.find(pct) != std::string::npos);

  r = run_cli(dir, "report --sweep " + q(kData / "sweep_hitab.csv"));
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("67.11") != std::string::npos);
  CHECK(r.out.find("33.40") != std::string::npos);

  r = run_cli(dir, "report --baseline " + q(kData / "baseline_7b.csv") + " --run " + q(kData / "vd_lf_7b.csv") +
                       " --run " + q(kData / "vd_lb_7b.csv") + " --out-dir " + q(dir.path()));
  REQUIRE(r.rc == 0);
  CHECK(r.out.find("+3.98") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "report.csv"));
}

TEST_CASE("degrade writes one file per view") {
  oracle::TempDir dir("cli");
  auto r = run_cli(dir, "degrade --image " + q(kData / "quadrants.jpg") + " --views res:0.5 --out " + q(dir / "o.png"));
  REQUIRE(r.rc == 0);
  CHECK(std::filesystem::exists(dir / "o.png"));
}
