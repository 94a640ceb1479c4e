#include <bit>
#include <cstring>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "vdforge/image_io.hpp"
#include "vdforge/synthbench.hpp"

using namespace vdforge;
using namespace vdforge::synth;

namespace {

bool is_border(const Image& img, int x, int y) {
  return img.at(x, y, 0) == 200 && img.at(x, y, 1) == 200 && img.at(x, y, 2) == 200;
}

bool is_ink(const Image& img, int x, int y) { return img.at(x, y, 0) < 128; }

// Positions of full-height vertical border lines / full-width horizontal ones.
std::vector<int> border_columns(const Image& img) {
  std::vector<int> xs;
  for (int x = 0; x < img.width; ++x) {
    bool all = true;
    for (int y = 0; y < img.height && all; ++y) all = is_border(img, x, y);
    if (all) xs.push_back(x);
  }
  return xs;
}

std::vector<int> border_rows(const Image& img) {
  std::vector<int> ys;
  for (int y = 0; y < img.height; ++y) {
    bool all = true;
    for (int x = 0; x < img.width && all; ++x) all = is_border(img, x, y);
    if (all) ys.push_back(y);
  }
  return ys;
}

// Reads the number printed in one cell. Cell bounds come from the detected
// borders; glyph metrics follow from the glyph height alone. Each slot is
// sampled at the 5x7 sub-cell centers and matched against the font (or a
// blank) by Hamming distance.
std::string read_cell(const Image& img, int x_left, int y_top, int glyph_h, int slots) {
  const int gw = std::max(1, static_cast<int>(std::lround(glyph_h * 5.0 / 7.0)));
  const int gap = std::max(1, glyph_h / 7);
  const int pad = std::max(2, glyph_h / 2);
  std::string out;
  for (int k = 0; k < slots; ++k) {
    const int ox = x_left + pad + k * (gw + gap);
    const int oy = y_top + pad;
    std::array<std::uint8_t, 7> seen{};
    for (int fy = 0; fy < 7; ++fy)
      for (int fx = 0; fx < 5; ++fx) {
        const int x = ox + (fx * gw / 5 + (fx + 1) * gw / 5) / 2;
        const int y = oy + (fy * glyph_h / 7 + (fy + 1) * glyph_h / 7) / 2;
        if (is_ink(img, x, y)) seen[fy] |= static_cast<std::uint8_t>(0b10000 >> fx);
      }
    auto dist = [&](const std::array<std::uint8_t, 7>& bits) {
      int d = 0;
      for (int i = 0; i < 7; ++i) d += std::popcount(static_cast<unsigned>(seen[i] ^ bits[i]));
      return d;
    };
    char best = ' ';
    int best_d = dist({});
    for (char ch : std::string("0123456789-")) {
      const int d = dist(glyph_bitmap(ch));
      if (d < best_d) best_d = d, best = ch;
    }
    REQUIRE(best_d == 0);
    if (best != ' ') out.push_back(best);
  }
  return out;
}

int parse_query(const std::string& q, const char* key) {
  const auto p = q.find(key);
  REQUIRE(p != std::string::npos);
  return std::stoi(q.substr(p + std::strlen(key))) - 1;
}

}  // namespace

TEST_CASE("glyph bitmaps are pairwise distinct") {
  const std::string chars = "0123456789-";
  for (char a : chars)
    for (char b : chars)
      if (a != b) CHECK(glyph_bitmap(a) != glyph_bitmap(b));
  CHECK_THROWS_AS(glyph_bitmap('x'), Error);
}

TEST_CASE("corpus generation is byte-deterministic") {
  oracle::TempDir a("synth"), b("synth");
  SynthSpec spec;
  spec.n = 12;
  spec.seed = 77;
  gen_corpus(spec, a.path());
  gen_corpus(spec, b.path());
  CHECK(oracle::slurp(a / "instances.jsonl") == oracle::slurp(b / "instances.jsonl"));
  for (int i = 0; i < spec.n; ++i) {
    const std::string rel = "images/" + instance_id(i) + ".png";
    CHECK(oracle::slurp(a / rel) == oracle::slurp(b / rel));
  }
  spec.seed = 78;
  oracle::TempDir c("synth");
  gen_corpus(spec, c.path());
  CHECK(oracle::slurp(a / "instances.jsonl") != oracle::slurp(c / "instances.jsonl"));
}

TEST_CASE("n instances produce n manifest lines and n images") {
  oracle::TempDir dir("synth");
  SynthSpec spec;
  spec.n = 100;
  spec.rows = 2;
  spec.cols = 2;
  spec.value_max = 99;
  gen_corpus(spec, dir.path());
  CHECK(oracle::lines_of(oracle::slurp(dir / "instances.jsonl")).size() == 100);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "images")) files += e.is_regular_file();
  CHECK(files == 100);
  const auto inst = load_instances(dir / "instances.jsonl");
  for (const auto& i : inst) {
    REQUIRE(i.glyph_px.has_value());
    CHECK(*i.glyph_px >= spec.glyph_px_min);
    CHECK(*i.glyph_px <= spec.glyph_px_max);
  }
}

TEST_CASE("the rendered image encodes the gold answer at the queried cell") {
  oracle::TempDir dir("synth");
  SynthSpec spec;
  spec.n = 25;
  spec.seed = 3;
  spec.value_min = -99;
  spec.value_max = 999;
  const auto inst = gen_corpus(spec, dir.path());
  for (const auto& i : inst) {
    const Image img = read_png(dir / i.image_path);
    const auto xs = border_columns(img);
    const auto ys = border_rows(img);
    REQUIRE(xs.size() == static_cast<std::size_t>(spec.cols + 1));
    REQUIRE(ys.size() == static_cast<std::size_t>(spec.rows + 1));
    const int r = parse_query(i.question, "row ");
    const int c = parse_query(i.question, "column ");
    REQUIRE(r < spec.rows);
    REQUIRE(c < spec.cols);
    const std::string got = read_cell(img, xs[c], ys[r], *i.glyph_px, 3);
    CHECK(got == *i.gold_answer);
  }
}

TEST_CASE("legibility score examples") {
  CHECK(legibility_score(20, ViewSpec::hq()) == 20.0);
  CHECK(legibility_score(20, ViewSpec::resolution(0.1)) == doctest::Approx(2.0));
  CHECK_FALSE(is_legible(legibility_score(20, ViewSpec::resolution(0.1)), kDefaultTau));
  CHECK(legibility_score(20, ViewSpec::resolution(1.0)) == 20.0);
  CHECK(is_legible(legibility_score(60, ViewSpec::resolution(0.1)), kDefaultTau));
  CHECK_FALSE(is_legible(legibility_score(59, ViewSpec::resolution(0.1)), kDefaultTau));
  CHECK(legibility_score(30, ViewSpec::gaussian_noise(0.3, 0)) == 0.0);
  CHECK(legibility_score(30, ViewSpec::gaussian_noise(0.15, 0)) == doctest::Approx(15.0));
  CHECK(legibility_score(30, ViewSpec::motion_blur(5, 0)) == doctest::Approx(6.0));
  CHECK_THROWS_AS(legibility_score(0, ViewSpec::hq()), Error);
}

TEST_CASE("legibility is monotone in glyph size and in degradation") {
  for (int g = 1; g < 120; ++g) {
    double prev = 1e18;
    for (int k = 100; k >= 1; --k) {
      const auto v = ViewSpec::resolution(k / 100.0);
      const double s = legibility_score(g, v);
      CHECK(s <= prev);
      prev = s;
      CHECK(legibility_score(g + 1, v) >= s);
    }
    for (int len = 1; len < 20; ++len)
      CHECK(legibility_score(g, ViewSpec::motion_blur(len + 1, 0)) <=
            legibility_score(g, ViewSpec::motion_blur(len, 0)));
  }
}

TEST_CASE("quality-sensitive count at alpha 0.1 follows from the glyph sizes") {
  oracle::TempDir dir("synth");
  SynthSpec spec;
  spec.n = 200;
  spec.seed = 11;
  spec.rows = 2;
  spec.cols = 2;
  spec.value_max = 99;
  const auto inst = gen_corpus(spec, dir.path());
  const auto lq = ViewSpec::resolution(0.1);
  int below = 0, legible_lq = 0;
  for (const auto& i : inst) {
    below += *i.glyph_px < 60;
    legible_lq += is_legible(legibility_score(*i.glyph_px, lq), spec.tau);
    CHECK(is_legible(legibility_score(*i.glyph_px, ViewSpec::hq()), spec.tau));
  }
  CHECK(below + legible_lq == spec.n);
  CHECK(below > 0);
  CHECK(legible_lq > 0);
}

TEST_CASE("spec text round-trips and rejects unknown keys") {
  SynthSpec s;
  s.n = 7;
  s.seed = 123456789012345ULL;
  s.glyph_px_min = 10;
  s.glyph_px_max = 12;
  s.rows = 4;
  s.cols = 1;
  s.value_min = -5;
  s.value_max = 5;
  s.tau = 6.5;
  CHECK(parse_synth_spec(format_synth_spec(s)) == s);
  CHECK(parse_synth_spec("# comment\nn = 3\n\n").n == 3);
  CHECK_THROWS_AS(parse_synth_spec("colour = red\n"), Error);
  CHECK_THROWS_AS(parse_synth_spec("n = many\n"), Error);
  SynthSpec bad;
  bad.glyph_px_min = 50;
  bad.glyph_px_max = 40;
  CHECK_THROWS_AS(bad.validate(), Error);
}
