#pragma once

// Deterministic synthetic QA corpus: each instance is a grid of integers
// rendered with a 5x7 bitmap font at a per-instance glyph height, and asks
// for the value in one cell. Whether a degraded view is still answerable is
// decided by a legibility score compared against a fixed threshold, so the
// behavior of the whole pipeline on this corpus is known in closed form.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vdforge/corpus.hpp"
#include "vdforge/degrade.hpp"

namespace vdforge::synth {

// Legibility threshold in pixels of effective glyph height. An artifact
// constant, shared by the generator and the synthetic policy.
inline constexpr double kDefaultTau = 6.0;
// Noise sigma at which glyphs become fully illegible.
inline constexpr double kNoiseIllegibleSigma = 0.3;

struct SynthSpec {
  int n = 100;
  std::uint64_t seed = 0;
  int glyph_px_min = 30;
  int glyph_px_max = 90;
  int rows = 3;
  int cols = 3;
  int value_min = 0;
  int value_max = 999;
  double tau = kDefaultTau;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

// Parses "key = value" lines ('#' starts a comment). Unknown keys throw.
SynthSpec parse_synth_spec(std::string_view text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string format_synth_spec(const SynthSpec& spec);

// Everything needed to render or re-read one instance.
struct GridModel {
  int glyph_px = 0;
  int rows = 0;
  int cols = 0;
  int max_chars = 1;        // widest value in the spec's range
  std::vector<int> values;  // row-major
  int query_row = 0;        // 0-based
  int query_col = 0;

  int value(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

// Draws instance `index` of the corpus described by `spec`.
GridModel grid_model(const SynthSpec& spec, int index);

struct GridLayout {
  int glyph_h = 0;
  int glyph_w = 0;
  int gap = 0;
  int pad = 0;
  int max_chars = 0;
  int cell_w = 0;
  int cell_h = 0;
  int width = 0;
  int height = 0;

  // Top-left pixel of character slot `k` in cell (r, c).
  std::pair<int, int> glyph_origin(int r, int c, int k) const;
};

GridLayout grid_layout(const GridModel& model);

// 7 rows of 5 bits (MSB = leftmost column) for '0'-'9' and '-'.
const std::array<std::uint8_t, 7>& glyph_bitmap(char ch);

// Black glyphs on white with light-gray cell borders.
Image render_grid(const GridModel& model);

std::string question_for(int query_row, int query_col);
std::string instance_id(int index);

// Writes `<out_dir>/instances.jsonl` and `<out_dir>/images/<id>.png`.
std::vector<QaInstance> gen_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

// Effective glyph height after the view's degradation.
double legibility_score(int glyph_px, const ViewSpec& view);
bool is_legible(double score, double tau);

}  // namespace vdforge::synth
