#include "vdforge/synthbench.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vdforge/image_io.hpp"
#include "vdforge/rng.hpp"

namespace vdforge::synth {

namespace {

constexpr std::array<std::array<std::uint8_t, 7>, 11> kFont = {{
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
    {0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000},  // -
}};

constexpr std::uint8_t kInk = 0;
constexpr std::uint8_t kPaper = 255;
constexpr std::uint8_t kBorder = 200;

int char_width(int v) { return static_cast<int>(std::to_string(v).size()); }

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error("invalid value '" + v + "' for synth spec key '" + key + "'");
  }
  return out;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, std::uint8_t v) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
}

}  // namespace

void SynthSpec::validate() const {
  if (n < 1) throw Error("synth spec: n must be >= 1");
  if (glyph_px_min < 1) throw Error("synth spec: glyph_px_min must be >= 1");
  if (glyph_px_max < glyph_px_min) throw Error("synth spec: glyph_px_max < glyph_px_min");
  if (glyph_px_max > 1000) throw Error("synth spec: glyph_px_max must be <= 1000");
  if (rows < 1 || cols < 1) throw Error("synth spec: degenerate grid");
  if (rows * cols > 400) throw Error("synth spec: grid larger than 400 cells");
  if (value_max < value_min) throw Error("synth spec: value_max < value_min");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("synth spec: tau must be > 0");
}

SynthSpec parse_synth_spec(std::string_view text) {
  SynthSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("synth spec line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string val = trim(std::string_view(line).substr(eq + 1));
    if (key == "n") spec.n = parse_value<int>(key, val);
    else if (key == "seed") spec.seed = parse_value<std::uint64_t>(key, val);
    else if (key == "glyph_px_min") spec.glyph_px_min = parse_value<int>(key, val);
    else if (key == "glyph_px_max") spec.glyph_px_max = parse_value<int>(key, val);
    else if (key == "rows") spec.rows = parse_value<int>(key, val);
    else if (key == "cols") spec.cols = parse_value<int>(key, val);
    else if (key == "value_min") spec.value_min = parse_value<int>(key, val);
    else if (key == "value_max") spec.value_max = parse_value<int>(key, val);
    else if (key == "tau") spec.tau = parse_value<double>(key, val);
    else throw Error("synth spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  spec.validate();
  return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_spec(ss.str());
}

std::string format_synth_spec(const SynthSpec& spec) {
  std::ostringstream out;
  out << "n = " << spec.n << '\n'
      << "seed = " << spec.seed << '\n'
      << "glyph_px_min = " << spec.glyph_px_min << '\n'
      << "glyph_px_max = " << spec.glyph_px_max << '\n'
      << "rows = " << spec.rows << '\n'
      << "cols = " << spec.cols << '\n'
      << "value_min = " << spec.value_min << '\n'
      << "value_max = " << spec.value_max << '\n'
      << "tau = " << format_real(spec.tau) << '\n';
  return out.str();
}

GridModel grid_model(const SynthSpec& spec, int index) {
  spec.validate();
  std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(index))));
  GridModel m;
  m.rows = spec.rows;
  m.cols = spec.cols;
  m.max_chars = std::max(char_width(spec.value_min), char_width(spec.value_max));
  m.glyph_px = spec.glyph_px_min +
               static_cast<int>(uniform_below(
                   rng, static_cast<std::uint64_t>(spec.glyph_px_max - spec.glyph_px_min) + 1));
  const auto span = static_cast<std::uint64_t>(
      static_cast<std::int64_t>(spec.value_max) - spec.value_min + 1);
  m.values.resize(static_cast<std::size_t>(spec.rows) * spec.cols);
  for (auto& v : m.values) v = spec.value_min + static_cast<int>(uniform_below(rng, span));
  m.query_row = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(spec.rows)));
  m.query_col = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(spec.cols)));
  return m;
}

GridLayout grid_layout(const GridModel& model) {
  GridLayout l;
  l.glyph_h = model.glyph_px;
  l.glyph_w = std::max(1, static_cast<int>(std::lround(model.glyph_px * 5.0 / 7.0)));
  l.gap = std::max(1, model.glyph_px / 7);
  l.pad = std::max(2, model.glyph_px / 2);
  l.max_chars = model.max_chars;
  l.cell_w = l.max_chars * (l.glyph_w + l.gap) - l.gap + 2 * l.pad;
  l.cell_h = l.glyph_h + 2 * l.pad;
  l.width = model.cols * l.cell_w + 1;
  l.height = model.rows * l.cell_h + 1;
  return l;
}

std::pair<int, int> GridLayout::glyph_origin(int r, int c, int k) const {
  return {c * cell_w + pad + k * (glyph_w + gap), r * cell_h + pad};
}

const std::array<std::uint8_t, 7>& glyph_bitmap(char ch) {
  if (ch >= '0' && ch <= '9') return kFont[static_cast<std::size_t>(ch - '0')];
  if (ch == '-') return kFont[10];
  throw Error(std::string("no glyph for character '") + ch + "'");
}

Image render_grid(const GridModel& model) {
  const GridLayout l = grid_layout(model);
  Image img(l.width, l.height, kPaper);
  for (int r = 0; r <= model.rows; ++r) fill_rect(img, 0, r * l.cell_h, l.width, r * l.cell_h + 1, kBorder);
  for (int c = 0; c <= model.cols; ++c) fill_rect(img, c * l.cell_w, 0, c * l.cell_w + 1, l.height, kBorder);

  for (int r = 0; r < model.rows; ++r) {
    for (int c = 0; c < model.cols; ++c) {
      const std::string text = std::to_string(model.value(r, c));
      for (int k = 0; k < static_cast<int>(text.size()); ++k) {
        const auto& bits = glyph_bitmap(text[static_cast<std::size_t>(k)]);
        auto [ox, oy] = l.glyph_origin(r, c, k);
        for (int fy = 0; fy < 7; ++fy) {
          const int y0 = oy + fy * l.glyph_h / 7;
          const int y1 = oy + (fy + 1) * l.glyph_h / 7;
          for (int fx = 0; fx < 5; ++fx) {
            if (!(bits[static_cast<std::size_t>(fy)] & (0b10000 >> fx))) continue;
            const int x0 = ox + fx * l.glyph_w / 5;
            const int x1 = ox + (fx + 1) * l.glyph_w / 5;
            fill_rect(img, x0, y0, x1, y1, kInk);
          }
        }
      }
    }
  }
  return img;
}

std::string question_for(int query_row, int query_col) {
  return "What is the value in row " + std::to_string(query_row + 1) + ", column " +
         std::to_string(query_col + 1) + "?";
}

std::string instance_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-%05d", index);
  return buf;
}

std::vector<QaInstance> gen_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw Error("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::vector<QaInstance> instances;
  instances.reserve(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    const GridModel m = grid_model(spec, i);
    QaInstance inst;
    inst.id = instance_id(i);
    inst.image_path = "images/" + inst.id + ".png";
    inst.question = question_for(m.query_row, m.query_col);
    inst.gold_answer = std::to_string(m.value(m.query_row, m.query_col));
    inst.source = "synthbench";
    inst.glyph_px = m.glyph_px;
    write_png(out_dir / inst.image_path, render_grid(m), 3);
    instances.push_back(std::move(inst));
  }
  write_instances(out_dir / "instances.jsonl", instances);
  return instances;
}

double legibility_score(int glyph_px, const ViewSpec& view) {
  if (glyph_px < 1) throw Error("glyph_px must be >= 1");
  const double g = glyph_px;
  struct Visitor {
    double g;
    double operator()(const HqView&) const { return g; }
    double operator()(const ResolutionView& v) const { return g * v.alpha; }
    double operator()(const NoiseView& v) const {
      return g * std::max(0.0, 1.0 - v.sigma / kNoiseIllegibleSigma);
    }
    double operator()(const BlurView& v) const { return g / v.length_px; }
  };
  return std::visit(Visitor{g}, view.kind());
}

bool is_legible(double score, double tau) {
  // Absorbs representation error in products like 60 * 0.1.
  return score + 1e-9 >= tau;
}

}  // namespace vdforge::synth
