#include "vdforge/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vdforge {

namespace {

std::uint8_t quantize(double v) {
  double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

// Contribution weights of source samples to one output sample.
struct Taps {
  int first = 0;
  std::vector<double> weights;
};

double triangle(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

std::vector<Taps> resample_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = 1.0 * filter_scale;
  std::vector<Taps> taps(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale;
    int lo = static_cast<int>(center - support + 0.5);
    int hi = static_cast<int>(center + support + 0.5);
    lo = std::max(lo, 0);
    hi = std::min(hi, in_size);
    Taps& t = taps[o];
    t.first = lo;
    double total = 0.0;
    for (int i = lo; i < hi; ++i) {
      double w = triangle((i - center + 0.5) / filter_scale);
      t.weights.push_back(w);
      total += w;
    }
    if (total > 0.0) {
      for (double& w : t.weights) w /= total;
    }
  }
  return taps;
}

double sample_bilinear(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  double top = lerp(img.at(x0, y0, c), img.at(x1, y0, c), fx);
  double bottom = lerp(img.at(x0, y1, c), img.at(x1, y1, c), fx);
  return lerp(top, bottom, fy);
}

}  // namespace

Image::Image(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

void check_image(const Image& img) {
  if (img.empty()) throw Error("image is empty");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw Error("image buffer size does not match its dimensions");
  }
}

int scaled_dim(int dim, double alpha) {
  return std::max(1, static_cast<int>(std::floor(dim * alpha + 0.5)));
}

Image degrade_resolution(const Image& img, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("alpha must be in (0, 1]");
  check_image(img);
  if (alpha == 1.0) return img;

  const int out_w = scaled_dim(img.width, alpha);
  const int out_h = scaled_dim(img.height, alpha);
  const auto htaps = resample_taps(img.width, out_w);
  const auto vtaps = resample_taps(img.height, out_h);

  // Horizontal pass keeps full precision; only the final pass quantizes.
  std::vector<double> mid(static_cast<std::size_t>(out_w) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Taps& t = htaps[x];
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          acc += t.weights[k] * img.at(t.first + static_cast<int>(k), y, c);
        }
        mid[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] = acc;
      }
    }
  }

  Image out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const Taps& t = vtaps[y];
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
          std::size_t row = static_cast<std::size_t>(t.first) + k;
          acc += t.weights[k] * mid[(row * out_w + x) * 3 + c];
        }
        out.at(x, y, c) = quantize(acc);
      }
    }
  }
  return out;
}

GaussianSource::GaussianSource(std::uint64_t seed) : engine_(seed) {}

double GaussianSource::uniform_open() {
  // 53 random mantissa bits mapped onto (0, 1].
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double GaussianSource::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform_open() - 0x1.0p-53;  // [0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Image degrade_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error("sigma must be >= 0");
  check_image(img);
  if (sigma == 0.0) return img;
  GaussianSource gauss(seed);
  Image out = img;
  for (auto& px : out.pixels) {
    double v = px / 255.0 + sigma * gauss.next();
    v = std::clamp(v, 0.0, 1.0);
    px = quantize(v * 255.0);
  }
  return out;
}

Image degrade_motion_blur(const Image& img, int length_px, double angle_deg) {
  if (length_px < 1) throw Error("blur length must be >= 1");
  check_image(img);
  if (length_px == 1) return img;

  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(rad);
  const double dy = -std::sin(rad);  // image rows grow downwards
  std::vector<std::pair<double, double>> offsets;
  offsets.reserve(length_px);
  for (int k = 0; k < length_px; ++k) {
    double t = k - (length_px - 1) / 2.0;
    offsets.emplace_back(t * dx, t * dy);
  }

  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (const auto& [ox, oy] : offsets) acc += sample_bilinear(img, x + ox, y + oy, c);
        out.at(x, y, c) = quantize(acc / length_px);
      }
    }
  }
  return out;
}

Image apply_view(const Image& img, const ViewSpec& view) {
  struct Visitor {
    const Image& img;
    Image operator()(const HqView&) const { return img; }
    Image operator()(const ResolutionView& v) const { return degrade_resolution(img, v.alpha); }
    Image operator()(const NoiseView& v) const {
      return degrade_gaussian_noise(img, v.sigma, static_cast<std::uint64_t>(v.seed));
    }
    Image operator()(const BlurView& v) const {
      return degrade_motion_blur(img, v.length_px, v.angle_deg);
    }
  };
  return std::visit(Visitor{img}, view.kind());
}

}  // namespace vdforge
