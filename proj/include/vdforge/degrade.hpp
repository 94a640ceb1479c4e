#pragma once

// Degradation operators producing low-quality views of an image. All three
// are pure and deterministic: identical inputs (including the noise seed)
// yield byte-identical outputs on every platform.

#include <cstdint>
#include <random>
#include <vector>

#include "vdforge/corpus.hpp"

namespace vdforge {

// Row-major 8-bit RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool empty() const noexcept { return width <= 0 || height <= 0; }

  bool operator==(const Image&) const = default;
};

// Throws Error unless dims are positive and the buffer has w*h*3 bytes.
void check_image(const Image& img);

inline constexpr double kDefaultNoiseSigma = 0.1;
inline constexpr int kDefaultBlurLength = 15;
inline constexpr double kDefaultBlurAngle = 0.0;

// max(1, floor(dim * alpha + 0.5)).
int scaled_dim(int dim, double alpha);

// Bilinear (triangle-filter) resampling to scaled_dim per axis. When
// downsampling, the filter support widens by the scale factor so every source
// pixel contributes (the usual antialiased "bilinear" of image libraries).
// alpha == 1 returns an exact copy.
Image degrade_resolution(const Image& img, double alpha);

// Adds i.i.d. N(0, sigma) noise per channel on the [0,1] intensity scale,
// clamps to [0,1] and re-quantizes. sigma == 0 returns an exact copy.
Image degrade_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

// Averages `length_px` bilinear samples along a centered line at `angle_deg`
// (counter-clockwise from +x), clamping coordinates to the image edge.
// length_px == 1 returns an exact copy.
Image degrade_motion_blur(const Image& img, int length_px, double angle_deg);

// Dispatches on the view kind; HQ returns a copy.
Image apply_view(const Image& img, const ViewSpec& view);

// Platform-independent normal deviates: mt19937_64 uniforms through the
// Box-Muller transform.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed);
  double next();

 private:
  double uniform_open();  // (0, 1]

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vdforge
