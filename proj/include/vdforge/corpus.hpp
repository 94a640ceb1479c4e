#pragma once

// Data model shared by the whole pipeline: QA instances, visual views,
// decode parameters and policy responses, plus their line-delimited JSON
// manifests (instances.jsonl, responses.jsonl).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vdforge/error.hpp"

namespace vdforge {

// Formats a real with up to 9 significant digits. Values with magnitude in
// [1e-3, 1e9) never use an exponent. Parsing the result and formatting it
// again yields the same bytes.
std::string format_real(double x);

// 64-bit FNV-1a. Used wherever a stable, platform-independent hash is needed.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

struct QaInstance {
  std::string id;
  std::string image_path;  // relative to the manifest's directory
  std::string question;
  std::optional<std::string> gold_answer;
  std::string source;
  // Rendered glyph height in pixels; only set for synthetic corpora.
  std::optional<int> glyph_px;

  bool operator==(const QaInstance&) const = default;
};

struct HqView {
  bool operator==(const HqView&) const = default;
};
struct ResolutionView {
  double alpha;
  bool operator==(const ResolutionView&) const = default;
};
struct NoiseView {
  double sigma;
  std::int64_t seed;
  bool operator==(const NoiseView&) const = default;
};
struct BlurView {
  int length_px;
  double angle_deg;
  bool operator==(const BlurView&) const = default;
};

// One concrete visual view of an image: the original (HQ) or a degraded
// variant. Real parameters are canonicalized on construction so that
// `ViewSpec::parse(v.label()) == v` always holds.
class ViewSpec {
 public:
  using Kind = std::variant<HqView, ResolutionView, NoiseView, BlurView>;

  ViewSpec() = default;

  static ViewSpec hq() { return ViewSpec{}; }
  static ViewSpec resolution(double alpha);
  static ViewSpec gaussian_noise(double sigma, std::int64_t seed);
  static ViewSpec motion_blur(int length_px, double angle_deg);

  // Accepts "hq", "res:<alpha>", "noise:<sigma>:<seed>", "blur:<len>:<deg>".
  static ViewSpec parse(std::string_view label);

  const Kind& kind() const noexcept { return kind_; }
  bool is_hq() const noexcept { return std::holds_alternative<HqView>(kind_); }
  std::string label() const;

  bool operator==(const ViewSpec&) const = default;

 private:
  explicit ViewSpec(Kind k) : kind_(k) {}
  Kind kind_{HqView{}};
};

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::int64_t seed = 0;

  // Hex digest of the canonical parameter string; part of the cache key.
  std::string digest() const;

  bool operator==(const DecodeParams&) const = default;
};

struct ResponseRecord {
  std::string instance_id;
  std::string view_label;
  std::string policy_id;
  DecodeParams decode;
  std::string text;
  std::int64_t token_count = 0;
  std::optional<std::string> extracted_answer;
  std::optional<bool> correct;

  // (instance_id, view_label, policy_id, decode digest) joined by '\x1f'.
  std::string identity_key() const;

  bool operator==(const ResponseRecord&) const = default;
};

// Throws Error when a record violates the type invariants.
void validate(const ResponseRecord& r);

std::string to_json_line(const QaInstance& inst);
std::string to_json_line(const ResponseRecord& rec);
// Both throw Error with a field-specific message.
QaInstance instance_from_json_line(std::string_view line);
ResponseRecord record_from_json_line(std::string_view line);

std::vector<QaInstance> load_instances(const std::filesystem::path& path);
void write_instances(const std::filesystem::path& path,
                     std::span<const QaInstance> instances);

std::vector<ResponseRecord> load_records(const std::filesystem::path& path);
// Replaces the file contents (via a temporary file and rename).
void write_records(const std::filesystem::path& path,
                   std::span<const ResponseRecord> records);
// Appends one line per record. Each line is written with a single append
// syscall, so concurrent appenders never interleave partial lines.
std::size_t append_records(const std::filesystem::path& path,
                           std::span<const ResponseRecord> records);

// Resolves an instance's image path against the manifest it came from.
std::filesystem::path resolve_image_path(const std::filesystem::path& manifest,
                                         const QaInstance& inst);

}  // namespace vdforge
