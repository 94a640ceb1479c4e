#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace vdforge {

// Builds one JSON object with keys in insertion order and reals formatted by
// format_real, so serialized lines are byte-stable.
class JsonLineWriter {
 public:
  void field(std::string_view key, std::string_view value);
  void field_real(std::string_view key, double value);
  void field_int(std::string_view key, std::int64_t value);
  void field_bool(std::string_view key, bool value);
  // `json` must already be a serialized JSON value.
  void field_raw(std::string_view key, std::string_view json);

  std::string finish() const { return buf_ + "}"; }

 private:
  void key(std::string_view k);
  std::string buf_ = "{";
};

// JSON string literal (with quotes) for a UTF-8 string. Throws Error on
// invalid UTF-8.
std::string json_quote(std::string_view s);

}  // namespace vdforge
