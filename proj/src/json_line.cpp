#include "vdforge/json_line.hpp"

#include "json.hpp"
#include "vdforge/corpus.hpp"
#include "vdforge/error.hpp"

namespace vdforge {

std::string json_quote(std::string_view s) {
  try {
    return nlohmann::json(std::string(s)).dump();
  } catch (const nlohmann::json::type_error& e) {
    throw Error(std::string("string is not valid UTF-8: ") + e.what());
  }
}

void JsonLineWriter::key(std::string_view k) {
  if (buf_.size() > 1) buf_ += ',';
  buf_ += json_quote(k);
  buf_ += ':';
}

void JsonLineWriter::field(std::string_view k, std::string_view value) {
  key(k);
  buf_ += json_quote(value);
}

void JsonLineWriter::field_real(std::string_view k, double value) {
  key(k);
  buf_ += format_real(value);
}

void JsonLineWriter::field_int(std::string_view k, std::int64_t value) {
  key(k);
  buf_ += std::to_string(value);
}

void JsonLineWriter::field_bool(std::string_view k, bool value) {
  key(k);
  buf_ += value ? "true" : "false";
}

void JsonLineWriter::field_raw(std::string_view k, std::string_view json) {
  key(k);
  buf_ += json;
}

}  // namespace vdforge
