#include "vdforge/corpus.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <unordered_map>

#include "json.hpp"
#include "vdforge/json_line.hpp"

namespace vdforge {

namespace {

using nlohmann::json;

std::mutex g_append_mutex;

double parse_real_strict(std::string_view s, std::string_view what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v)) {
    throw Error("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_int_strict(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

double canonical(double x) { return parse_real_strict(format_real(x), "real"); }

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw Error(std::string("missing required field \"") + key + "\"");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) throw Error(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

double require_number(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number()) throw Error(std::string("field \"") + key + "\" must be a number");
  return v.get<double>();
}

std::int64_t require_integer(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer()) {
    throw Error(std::string("field \"") + key + "\" must be an integer");
  }
  return v.get<std::int64_t>();
}

json parse_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("expected a JSON object");
  return j;
}

template <typename T, typename Parse>
std::vector<T> load_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse(line));
    } catch (const ManifestError&) {
      throw;
    } catch (const Error& e) {
      throw ManifestError(lineno, e.what());
    }
  }
  return out;
}

void write_file_atomically(const std::filesystem::path& path, const std::string& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << body;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot replace " + path.string() + ": " + ec.message());
}

}  // namespace

std::string format_real(double x) {
  if (!std::isfinite(x)) throw Error("non-finite real cannot be serialized");
  if (x == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 9);
  if (ec != std::errc{}) throw Error("real formatting failed");
  return std::string(buf, ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- ViewSpec ---------------------------------------------------------------

ViewSpec ViewSpec::resolution(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error("resolution alpha must be in (0, 1], got " + std::to_string(alpha));
  }
  return ViewSpec(ResolutionView{canonical(alpha)});
}

ViewSpec ViewSpec::gaussian_noise(double sigma, std::int64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error("noise sigma must be >= 0");
  return ViewSpec(NoiseView{canonical(sigma), seed});
}

ViewSpec ViewSpec::motion_blur(int length_px, double angle_deg) {
  if (length_px < 1) throw Error("blur length must be >= 1");
  if (!std::isfinite(angle_deg)) throw Error("blur angle must be finite");
  return ViewSpec(BlurView{length_px, canonical(angle_deg)});
}

ViewSpec ViewSpec::parse(std::string_view label) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = label.find(':', start);
    parts.push_back(label.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  const auto& tag = parts[0];
  if (tag == "hq" && parts.size() == 1) return hq();
  if (tag == "res" && parts.size() == 2) return resolution(parse_real_strict(parts[1], "alpha"));
  if (tag == "noise" && parts.size() == 3) {
    return gaussian_noise(parse_real_strict(parts[1], "sigma"),
                          parse_int_strict(parts[2], "seed"));
  }
  if (tag == "blur" && parts.size() == 3) {
    auto len = parse_int_strict(parts[1], "blur length");
    if (len < 1 || len > 1'000'000) throw Error("blur length out of range");
    return motion_blur(static_cast<int>(len), parse_real_strict(parts[2], "angle"));
  }
  throw Error("unrecognized view label '" + std::string(label) + "'");
}

std::string ViewSpec::label() const {
  struct Visitor {
    std::string operator()(const HqView&) const { return "hq"; }
    std::string operator()(const ResolutionView& v) const { return "res:" + format_real(v.alpha); }
    std::string operator()(const NoiseView& v) const {
      return "noise:" + format_real(v.sigma) + ":" + std::to_string(v.seed);
    }
    std::string operator()(const BlurView& v) const {
      return "blur:" + std::to_string(v.length_px) + ":" + format_real(v.angle_deg);
    }
  };
  return std::visit(Visitor{}, kind_);
}

// ---- records ------------------------------------------------------------------

std::string DecodeParams::digest() const {
  std::string canon = "t=" + format_real(temperature) + ";m=" + std::to_string(max_tokens) +
                      ";s=" + std::to_string(seed);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

std::string ResponseRecord::identity_key() const {
  std::string k;
  k.reserve(instance_id.size() + view_label.size() + policy_id.size() + 20);
  k += instance_id;
  k += '\x1f';
  k += view_label;
  k += '\x1f';
  k += policy_id;
  k += '\x1f';
  k += decode.digest();
  return k;
}

void validate(const ResponseRecord& r) {
  if (r.instance_id.empty()) throw Error("record has empty instance_id");
  if (r.policy_id.empty()) throw Error("record " + r.instance_id + " has empty policy_id");
  (void)ViewSpec::parse(r.view_label);
  if (!(r.decode.temperature >= 0.0) || !std::isfinite(r.decode.temperature)) {
    throw Error("record " + r.instance_id + ": temperature must be >= 0");
  }
  if (r.decode.max_tokens <= 0) throw Error("record " + r.instance_id + ": max_tokens must be > 0");
  if (r.token_count < 0) throw Error("record " + r.instance_id + ": negative token_count");
}

std::string to_json_line(const QaInstance& inst) {
  JsonLineWriter w;
  w.field("id", inst.id);
  w.field("image_path", inst.image_path);
  w.field("question", inst.question);
  if (inst.gold_answer) w.field("gold_answer", *inst.gold_answer);
  if (!inst.source.empty()) w.field("source", inst.source);
  if (inst.glyph_px) w.field_int("glyph_px", *inst.glyph_px);
  return w.finish();
}

std::string to_json_line(const ResponseRecord& rec) {
  JsonLineWriter decode;
  decode.field_real("temperature", rec.decode.temperature);
  decode.field_int("max_tokens", rec.decode.max_tokens);
  decode.field_int("seed", rec.decode.seed);

  JsonLineWriter w;
  w.field("instance_id", rec.instance_id);
  w.field("view_label", rec.view_label);
  w.field("policy_id", rec.policy_id);
  w.field_raw("decode", decode.finish());
  w.field("text", rec.text);
  w.field_int("token_count", rec.token_count);
  if (rec.extracted_answer) w.field("extracted_answer", *rec.extracted_answer);
  if (rec.correct) w.field_bool("correct", *rec.correct);
  return w.finish();
}

QaInstance instance_from_json_line(std::string_view line) {
  json j = parse_object(line);
  QaInstance inst;
  inst.id = require_string(j, "id");
  inst.image_path = require_string(j, "image_path");
  inst.question = require_string(j, "question");
  inst.gold_answer = optional_string(j, "gold_answer");
  inst.source = optional_string(j, "source").value_or("");
  if (auto it = j.find("glyph_px"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error("field \"glyph_px\" must be an integer");
    inst.glyph_px = it->get<int>();
  }
  if (inst.id.empty()) throw Error("field \"id\" must be non-empty");
  if (inst.image_path.empty()) throw Error("field \"image_path\" must be non-empty");
  if (inst.question.empty()) throw Error("field \"question\" must be non-empty");
  return inst;
}

ResponseRecord record_from_json_line(std::string_view line) {
  json j = parse_object(line);
  ResponseRecord r;
  r.instance_id = require_string(j, "instance_id");
  // Canonical form, so "res:0.10" and "res:0.1" name the same view.
  r.view_label = ViewSpec::parse(require_string(j, "view_label")).label();
  r.policy_id = require_string(j, "policy_id");
  const json& d = require(j, "decode");
  if (!d.is_object()) throw Error("field \"decode\" must be an object");
  r.decode.temperature = require_number(d, "temperature");
  auto max_tokens = require_integer(d, "max_tokens");
  if (max_tokens <= 0 || max_tokens > std::numeric_limits<int>::max()) {
    throw Error("decode.max_tokens out of range");
  }
  r.decode.max_tokens = static_cast<int>(max_tokens);
  r.decode.seed = require_integer(d, "seed");
  r.text = require_string(j, "text");
  r.token_count = require_integer(j, "token_count");
  r.extracted_answer = optional_string(j, "extracted_answer");
  if (auto it = j.find("correct"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw Error("field \"correct\" must be a boolean");
    r.correct = it->get<bool>();
  }
  validate(r);
  return r;
}

std::vector<QaInstance> load_instances(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t lineno = 0;
  // Line numbers are tracked separately so duplicate errors can cite both.
  std::vector<QaInstance> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    QaInstance inst;
    try {
      inst = instance_from_json_line(line);
    } catch (const Error& e) {
      throw ManifestError(lineno, e.what());
    }
    auto [it, inserted] = first_line.emplace(inst.id, lineno);
    if (!inserted) {
      throw ManifestError(lineno, "duplicate id \"" + inst.id + "\" (first on line " +
                                      std::to_string(it->second) + ")");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

void write_instances(const std::filesystem::path& path, std::span<const QaInstance> instances) {
  std::string body;
  for (const auto& inst : instances) {
    body += to_json_line(inst);
    body += '\n';
  }
  write_file_atomically(path, body);
}

std::vector<ResponseRecord> load_records(const std::filesystem::path& path) {
  auto records = load_lines<ResponseRecord>(path, record_from_json_line);
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = seen.emplace(records[i].identity_key(), i);
    if (!inserted) {
      throw Error("duplicate record identity for instance \"" + records[i].instance_id +
                  "\" view \"" + records[i].view_label + "\" policy \"" +
                  records[i].policy_id + "\" in " + path.string() + " (records " +
                  std::to_string(it->second + 1) + " and " + std::to_string(i + 1) + ")");
    }
  }
  return records;
}

void write_records(const std::filesystem::path& path, std::span<const ResponseRecord> records) {
  std::string body;
  for (const auto& r : records) {
    validate(r);
    body += to_json_line(r);
    body += '\n';
  }
  write_file_atomically(path, body);
}

std::size_t append_records(const std::filesystem::path& path,
                           std::span<const ResponseRecord> records) {
  if (records.empty()) return 0;
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    validate(r);
    lines.push_back(to_json_line(r) + '\n');
  }
  std::lock_guard lock(g_append_mutex);
  int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  for (const auto& l : lines) {
    ssize_t n = ::write(fd, l.data(), l.size());
    if (n != static_cast<ssize_t>(l.size())) {
      int err = errno;
      ::close(fd);
      throw Error("append to " + path.string() + " failed: " + std::strerror(err));
    }
    ++written;
  }
  if (::close(fd) != 0) throw Error("close failed: " + path.string());
  return written;
}

std::filesystem::path resolve_image_path(const std::filesystem::path& manifest,
                                         const QaInstance& inst) {
  std::filesystem::path p(inst.image_path);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

}  // namespace vdforge
