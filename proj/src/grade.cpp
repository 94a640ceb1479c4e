#include "vdforge/grade.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <charconv>
#include <cmath>
#include <unordered_map>

namespace vdforge::grade {

namespace {

constexpr std::string_view kOpen = "<answer>";
constexpr std::string_view kClose = "</answer>";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

MetricSpec MetricSpec::tolerance(double tol) {
  if (!(tol >= 0.0) || !std::isfinite(tol)) throw Error("tolerance must be finite and >= 0");
  return {Kind::ToleranceMatch, tol};
}

MetricSpec MetricSpec::parse(std::string_view name, double tol) {
  if (name == "em") return exact();
  if (name == "tm") return tolerance(tol);
  throw Error("unknown metric '" + std::string(name) + "' (expected em or tm)");
}

std::optional<std::string> extract_answer(std::string_view text) {
  // Walk closing tags from the end; the first one with an opening tag before
  // it delimits the last well-formed pair.
  std::size_t search_end = text.size();
  while (true) {
    std::size_t close = text.rfind(kClose, search_end);
    if (close == std::string_view::npos) break;
    std::size_t open = text.rfind(kOpen, close);
    if (open != std::string_view::npos) {
      auto body = text.substr(open + kOpen.size(), close - open - kOpen.size());
      return std::string(trim(body));
    }
    if (close == 0) break;
    search_end = close - 1;
  }
  auto t = trim(text);
  if (t.empty()) return std::nullopt;
  return std::string(t);
}

std::string normalize(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString norm = nfc->normalize(in, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  norm.toLower(icu::Locale::getRoot());

  // Collapse whitespace runs to one ASCII space.
  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < norm.length();) {
    UChar32 cp = norm.char32At(i);
    i += U16_LENGTH(cp);
    if (u_isUWhiteSpace(cp)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !collapsed.isEmpty()) collapsed.append(UChar32(' '));
    pending_space = false;
    collapsed.append(cp);
  }
  std::string out;
  collapsed.toUTF8String(out);
  while (!out.empty() && (out.back() == '%' || out.back() == '.' || out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  const std::size_t mantissa_start = i;
  std::size_t digits = 0;
  while (i < s.size() && is_digit(s[i])) ++i, ++digits;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i, ++digits;
  }
  if (digits == 0) return std::nullopt;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    std::size_t exp_digits = 0;
    while (i < s.size() && is_digit(s[i])) ++i, ++exp_digits;
    if (exp_digits == 0) return std::nullopt;
  }
  if (i != s.size()) return std::nullopt;

  double v = 0.0;
  const char* first = s.data() + mantissa_start;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return s[0] == '-' ? -v : v;
}

bool exact_match(std::string_view pred, std::string_view gold) {
  const std::string p = normalize(pred);
  const std::string g = normalize(gold);
  auto pn = parse_number(p);
  auto gn = parse_number(g);
  if (pn && gn) return *pn == *gn;
  return p == g;
}

bool tolerance_match(std::string_view pred, std::string_view gold, double tol) {
  if (!(tol >= 0.0)) throw Error("tolerance must be >= 0");
  auto pn = parse_number(normalize(pred));
  auto gn = parse_number(normalize(gold));
  if (pn && gn) return std::abs(*pn - *gn) <= tol;
  return exact_match(pred, gold);
}

bool matches(const MetricSpec& metric, std::string_view pred, std::string_view gold) {
  return metric.kind == MetricSpec::Kind::ExactMatch ? exact_match(pred, gold)
                                                     : tolerance_match(pred, gold, metric.tol);
}

void grade_record(ResponseRecord& rec, const QaInstance& inst, const MetricSpec& metric) {
  if (!inst.gold_answer) {
    throw Error("instance \"" + inst.id + "\" has no gold answer");
  }
  rec.extracted_answer = extract_answer(rec.text);
  rec.correct = rec.extracted_answer && matches(metric, *rec.extracted_answer, *inst.gold_answer);
}

void grade_records(std::span<ResponseRecord> records, std::span<const QaInstance> instances,
                   const MetricSpec& metric) {
  std::unordered_map<std::string_view, const QaInstance*> by_id;
  for (const auto& inst : instances) by_id.emplace(inst.id, &inst);
  for (auto& rec : records) {
    auto it = by_id.find(rec.instance_id);
    if (it == by_id.end()) {
      throw Error("record for unknown instance \"" + rec.instance_id + "\" (view " +
                  rec.view_label + ")");
    }
    grade_record(rec, *it->second, metric);
  }
}

}  // namespace vdforge::grade
