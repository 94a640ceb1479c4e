#include "vdforge/policy.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "vdforge/dpocore.hpp"
#include "vdforge/image_io.hpp"
#include "vdforge/rng.hpp"

namespace vdforge::policy {

namespace {

constexpr std::array<std::string_view, 6> kHedges = {
    "The digits are blurry, so I need to look more carefully.",
    "Some strokes might belong to a different digit.",
    "It could be one of several similar looking numbers.",
    "Let me try to infer the value from the neighboring cells instead.",
    "The edges of the characters seem smeared together at this size.",
    "I am not fully certain about the last digit.",
};

std::uint64_t mix(std::string_view a, std::string_view b, std::int64_t c) {
  std::string s;
  s.reserve(a.size() + b.size() + 24);
  s.append(a).push_back('\x1f');
  s.append(b).push_back('\x1f');
  s.append(std::to_string(c));
  return fnv1a64(s);
}

std::string wrong_answer(const std::string& gold, std::uint64_t h) {
  long long value = 0;
  try {
    std::size_t used = 0;
    value = std::stoll(gold, &used);
    if (used != gold.size()) throw std::invalid_argument(gold);
  } catch (const std::exception&) {
    return gold + "?";
  }
  const long long offset = 1 + static_cast<long long>(h % 9);
  const bool down = ((h >> 8) & 1) != 0 && value - offset >= 0;
  return std::to_string(down ? value - offset : value + offset);
}

std::string cell_phrase(const QaInstance& inst) {
  // "What is the value in row 2, column 3?" -> "row 2, column 3"
  const std::string& q = inst.question;
  auto pos = q.find("row ");
  if (pos == std::string::npos) return "the requested cell";
  auto end = q.find('?', pos);
  return q.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

}  // namespace

std::string render_prompt(std::string_view prompt_template, std::string_view question) {
  std::string out(prompt_template);
  constexpr std::string_view kSlot = "{question}";
  auto pos = out.find(kSlot);
  if (pos == std::string::npos) return out + "\n\n" + std::string(question);
  out.replace(pos, kSlot.size(), question);
  return out;
}

std::int64_t whitespace_token_count(std::string_view text) {
  std::int64_t n = 0;
  bool in_token = false;
  for (char c : text) {
    bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

// ---- synthetic --------------------------------------------------------------------

SyntheticBackend::SyntheticBackend(SyntheticConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.tau > 0.0)) throw Error("synthetic backend: tau must be > 0");
  if (!(cfg_.verbosity >= 0.0)) throw Error("synthetic backend: verbosity must be >= 0");
  if (!(cfg_.slip_rate >= 0.0)) throw Error("synthetic backend: slip_rate must be >= 0");
  if (cfg_.policy_id.empty()) throw Error("synthetic backend: empty policy id");
}

ResponseRecord SyntheticBackend::generate(const GenerationRequest& req) {
  const QaInstance& inst = req.instance;
  if (!inst.glyph_px) {
    throw Error("synthetic backend needs glyph_px on instance \"" + inst.id + "\"");
  }
  if (!inst.gold_answer) {
    throw Error("synthetic backend needs a gold answer on instance \"" + inst.id + "\"");
  }
  const std::string label = req.view.label();
  const std::uint64_t h = mix(inst.id, label, req.decode.seed);
  const double score = synth::legibility_score(*inst.glyph_px, req.view);
  bool legible = synth::is_legible(score, cfg_.tau);
  if (legible && req.decode.temperature > 0.0) {
    const double p_slip = std::min(1.0, cfg_.slip_rate * req.decode.temperature);
    const double u = static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
    if (u < p_slip) legible = false;
  }

  const std::string cell = cell_phrase(inst);
  std::string text;
  if (legible) {
    text = "<thinking>The table is sharp. In " + cell + " I can clearly read the number " +
           *inst.gold_answer + ".</thinking>\n<answer>" + *inst.gold_answer + "</answer>";
  } else {
    const std::string guess = wrong_answer(*inst.gold_answer, h);
    const int hedges = std::max(1, static_cast<int>(std::lround(cfg_.verbosity * 2.0)));
    text = "<thinking>The image is low quality and the table is hard to read.";
    for (int k = 0; k < hedges; ++k) {
      text += ' ';
      text += kHedges[(h + static_cast<std::uint64_t>(k)) % kHedges.size()];
    }
    text += " My best guess for " + cell + " is " + guess + ".</thinking>\n<answer>" + guess +
            "</answer>";
  }

  ResponseRecord rec;
  rec.instance_id = inst.id;
  rec.view_label = label;
  rec.policy_id = cfg_.policy_id;
  rec.decode = req.decode;
  rec.text = std::move(text);
  rec.token_count = static_cast<std::int64_t>(dpo::token_count(rec.text));
  return rec;
}

// ---- cache --------------------------------------------------------------------------

std::string key_digest(const std::string& identity_key) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(identity_key)));
  return buf;
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  try {
    records_ = load_records(path_);
  } catch (const Error& e) {
    throw Error("cache corruption in " + path_.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < records_.size(); ++i) by_key_.emplace(records_[i].identity_key(), i);

  const auto idx = index_path();
  if (!std::filesystem::exists(idx)) {
    std::ofstream out(idx, std::ios::binary | std::ios::trunc);
    for (std::size_t i = 0; i < records_.size(); ++i) {
      out << key_digest(records_[i].identity_key()) << '\t' << i + 1 << '\n';
    }
    if (!out) throw Error("cannot write cache index " + idx.string());
    return;
  }
  std::ifstream in(idx, std::ios::binary);
  std::string digest;
  std::size_t line = 0;
  std::size_t entries = 0;
  while (in >> digest >> line) {
    if (line == 0 || line > records_.size() ||
        key_digest(records_[line - 1].identity_key()) != digest) {
      throw Error("cache corruption: index " + idx.string() + " disagrees with " +
                  path_.string() + " at line " + std::to_string(line) +
                  " (delete the index to rebuild it)");
    }
    ++entries;
  }
  if (entries != records_.size()) {
    throw Error("cache corruption: index " + idx.string() + " lists " + std::to_string(entries) +
                " entries for " + std::to_string(records_.size()) +
                " records (delete the index to rebuild it)");
  }
}

std::filesystem::path ResponseCache::index_path() const {
  auto p = path_;
  p += ".idx";
  return p;
}

std::optional<ResponseRecord> ResponseCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = by_key_.find(key);
  if (it == by_key_.end()) return std::nullopt;
  return records_[it->second];
}

bool ResponseCache::insert(const ResponseRecord& rec) {
  const std::string key = rec.identity_key();
  std::lock_guard lock(mutex_);
  if (by_key_.contains(key)) return false;
  const ResponseRecord one[] = {rec};
  append_records(path_, one);
  records_.push_back(rec);
  by_key_.emplace(key, records_.size() - 1);
  std::ofstream idx(index_path(), std::ios::binary | std::ios::app);
  idx << key_digest(key) << '\t' << records_.size() << '\n';
  if (!idx) throw Error("cannot update cache index " + index_path().string());
  return true;
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<ResponseRecord> ResponseCache::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

// ---- replay -------------------------------------------------------------------------

ReplayBackend::ReplayBackend(std::filesystem::path cache_path, std::string policy_id)
    : policy_id_(std::move(policy_id)), cache_(std::move(cache_path)) {
  if (!std::filesystem::exists(cache_.path())) {
    throw Error("replay cache not found: " + cache_.path().string());
  }
}

ResponseRecord ReplayBackend::generate(const GenerationRequest& req) {
  ResponseRecord probe;
  probe.instance_id = req.instance.id;
  probe.view_label = req.view.label();
  probe.policy_id = policy_id_;
  probe.decode = req.decode;
  auto hit = cache_.find(probe.identity_key());
  if (!hit) {
    throw Error("replay miss for instance \"" + probe.instance_id + "\" view \"" +
                probe.view_label + "\" policy \"" + policy_id_ + "\"");
  }
  return *hit;
}

// ---- generator ------------------------------------------------------------------------

Generator::Generator(Backend& backend, ResponseCache* cache, std::filesystem::path manifest_path)
    : backend_(backend), cache_(cache), manifest_path_(std::move(manifest_path)) {}

ResponseRecord Generator::generate(const QaInstance& inst, const ViewSpec& view,
                                   const DecodeParams& decode) {
  ResponseRecord probe;
  probe.instance_id = inst.id;
  probe.view_label = view.label();
  probe.policy_id = backend_.policy_id();
  probe.decode = decode;
  const std::string key = probe.identity_key();
  if (cache_) {
    if (auto hit = cache_->find(key)) return *hit;
  }

  std::filesystem::path image;
  if (backend_.needs_image()) {
    image = materialize_view(resolve_image_path(manifest_path_, inst), view);
  }
  ResponseRecord rec = backend_.generate(GenerationRequest{inst, view, decode, image});
  validate(rec);
  if (rec.identity_key() != key) {
    throw Error("backend returned a record for a different key (instance \"" + inst.id + "\")");
  }
  if (cache_) cache_->insert(rec);
  return rec;
}

std::pair<ResponseRecord, ResponseRecord> Generator::generate_paired(const QaInstance& inst,
                                                                     double alpha,
                                                                     const DecodeParams& decode) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("paired generation needs 0 < alpha < 1");
  auto hq = generate(inst, ViewSpec::hq(), decode);
  auto lq = generate(inst, ViewSpec::resolution(alpha), decode);
  return {std::move(hq), std::move(lq)};
}

std::vector<ResponseRecord> Generator::generate_all(std::span<const QaInstance> instances,
                                                    std::span<const ViewSpec> views,
                                                    std::span<const DecodeParams> decodes,
                                                    int jobs) {
  struct Task {
    const QaInstance* inst;
    const ViewSpec* view;
    const DecodeParams* decode;
  };
  std::vector<Task> tasks;
  tasks.reserve(instances.size() * views.size() * decodes.size());
  for (const auto& inst : instances)
    for (const auto& view : views)
      for (const auto& d : decodes) tasks.push_back({&inst, &view, &d});

  std::vector<std::optional<ResponseRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        results[i] = generate(*tasks[i].inst, *tasks[i].view, *tasks[i].decode);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };

  const int n_workers =
      std::max(1, std::min(jobs, static_cast<int>(std::max<std::size_t>(tasks.size(), 1))));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ResponseRecord> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace vdforge::policy
