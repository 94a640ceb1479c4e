#pragma once

// Response generation for (instance, view) pairs. Backends produce raw
// responses; a Generator adds caching, view materialization and bounded
// parallelism on top of any backend.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdforge/corpus.hpp"
#include "vdforge/synthbench.hpp"

namespace vdforge::policy {

inline constexpr int kDefaultJobs = 8;
inline constexpr const char* kApiTokenEnv = "VDFORGE_API_TOKEN";
inline constexpr const char* kCacheDirEnv = "VDFORGE_CACHE_DIR";

// `{question}` is replaced by the instance question.
inline constexpr std::string_view kDefaultPromptTemplate =
    "Look at the image and answer the question. Reason step by step inside "
    "<thinking></thinking> tags, then give only the final answer inside "
    "<answer></answer> tags.\n\nQuestion: {question}";

std::string render_prompt(std::string_view prompt_template, std::string_view question);

struct GenerationRequest {
  const QaInstance& instance;
  const ViewSpec& view;
  const DecodeParams& decode;
  // Image file for the view; empty when the backend does not need pixels.
  std::filesystem::path image_path;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const std::string& policy_id() const = 0;
  virtual bool needs_image() const { return false; }
  // Must be safe to call concurrently for distinct requests.
  virtual ResponseRecord generate(const GenerationRequest& req) = 0;
};

// Deterministic stand-in for a VLM on synthbench corpora. A view whose
// legibility score reaches tau is read correctly; otherwise the answer is a
// wrong neighbor value wrapped in a longer, hedging rationale.
struct SyntheticConfig {
  std::string policy_id = "synthetic";
  double tau = synth::kDefaultTau;
  // Scales the number of hedging sentences in illegible-view responses.
  double verbosity = 1.5;
  // Per-unit-temperature probability of misreading a legible view.
  double slip_rate = 0.25;
};

class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(SyntheticConfig cfg);
  const std::string& policy_id() const override { return cfg_.policy_id; }
  ResponseRecord generate(const GenerationRequest& req) override;
  const SyntheticConfig& config() const noexcept { return cfg_; }

 private:
  SyntheticConfig cfg_;
};

// responses.jsonl plus a `<file>.idx` sidecar mapping key digests to lines.
class ResponseCache {
 public:
  // Loads (or starts) the cache. Throws Error on a malformed file or an index
  // that disagrees with it. A missing index is rebuilt.
  explicit ResponseCache(std::filesystem::path path);

  std::optional<ResponseRecord> find(const std::string& key) const;
  // Appends the record unless its key is already present. Returns whether it
  // was added.
  bool insert(const ResponseRecord& rec);
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path index_path() const;
  std::vector<ResponseRecord> records() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<ResponseRecord> records_;
  std::unordered_map<std::string, std::size_t> by_key_;
};

std::string key_digest(const std::string& identity_key);

// Serves only what a cache already holds; a miss is an error.
class ReplayBackend final : public Backend {
 public:
  ReplayBackend(std::filesystem::path cache_path, std::string policy_id);
  const std::string& policy_id() const override { return policy_id_; }
  ResponseRecord generate(const GenerationRequest& req) override;

 private:
  std::string policy_id_;
  ResponseCache cache_;
};

// OpenAI-style chat-completions client.
struct RemoteConfig {
  std::string policy_id = "remote";
  std::string endpoint;  // e.g. http://localhost:8000
  std::string model;
  std::string token_env = kApiTokenEnv;
  int timeout_ms = 120000;
  int max_attempts = 3;
  int backoff_ms = 500;  // doubled after every failed attempt
  std::string prompt_template = std::string(kDefaultPromptTemplate);
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  const std::string& policy_id() const override { return cfg_.policy_id; }
  bool needs_image() const override { return true; }
  ResponseRecord generate(const GenerationRequest& req) override;

  // JSON request body for one request; exposed for tests.
  std::string request_body(const GenerationRequest& req) const;

 private:
  RemoteConfig cfg_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Whitespace-delimited token count used for remote responses.
std::int64_t whitespace_token_count(std::string_view text);

class Generator {
 public:
  // `cache` may be null. Image paths resolve against `manifest_path`.
  Generator(Backend& backend, ResponseCache* cache, std::filesystem::path manifest_path);

  ResponseRecord generate(const QaInstance& inst, const ViewSpec& view,
                          const DecodeParams& decode);

  // HQ and Resolution(alpha) records for one instance; 0 < alpha < 1.
  std::pair<ResponseRecord, ResponseRecord> generate_paired(const QaInstance& inst, double alpha,
                                                            const DecodeParams& decode);

  // Every (instance, view, decode) combination, instance-major, with up to
  // `jobs` requests in flight. Output order is independent of `jobs`. On
  // failure the first error is rethrown after in-flight work finishes;
  // completed records stay in the cache.
  std::vector<ResponseRecord> generate_all(std::span<const QaInstance> instances,
                                           std::span<const ViewSpec> views,
                                           std::span<const DecodeParams> decodes, int jobs);

  Backend& backend() noexcept { return backend_; }

 private:
  Backend& backend_;
  ResponseCache* cache_;
  std::filesystem::path manifest_path_;
};

}  // namespace vdforge::policy
