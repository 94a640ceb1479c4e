#pragma once

// Numerical core of HQ-conditioned preference optimization on a toy policy.
//
// The toy policy is a context-conditioned unigram model: a context string is
// hashed into a feature vector phi (F entries), logits are z = W^T phi (V
// entries), and every position of an output sequence is drawn from
// softmax(z). A sequence log-probability is the sum of its token
// log-probabilities, which is all the preference objective consumes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vdforge/error.hpp"

namespace vdforge {
struct PreferencePair;
}

namespace vdforge::dpo {

// Splits on letter / digit / other character-class boundaries and lowercases.
// Letter and digit runs form one token each, every other non-space code
// point is its own token, whitespace separates.
std::vector<std::string> tokenize(std::string_view text);
std::size_t token_count(std::string_view text);

class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();
  // Sorted unique tokens of `texts`, preceded by the UNK entry.
  static Vocab build(std::span<const std::string> texts);
  static Vocab from_tokens(std::vector<std::string> tokens);

  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  int lookup(std::string_view token) const;
  std::vector<int> encode(std::string_view text) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

// L2-normalized hashed bag of context tokens (FNV-1a bucket per token).
std::vector<double> featurize(std::string_view context, int feature_dim);

class ToyPolicy {
 public:
  ToyPolicy(Vocab vocab, int feature_dim);
  ToyPolicy(Vocab vocab, int feature_dim, Matrix weights);

  const Vocab& vocab() const noexcept { return vocab_; }
  int feature_dim() const noexcept { return feature_dim_; }
  int vocab_size() const noexcept { return vocab_.size(); }
  const Matrix& weights() const noexcept { return weights_; }
  Matrix& weights() noexcept { return weights_; }

  std::vector<double> features(std::string_view context) const {
    return featurize(context, feature_dim_);
  }
  std::vector<double> logits(std::span<const double> phi) const;
  std::vector<double> log_softmax(std::span<const double> phi) const;

  // Throws Error when `other` uses a different vocabulary or feature width.
  void check_compatible(const ToyPolicy& other) const;

 private:
  Vocab vocab_;
  int feature_dim_;
  Matrix weights_;  // feature_dim x vocab_size
};

struct ScoreOptions {
  // Divide sequence log-probabilities by their length.
  bool length_normalize = false;
};

double seq_logprob(const ToyPolicy& policy, std::span<const double> phi,
                   std::span<const int> tokens, ScoreOptions opts = {});
double seq_logprob(const ToyPolicy& policy, std::string_view context,
                   std::span<const int> tokens, ScoreOptions opts = {});

// log pi(tokens | context) - log pi_ref(tokens | context).
double delta(const ToyPolicy& policy, const ToyPolicy& ref, std::string_view context,
             std::span<const int> tokens, ScoreOptions opts = {});

struct DpoItem {
  std::string context;
  std::vector<double> features;
  std::vector<int> chosen;
  std::vector<int> rejected;
};

DpoItem make_item(const ToyPolicy& policy, std::string context, std::string_view chosen,
                  std::string_view rejected);

struct DpoBatch {
  std::vector<DpoItem> items;
  double beta = 0.1;
};

// Preference margin m = Delta(chosen) - Delta(rejected) for one item.
double margin(const ToyPolicy& policy, const ToyPolicy& ref, const DpoItem& item,
              ScoreOptions opts = {});
// Mean margin over items; 0 for an empty span.
double mean_margin(const ToyPolicy& policy, const ToyPolicy& ref, std::span<const DpoItem> items,
                   ScoreOptions opts = {});

// Mean over items of -log sigmoid(beta * m).
double dpo_loss(const ToyPolicy& policy, const ToyPolicy& ref, const DpoBatch& batch,
                ScoreOptions opts = {});
// Analytic gradient of dpo_loss with respect to the policy weights.
Matrix dpo_grad(const ToyPolicy& policy, const ToyPolicy& ref, const DpoBatch& batch,
                ScoreOptions opts = {});

// Supervised baseline on chosen sequences only: mean over items of the
// per-token negative log-likelihood.
double sft_loss(const ToyPolicy& policy, std::span<const DpoItem> items);
Matrix sft_grad(const ToyPolicy& policy, std::span<const DpoItem> items);

// Numerically stable -log(sigmoid(x)).
double neg_log_sigmoid(double x);
double sigmoid(double x);

enum class Objective { Dpo, Sft };
Objective parse_objective(std::string_view s);

struct TrainConfig {
  Objective objective = Objective::Dpo;
  double beta = 0.1;
  double lr = 1e-2;
  int steps = 100;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  int feature_dim = 32;
  ScoreOptions score;

  void validate() const;
};

struct TrainResult {
  ToyPolicy policy;
  ToyPolicy reference;
  // history[k] is the objective on the step-k batch before the k-th update.
  std::vector<double> history;
};

// Plain gradient descent from `init`, which also becomes the frozen reference.
TrainResult train(const ToyPolicy& init, std::span<const DpoItem> items, const TrainConfig& cfg);

// Builds a zero-initialized policy whose vocabulary covers every chosen and
// rejected text, converts the pairs to items and trains.
TrainResult train(std::span<const PreferencePair> pairs, const TrainConfig& cfg);
TrainResult train(const std::filesystem::path& pairs_jsonl, const TrainConfig& cfg);

std::vector<DpoItem> make_items(const ToyPolicy& policy, std::span<const PreferencePair> pairs);

std::string policy_to_json(const ToyPolicy& policy);
ToyPolicy policy_from_json(std::string_view json);
void save_policy(const std::filesystem::path& path, const ToyPolicy& policy);
ToyPolicy load_policy(const std::filesystem::path& path);

// "step,loss" CSV.
void write_loss_history(const std::filesystem::path& path, std::span<const double> history);

}  // namespace vdforge::dpo
