#include "vdforge/dpocore.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vdforge/corpus.hpp"
#include "vdforge/pairs.hpp"
#include "vdforge/rng.hpp"

namespace vdforge::dpo {

namespace {

enum class CharClass { Space, Letter, Digit, Other };

CharClass classify_cp(UChar32 cp) {
  if (u_isUWhiteSpace(cp)) return CharClass::Space;
  if (u_isalpha(cp)) return CharClass::Letter;
  if (u_isdigit(cp)) return CharClass::Digit;
  return CharClass::Other;
}

void append_utf8(std::string& out, UChar32 cp) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, cp, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

double logsumexp(std::span<const double> z) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void check_batch(const DpoBatch& batch) {
  if (!(batch.beta > 0.0) || !std::isfinite(batch.beta)) throw Error("beta must be > 0");
  if (batch.items.empty()) throw Error("DPO batch is empty");
}

void check_sequence(std::span<const int> tokens) {
  if (tokens.empty()) throw Error("token sequence is empty");
}

// Token counts of a sequence, scaled by `scale`, accumulated into `acc`.
void add_counts(std::vector<double>& acc, std::span<const int> tokens, double scale) {
  for (int t : tokens) acc[static_cast<std::size_t>(t)] += scale;
}

// grad += coef * phi * d^T
void add_outer(Matrix& grad, std::span<const double> phi, std::span<const double> d,
               double coef) {
  for (int f = 0; f < grad.rows; ++f) {
    const double pf = phi[static_cast<std::size_t>(f)] * coef;
    if (pf == 0.0) continue;
    double* row = &grad.data[static_cast<std::size_t>(f) * grad.cols];
    for (int v = 0; v < grad.cols; ++v) row[v] += pf * d[static_cast<std::size_t>(v)];
  }
}

}  // namespace

// ---- tokenizer / vocab --------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  CharClass current_class = CharClass::Space;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 cp;
    U8_NEXT(s, i, length, cp);
    if (cp < 0) cp = 0xFFFD;
    CharClass cls = classify_cp(cp);
    if (cls != current_class || cls == CharClass::Other) flush();
    current_class = cls;
    if (cls == CharClass::Space) continue;
    append_utf8(current, u_tolower(cp));
  }
  flush();
  return tokens;
}

std::size_t token_count(std::string_view text) { return tokenize(text).size(); }

Vocab::Vocab() : tokens_{std::string(kUnkToken)} { index_.emplace(tokens_[0], kUnk); }

Vocab Vocab::build(std::span<const std::string> texts) {
  std::set<std::string> unique;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t)) unique.insert(std::move(tok));
  }
  unique.erase(std::string(kUnkToken));
  std::vector<std::string> tokens{std::string(kUnkToken)};
  tokens.insert(tokens.end(), unique.begin(), unique.end());
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != kUnkToken) {
    throw Error("vocabulary must start with the " + std::string(kUnkToken) + " entry");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw Error("duplicate vocabulary entry '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

int Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(lookup(tok));
  return ids;
}

// ---- policy -------------------------------------------------------------------

std::vector<double> featurize(std::string_view context, int feature_dim) {
  if (feature_dim <= 0) throw Error("feature_dim must be positive");
  std::vector<double> phi(static_cast<std::size_t>(feature_dim), 0.0);
  for (const auto& tok : tokenize(context)) {
    phi[fnv1a64(tok) % static_cast<std::uint64_t>(feature_dim)] += 1.0;
  }
  double norm = 0.0;
  for (double v : phi) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& v : phi) v /= norm;
  }
  return phi;
}

ToyPolicy::ToyPolicy(Vocab vocab, int feature_dim)
    : vocab_(std::move(vocab)), feature_dim_(feature_dim) {
  if (feature_dim_ <= 0) throw Error("feature_dim must be positive");
  weights_ = Matrix(feature_dim_, vocab_.size());
}

ToyPolicy::ToyPolicy(Vocab vocab, int feature_dim, Matrix weights)
    : vocab_(std::move(vocab)), feature_dim_(feature_dim), weights_(std::move(weights)) {
  if (feature_dim_ <= 0) throw Error("feature_dim must be positive");
  if (weights_.rows != feature_dim_ || weights_.cols != vocab_.size() ||
      weights_.data.size() != static_cast<std::size_t>(weights_.rows) * weights_.cols) {
    throw Error("weight matrix shape does not match feature_dim x vocab size");
  }
}

std::vector<double> ToyPolicy::logits(std::span<const double> phi) const {
  if (phi.size() != static_cast<std::size_t>(feature_dim_)) {
    throw Error("feature vector has the wrong width");
  }
  std::vector<double> z(static_cast<std::size_t>(vocab_size()), 0.0);
  for (int f = 0; f < feature_dim_; ++f) {
    const double pf = phi[static_cast<std::size_t>(f)];
    if (pf == 0.0) continue;
    const double* row = &weights_.data[static_cast<std::size_t>(f) * weights_.cols];
    for (int v = 0; v < weights_.cols; ++v) z[static_cast<std::size_t>(v)] += pf * row[v];
  }
  return z;
}

std::vector<double> ToyPolicy::log_softmax(std::span<const double> phi) const {
  auto z = logits(phi);
  const double lse = logsumexp(z);
  for (double& v : z) v -= lse;
  return z;
}

void ToyPolicy::check_compatible(const ToyPolicy& other) const {
  if (feature_dim_ != other.feature_dim_) throw Error("policies differ in feature_dim");
  if (!(vocab_ == other.vocab_)) throw Error("policies use different vocabularies");
}

double seq_logprob(const ToyPolicy& policy, std::span<const double> phi,
                   std::span<const int> tokens, ScoreOptions opts) {
  check_sequence(tokens);
  const auto lp = policy.log_softmax(phi);
  double total = 0.0;
  for (int t : tokens) {
    if (t < 0 || t >= policy.vocab_size()) throw Error("token index out of range");
    total += lp[static_cast<std::size_t>(t)];
  }
  return opts.length_normalize ? total / static_cast<double>(tokens.size()) : total;
}

double seq_logprob(const ToyPolicy& policy, std::string_view context,
                   std::span<const int> tokens, ScoreOptions opts) {
  return seq_logprob(policy, policy.features(context), tokens, opts);
}

double delta(const ToyPolicy& policy, const ToyPolicy& ref, std::string_view context,
             std::span<const int> tokens, ScoreOptions opts) {
  policy.check_compatible(ref);
  const auto phi = policy.features(context);
  return seq_logprob(policy, phi, tokens, opts) - seq_logprob(ref, phi, tokens, opts);
}

DpoItem make_item(const ToyPolicy& policy, std::string context, std::string_view chosen,
                  std::string_view rejected) {
  DpoItem item;
  item.features = policy.features(context);
  item.context = std::move(context);
  item.chosen = policy.vocab().encode(chosen);
  item.rejected = policy.vocab().encode(rejected);
  if (item.chosen.empty()) throw Error("chosen text has no tokens");
  if (item.rejected.empty()) throw Error("rejected text has no tokens");
  return item;
}

double margin(const ToyPolicy& policy, const ToyPolicy& ref, const DpoItem& item,
              ScoreOptions opts) {
  const double d_chosen = seq_logprob(policy, item.features, item.chosen, opts) -
                          seq_logprob(ref, item.features, item.chosen, opts);
  const double d_rejected = seq_logprob(policy, item.features, item.rejected, opts) -
                            seq_logprob(ref, item.features, item.rejected, opts);
  return d_chosen - d_rejected;
}

double mean_margin(const ToyPolicy& policy, const ToyPolicy& ref, std::span<const DpoItem> items,
                   ScoreOptions opts) {
  if (items.empty()) return 0.0;
  policy.check_compatible(ref);
  double total = 0.0;
  for (const auto& item : items) total += margin(policy, ref, item, opts);
  return total / static_cast<double>(items.size());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double neg_log_sigmoid(double x) {
  // softplus(-x)
  if (x >= 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double dpo_loss(const ToyPolicy& policy, const ToyPolicy& ref, const DpoBatch& batch,
                ScoreOptions opts) {
  check_batch(batch);
  policy.check_compatible(ref);
  double total = 0.0;
  for (const auto& item : batch.items) {
    total += neg_log_sigmoid(batch.beta * margin(policy, ref, item, opts));
  }
  return total / static_cast<double>(batch.items.size());
}

Matrix dpo_grad(const ToyPolicy& policy, const ToyPolicy& ref, const DpoBatch& batch,
                ScoreOptions opts) {
  check_batch(batch);
  policy.check_compatible(ref);
  Matrix grad(policy.feature_dim(), policy.vocab_size());
  const double inv_n = 1.0 / static_cast<double>(batch.items.size());
  std::vector<double> d(static_cast<std::size_t>(policy.vocab_size()));
  for (const auto& item : batch.items) {
    check_sequence(item.chosen);
    check_sequence(item.rejected);
    const double m = margin(policy, ref, item, opts);
    // d/dW of -log sigmoid(beta m) = -beta sigmoid(-beta m) dm/dW
    const double coef = -batch.beta * sigmoid(-batch.beta * m) * inv_n;

    // dm/dW = phi d^T, d = sc*counts_c - sr*counts_r - (sc*Lc - sr*Lr) p,
    // where sc = 1/Lc and sr = 1/Lr under length normalization, else 1.
    const double sc = opts.length_normalize ? 1.0 / static_cast<double>(item.chosen.size()) : 1.0;
    const double sr =
        opts.length_normalize ? 1.0 / static_cast<double>(item.rejected.size()) : 1.0;
    const auto lp = policy.log_softmax(item.features);
    const double mass = sc * static_cast<double>(item.chosen.size()) -
                        sr * static_cast<double>(item.rejected.size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = -mass * std::exp(lp[v]);
    add_counts(d, item.chosen, sc);
    add_counts(d, item.rejected, -sr);
    add_outer(grad, item.features, d, coef);
  }
  return grad;
}

double sft_loss(const ToyPolicy& policy, std::span<const DpoItem> items) {
  if (items.empty()) throw Error("SFT batch is empty");
  double total = 0.0;
  for (const auto& item : items) {
    total -= seq_logprob(policy, item.features, item.chosen, ScoreOptions{true});
  }
  return total / static_cast<double>(items.size());
}

Matrix sft_grad(const ToyPolicy& policy, std::span<const DpoItem> items) {
  if (items.empty()) throw Error("SFT batch is empty");
  Matrix grad(policy.feature_dim(), policy.vocab_size());
  const double inv_n = 1.0 / static_cast<double>(items.size());
  std::vector<double> d(static_cast<std::size_t>(policy.vocab_size()));
  for (const auto& item : items) {
    check_sequence(item.chosen);
    // -(1/L) phi (counts - L p)^T = phi (p - counts/L)^T
    const auto lp = policy.log_softmax(item.features);
    const double inv_len = 1.0 / static_cast<double>(item.chosen.size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = std::exp(lp[v]);
    add_counts(d, item.chosen, -inv_len);
    add_outer(grad, item.features, d, inv_n);
  }
  return grad;
}

// ---- training -----------------------------------------------------------------

Objective parse_objective(std::string_view s) {
  if (s == "dpo" || s == "DPO") return Objective::Dpo;
  if (s == "sft" || s == "SFT") return Objective::Sft;
  throw Error("unknown objective '" + std::string(s) + "' (expected dpo or sft)");
}

void TrainConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error("beta must be > 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("learning rate must be >= 0");
  if (steps < 0) throw Error("steps must be >= 0");
  if (batch_size < 0) throw Error("batch_size must be >= 0");
  if (feature_dim <= 0) throw Error("feature_dim must be positive");
}

TrainResult train(const ToyPolicy& init, std::span<const DpoItem> items, const TrainConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw Error("no training items");
  TrainResult result{init, init, {}};
  result.history.reserve(static_cast<std::size_t>(cfg.steps));

  const std::size_t n = items.size();
  const bool full_batch = cfg.batch_size == 0 || static_cast<std::size_t>(cfg.batch_size) >= n;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;  // forces a shuffle before the first mini-batch

  DpoBatch batch;
  batch.beta = cfg.beta;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.items.clear();
    if (full_batch) {
      batch.items.assign(items.begin(), items.end());
    } else {
      for (int k = 0; k < cfg.batch_size; ++k) {
        if (cursor == n) {
          for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(order[i], order[vdforge::uniform_below(rng, i + 1)]);
          }
          cursor = 0;
        }
        batch.items.push_back(items[order[cursor++]]);
      }
    }

    double loss;
    Matrix grad;
    if (cfg.objective == Objective::Dpo) {
      loss = dpo_loss(result.policy, result.reference, batch, cfg.score);
      grad = dpo_grad(result.policy, result.reference, batch, cfg.score);
    } else {
      loss = sft_loss(result.policy, batch.items);
      grad = sft_grad(result.policy, batch.items);
    }
    if (!std::isfinite(loss)) {
      throw Error("non-finite loss at step " + std::to_string(step));
    }
    result.history.push_back(loss);
    auto& w = result.policy.weights().data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= cfg.lr * grad.data[i];
      if (!std::isfinite(w[i])) throw Error("non-finite weights after step " + std::to_string(step));
    }
  }
  return result;
}

std::vector<DpoItem> make_items(const ToyPolicy& policy, std::span<const PreferencePair> pairs) {
  std::vector<DpoItem> items;
  items.reserve(pairs.size());
  for (const auto& p : pairs) {
    try {
      items.push_back(make_item(policy, p.prompt, p.chosen, p.rejected));
    } catch (const Error& e) {
      throw Error("pair \"" + p.pair_id + "\": " + e.what());
    }
  }
  return items;
}

TrainResult train(std::span<const PreferencePair> pairs, const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw Error("no preference pairs to train on");
  std::vector<std::string> texts;
  texts.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    texts.push_back(p.chosen);
    texts.push_back(p.rejected);
  }
  ToyPolicy init(Vocab::build(texts), cfg.feature_dim);
  auto items = make_items(init, pairs);
  return train(init, items, cfg);
}

TrainResult train(const std::filesystem::path& pairs_jsonl, const TrainConfig& cfg) {
  auto pairs = load_pairs(pairs_jsonl);
  return train(pairs, cfg);
}

// ---- serialization --------------------------------------------------------------

std::string policy_to_json(const ToyPolicy& policy) {
  nlohmann::ordered_json j;
  j["vocab"] = policy.vocab().tokens();
  j["feature_dim"] = policy.feature_dim();
  j["weights"] = policy.weights().data;
  return j.dump();
}

ToyPolicy policy_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    auto tokens = j.at("vocab").get<std::vector<std::string>>();
    int feature_dim = j.at("feature_dim").get<int>();
    auto weights = j.at("weights").get<std::vector<double>>();
    Vocab vocab = Vocab::from_tokens(std::move(tokens));
    Matrix w;
    w.rows = feature_dim;
    w.cols = vocab.size();
    w.data = std::move(weights);
    return ToyPolicy(std::move(vocab), feature_dim, std::move(w));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid policy file: ") + e.what());
  }
}

void save_policy(const std::filesystem::path& path, const ToyPolicy& policy) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << policy_to_json(policy) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

ToyPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str());
}

void write_loss_history(const std::filesystem::path& path, std::span<const double> history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, history[i]);
    out << buf;
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace vdforge::dpo
