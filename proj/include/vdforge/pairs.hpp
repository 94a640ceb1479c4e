#pragma once

// Quality-sensitivity classification and preference-pair construction.
// Every pair is conditioned on the HQ context: the prompt and the undegraded
// image path. The degraded view only ever contributes a rejected text.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vdforge/corpus.hpp"

namespace vdforge {

enum class Category { AlwaysCorrect, QualitySensitive, AlwaysWrong, ParadoxicallyRobust };
inline constexpr Category kAllCategories[] = {Category::AlwaysCorrect, Category::QualitySensitive,
                                              Category::AlwaysWrong,
                                              Category::ParadoxicallyRobust};

std::string_view to_string(Category c);
Category parse_category(std::string_view s);

enum class PairMode { VdLf, VdLb, HqVsHq, CrossPolicy };
std::string_view to_string(PairMode m);
PairMode parse_pair_mode(std::string_view s);  // also accepts the CLI spellings

struct PreferencePair {
  std::string pair_id;
  std::string instance_id;
  std::string prompt;
  std::string hq_image_path;
  std::string chosen;
  std::string rejected;
  PairMode mode = PairMode::VdLf;
  std::optional<Category> category;
  // Provenance, kept in memory only.
  std::string chosen_policy_id;
  std::string rejected_policy_id;

  bool operator==(const PreferencePair&) const = default;
};

// HQ and LQ records of one instance under one policy.
struct ViewPair {
  QaInstance instance;
  ResponseRecord hq;
  ResponseRecord lq;
};

// Joins records into per-instance (HQ, LQ) pairs in instance order. Instances
// with no records are skipped; an instance with only one side throws. When
// `policy_id` is empty, records of any policy are accepted but must be unique
// per (instance, view).
std::vector<ViewPair> join_views(std::span<const QaInstance> instances,
                                 std::span<const ResponseRecord> records,
                                 std::string_view lq_label, std::string_view policy_id = {});

Category classify(const ResponseRecord& hq, const ResponseRecord& lq);

struct PairOptions {
  // Drop pairs whose chosen and rejected texts are equal after trimming.
  bool dedup = true;
  // HQ-vs-HQ: emit every correct x incorrect combination instead of one.
  bool all_combinations = false;
};

// Label-free: HQ text preferred over LQ text for every instance.
std::vector<PreferencePair> build_vd_lf(std::span<const ViewPair> views, PairOptions opts = {});
// Label-based: only QualitySensitive instances (HQ correct, LQ wrong).
std::vector<PreferencePair> build_vd_lb(std::span<const ViewPair> views, PairOptions opts = {});
// Correct vs incorrect HQ samples of the same instance. Samples of an
// instance are ordered as they appear in `records`.
std::vector<PreferencePair> build_hq_vs_hq(std::span<const QaInstance> instances,
                                           std::span<const ResponseRecord> records,
                                           PairOptions opts = {});

struct CrossPolicyStats {
  std::size_t joined = 0;
  std::size_t skipped_preferred_only = 0;
  std::size_t skipped_dispreferred_only = 0;
};

// Chosen texts from `preferred`, rejected texts from `dispreferred`, joined
// on instance id over HQ-view records.
std::vector<PreferencePair> build_cross_policy(std::span<const QaInstance> instances,
                                               std::span<const ResponseRecord> preferred,
                                               std::span<const ResponseRecord> dispreferred,
                                               PairOptions opts = {},
                                               CrossPolicyStats* stats = nullptr);

std::string to_json_line(const PreferencePair& p);
PreferencePair pair_from_json_line(std::string_view line);

// Writes pairs sorted by pair_id, one per line. Returns the line count.
std::size_t export_dpo_jsonl(std::span<const PreferencePair> pairs,
                             const std::filesystem::path& path);
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);

}  // namespace vdforge
