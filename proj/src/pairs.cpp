#include "vdforge/pairs.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include "json.hpp"
#include "vdforge/json_line.hpp"
#include "vdforge/log.hpp"

namespace vdforge {

namespace {

std::string_view trim(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

bool same_text(std::string_view a, std::string_view b) { return trim(a) == trim(b); }

std::string describe(const ResponseRecord& r) {
  return "instance \"" + r.instance_id + "\" view \"" + r.view_label + "\" policy \"" +
         r.policy_id + "\"";
}

void require_graded(const ResponseRecord& r) {
  if (!r.correct) throw Error("ungraded record: " + describe(r));
}

PreferencePair make_pair(const QaInstance& inst, PairMode mode, const ResponseRecord& chosen,
                         const ResponseRecord& rejected) {
  PreferencePair p;
  p.pair_id = inst.id + "#" + std::string(to_string(mode));
  p.instance_id = inst.id;
  p.prompt = inst.question;
  p.hq_image_path = inst.image_path;
  p.chosen = chosen.text;
  p.rejected = rejected.text;
  p.mode = mode;
  p.chosen_policy_id = chosen.policy_id;
  p.rejected_policy_id = rejected.policy_id;
  return p;
}

const QaInstance& find_instance(const std::unordered_map<std::string_view, const QaInstance*>& m,
                                const std::string& id) {
  auto it = m.find(id);
  if (it == m.end()) throw Error("record references unknown instance \"" + id + "\"");
  return *it->second;
}

std::unordered_map<std::string_view, const QaInstance*> index_instances(
    std::span<const QaInstance> instances) {
  std::unordered_map<std::string_view, const QaInstance*> m;
  for (const auto& inst : instances) m.emplace(inst.id, &inst);
  return m;
}

}  // namespace

std::string_view to_string(Category c) {
  switch (c) {
    case Category::AlwaysCorrect: return "always_correct";
    case Category::QualitySensitive: return "quality_sensitive";
    case Category::AlwaysWrong: return "always_wrong";
    case Category::ParadoxicallyRobust: return "paradoxically_robust";
  }
  return "";
}

Category parse_category(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  throw Error("unknown category '" + std::string(s) + "'");
}

std::string_view to_string(PairMode m) {
  switch (m) {
    case PairMode::VdLf: return "vd_lf";
    case PairMode::VdLb: return "vd_lb";
    case PairMode::HqVsHq: return "hq_vs_hq";
    case PairMode::CrossPolicy: return "cross_policy";
  }
  return "";
}

PairMode parse_pair_mode(std::string_view s) {
  if (s == "vd_lf" || s == "vd-lf") return PairMode::VdLf;
  if (s == "vd_lb" || s == "vd-lb") return PairMode::VdLb;
  if (s == "hq_vs_hq" || s == "hq-vs-hq") return PairMode::HqVsHq;
  if (s == "cross_policy" || s == "cross") return PairMode::CrossPolicy;
  throw Error("unknown pair mode '" + std::string(s) + "'");
}

std::vector<ViewPair> join_views(std::span<const QaInstance> instances,
                                 std::span<const ResponseRecord> records,
                                 std::string_view lq_label, std::string_view policy_id) {
  const std::string hq_label = ViewSpec::hq().label();
  struct Slots {
    const ResponseRecord* hq = nullptr;
    const ResponseRecord* lq = nullptr;
  };
  std::unordered_map<std::string_view, Slots> slots;
  for (const auto& r : records) {
    if (!policy_id.empty() && r.policy_id != policy_id) continue;
    const ResponseRecord** slot = nullptr;
    if (r.view_label == hq_label) {
      slot = &slots[r.instance_id].hq;
    } else if (r.view_label == lq_label) {
      slot = &slots[r.instance_id].lq;
    } else {
      continue;
    }
    if (*slot) {
      throw Error("more than one record for " + describe(r) +
                  "; select a single policy and sample");
    }
    *slot = &r;
  }
  auto known = index_instances(instances);
  for (const auto& [id, s] : slots) {
    if (!known.contains(id)) throw Error("record references unknown instance \"" + std::string(id) + "\"");
  }

  std::vector<ViewPair> out;
  for (const auto& inst : instances) {
    auto it = slots.find(inst.id);
    if (it == slots.end()) continue;
    const Slots& s = it->second;
    if (!s.hq || !s.lq) {
      throw Error("instance \"" + inst.id + "\" is missing its " +
                  (s.hq ? std::string(lq_label) : hq_label) + " counterpart record");
    }
    if (s.hq->policy_id != s.lq->policy_id) {
      throw Error("instance \"" + inst.id + "\" pairs records from different policies");
    }
    out.push_back(ViewPair{inst, *s.hq, *s.lq});
  }
  return out;
}

Category classify(const ResponseRecord& hq, const ResponseRecord& lq) {
  if (hq.instance_id != lq.instance_id) {
    throw Error("cannot classify records of different instances (\"" + hq.instance_id +
                "\" vs \"" + lq.instance_id + "\")");
  }
  require_graded(hq);
  require_graded(lq);
  if (*hq.correct) return *lq.correct ? Category::AlwaysCorrect : Category::QualitySensitive;
  return *lq.correct ? Category::ParadoxicallyRobust : Category::AlwaysWrong;
}

std::vector<PreferencePair> build_vd_lf(std::span<const ViewPair> views, PairOptions opts) {
  std::vector<PreferencePair> out;
  for (const auto& v : views) {
    if (opts.dedup && same_text(v.hq.text, v.lq.text)) continue;
    auto p = make_pair(v.instance, PairMode::VdLf, v.hq, v.lq);
    if (v.hq.correct && v.lq.correct) p.category = classify(v.hq, v.lq);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PreferencePair> build_vd_lb(std::span<const ViewPair> views, PairOptions opts) {
  for (const auto& v : views) {
    require_graded(v.hq);
    require_graded(v.lq);
  }
  std::vector<PreferencePair> out;
  for (const auto& v : views) {
    Category c = classify(v.hq, v.lq);
    if (c != Category::QualitySensitive) continue;
    if (opts.dedup && same_text(v.hq.text, v.lq.text)) continue;
    auto p = make_pair(v.instance, PairMode::VdLb, v.hq, v.lq);
    p.category = c;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PreferencePair> build_hq_vs_hq(std::span<const QaInstance> instances,
                                           std::span<const ResponseRecord> records,
                                           PairOptions opts) {
  const std::string hq_label = ViewSpec::hq().label();
  std::unordered_map<std::string_view, std::vector<const ResponseRecord*>> samples;
  for (const auto& r : records) {
    if (r.view_label != hq_label) continue;
    require_graded(r);
    samples[r.instance_id].push_back(&r);
  }
  auto known = index_instances(instances);
  for (const auto& [id, list] : samples) {
    if (!known.contains(id)) throw Error("record references unknown instance \"" + std::string(id) + "\"");
  }

  std::vector<PreferencePair> out;
  for (const auto& inst : instances) {
    auto it = samples.find(inst.id);
    if (it == samples.end()) continue;
    const auto& list = it->second;
    if (list.size() < 2) {
      throw Error("instance \"" + inst.id + "\" has " + std::to_string(list.size()) +
                  " HQ sample(s); at least 2 are required");
    }
    std::vector<std::size_t> correct, wrong;
    for (std::size_t i = 0; i < list.size(); ++i) (*list[i]->correct ? correct : wrong).push_back(i);
    if (correct.empty() || wrong.empty()) continue;

    auto emit = [&](std::size_t ci, std::size_t wi, bool suffix) {
      if (opts.dedup && same_text(list[ci]->text, list[wi]->text)) return;
      auto p = make_pair(inst, PairMode::HqVsHq, *list[ci], *list[wi]);
      if (suffix) p.pair_id += "#" + std::to_string(ci) + "-" + std::to_string(wi);
      out.push_back(std::move(p));
    };
    if (opts.all_combinations) {
      for (auto ci : correct)
        for (auto wi : wrong) emit(ci, wi, true);
    } else {
      emit(correct.front(), wrong.front(), false);
    }
  }
  return out;
}

std::vector<PreferencePair> build_cross_policy(std::span<const QaInstance> instances,
                                               std::span<const ResponseRecord> preferred,
                                               std::span<const ResponseRecord> dispreferred,
                                               PairOptions opts, CrossPolicyStats* stats) {
  const std::string hq_label = ViewSpec::hq().label();
  auto by_instance = [&](std::span<const ResponseRecord> recs) {
    std::map<std::string_view, const ResponseRecord*> m;
    for (const auto& r : recs) {
      if (r.view_label != hq_label) continue;
      if (!m.emplace(r.instance_id, &r).second) {
        throw Error("more than one HQ record for " + describe(r));
      }
    }
    return m;
  };
  auto pref = by_instance(preferred);
  auto disp = by_instance(dispreferred);
  auto known = index_instances(instances);

  CrossPolicyStats s;
  for (const auto& [id, r] : pref) {
    if (!disp.contains(id)) ++s.skipped_preferred_only;
  }
  for (const auto& [id, r] : disp) {
    if (!pref.contains(id)) ++s.skipped_dispreferred_only;
  }

  std::vector<PreferencePair> out;
  for (const auto& [id, a] : pref) {
    auto it = disp.find(id);
    if (it == disp.end()) continue;
    ++s.joined;
    const QaInstance& inst = find_instance(known, a->instance_id);
    if (opts.dedup && same_text(a->text, it->second->text)) continue;
    out.push_back(make_pair(inst, PairMode::CrossPolicy, *a, *it->second));
  }
  if (s.skipped_preferred_only + s.skipped_dispreferred_only > 0) {
    log_info("cross-policy join skipped " +
             std::to_string(s.skipped_preferred_only + s.skipped_dispreferred_only) +
             " unmatched instance(s) (" + std::to_string(s.skipped_preferred_only) +
             " preferred-only, " + std::to_string(s.skipped_dispreferred_only) +
             " dispreferred-only)");
  }
  if (stats) *stats = s;
  if (s.joined == 0) throw Error("cross-policy join is empty: no instance has both responses");
  return out;
}

std::string to_json_line(const PreferencePair& p) {
  JsonLineWriter w;
  w.field("pair_id", p.pair_id);
  w.field("instance_id", p.instance_id);
  w.field("prompt", p.prompt);
  w.field("hq_image_path", p.hq_image_path);
  w.field("chosen", p.chosen);
  w.field("rejected", p.rejected);
  w.field("mode", to_string(p.mode));
  if (p.category) w.field("category", to_string(*p.category));
  return w.finish();
}

PreferencePair pair_from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("expected a JSON object");
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw Error(std::string("missing or non-string field \"") + key + "\"");
    }
    return it->get<std::string>();
  };
  PreferencePair p;
  p.pair_id = str("pair_id");
  p.instance_id = str("instance_id");
  p.prompt = str("prompt");
  p.hq_image_path = str("hq_image_path");
  p.chosen = str("chosen");
  p.rejected = str("rejected");
  p.mode = parse_pair_mode(str("mode"));
  if (auto it = j.find("category"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error("field \"category\" must be a string");
    p.category = parse_category(it->get<std::string>());
  }
  return p;
}

std::size_t export_dpo_jsonl(std::span<const PreferencePair> pairs,
                             const std::filesystem::path& path) {
  std::vector<const PreferencePair*> sorted;
  sorted.reserve(pairs.size());
  for (const auto& p : pairs) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->pair_id < b->pair_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->pair_id == sorted[i - 1]->pair_id) {
      throw Error("duplicate pair_id \"" + sorted[i]->pair_id + "\"");
    }
  }
  std::string body;
  for (const auto* p : sorted) {
    body += to_json_line(*p);
    body += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
  if (!out.flush()) throw Error("write failed: " + path.string());
  return sorted.size();
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(pair_from_json_line(line));
    } catch (const Error& e) {
      throw ManifestError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace vdforge
