#include "vdforge/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "vdforge/analysis.hpp"
#include "vdforge/dpocore.hpp"
#include "vdforge/grade.hpp"
#include "vdforge/image_io.hpp"
#include "vdforge/log.hpp"
#include "vdforge/pairs.hpp"
#include "vdforge/policy.hpp"
#include "vdforge/synthbench.hpp"

namespace vdforge::cli {

namespace {

namespace fs = std::filesystem;

// A flag combination CLI11 cannot express (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  std::erase_if(out, [](const std::string& x) { return x.empty(); });
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw UsageError(what + ": not a number: '" + s + "'");
  }
  return v;
}

std::vector<double> parse_alphas(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    const double a = parse_double(item, "--alphas");
    if (!(a > 0.0 && a <= 1.0)) throw UsageError("--alphas: values must be in (0, 1]");
    out.push_back(a);
  }
  if (out.empty()) throw UsageError("--alphas: empty list");
  return out;
}

std::vector<ViewSpec> parse_views(const std::string& s) {
  std::vector<ViewSpec> out;
  try {
    for (const auto& item : split_list(s)) out.push_back(ViewSpec::parse(item));
  } catch (const Error& e) {
    throw UsageError(std::string("--views: ") + e.what());
  }
  if (out.empty()) throw UsageError("--views: empty list");
  return out;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("--alpha must be in (0, 1)");
}

grade::MetricSpec metric_from(const std::string& name, double tol) {
  try {
    return grade::MetricSpec::parse(name, tol);
  } catch (const Error& e) {
    throw UsageError(std::string("--metric: ") + e.what());
  }
}

// ---- generation options shared by `generate` and `sweep` -----------------------------

struct GenOptions {
  std::string instances;
  std::string backend = "synthetic";
  std::string policy_id;
  std::string cache;
  std::string replay_from;
  // remote
  std::string endpoint;
  std::string model;
  std::string prompt_file;
  int timeout_ms = 120000;
  int max_attempts = 3;
  // synthetic
  double tau = synth::kDefaultTau;
  double verbosity = 1.5;
  // decoding
  double temperature = 0.0;
  int max_tokens = 1024;
  std::int64_t decode_seed = 0;
  int samples = 1;
  int jobs = policy::kDefaultJobs;
};

void add_gen_options(CLI::App* sub, GenOptions& g) {
  sub->add_option("--instances", g.instances, "instances.jsonl manifest")->required();
  sub->add_option("--backend", g.backend, "remote | synthetic | replay")
      ->check(CLI::IsMember({"remote", "synthetic", "replay"}))
      ->capture_default_str();
  sub->add_option("--policy-id", g.policy_id, "policy id stamped on records (default: backend name)");
  sub->add_option("--cache", g.cache, "response cache file (default: $VDFORGE_CACHE_DIR/<policy>.jsonl)");
  sub->add_option("--replay-from", g.replay_from, "responses file served by the replay backend");
  sub->add_option("--endpoint", g.endpoint, "remote: base URL of a chat-completions service");
  sub->add_option("--model", g.model, "remote: model name");
  sub->add_option("--prompt-file", g.prompt_file, "remote: prompt template file ({question} placeholder)");
  sub->add_option("--timeout-ms", g.timeout_ms)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--max-attempts", g.max_attempts)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--tau", g.tau, "synthetic: legibility threshold")->capture_default_str();
  sub->add_option("--verbosity", g.verbosity, "synthetic: hedging verbosity")->capture_default_str();
  sub->add_option("--temperature", g.temperature)->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--max-tokens", g.max_tokens)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--decode-seed", g.decode_seed, "first decode seed")->capture_default_str();
  sub->add_option("--samples", g.samples, "decode seeds per (instance, view)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--jobs", g.jobs, "requests in flight")->check(CLI::PositiveNumber)->capture_default_str();
}

std::vector<DecodeParams> decodes_of(const GenOptions& g) {
  std::vector<DecodeParams> out;
  for (int k = 0; k < g.samples; ++k) {
    DecodeParams d;
    d.temperature = g.temperature;
    d.max_tokens = g.max_tokens;
    d.seed = g.decode_seed + k;
    out.push_back(d);
  }
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct BackendBundle {
  std::unique_ptr<policy::Backend> backend;
  std::unique_ptr<policy::ResponseCache> cache;
};

std::string single_policy_of(const fs::path& responses) {
  std::set<std::string> ids;
  for (const auto& r : load_records(responses)) ids.insert(r.policy_id);
  if (ids.size() != 1) {
    throw UsageError("--policy-id is required: " + responses.string() + " holds " +
                     std::to_string(ids.size()) + " policies");
  }
  return *ids.begin();
}

BackendBundle make_backend(const GenOptions& g) {
  BackendBundle b;
  std::string policy_id = g.policy_id;
  if (g.backend == "synthetic") {
    policy::SyntheticConfig cfg;
    if (!policy_id.empty()) cfg.policy_id = policy_id;
    cfg.tau = g.tau;
    cfg.verbosity = g.verbosity;
    b.backend = std::make_unique<policy::SyntheticBackend>(cfg);
  } else if (g.backend == "remote") {
    if (g.endpoint.empty() || g.model.empty()) {
      throw UsageError("the remote backend needs --endpoint and --model");
    }
    policy::RemoteConfig cfg;
    if (!policy_id.empty()) cfg.policy_id = policy_id;
    cfg.endpoint = g.endpoint;
    cfg.model = g.model;
    cfg.timeout_ms = g.timeout_ms;
    cfg.max_attempts = g.max_attempts;
    if (!g.prompt_file.empty()) cfg.prompt_template = read_text(g.prompt_file);
    b.backend = std::make_unique<policy::RemoteBackend>(cfg);
  } else {
    if (g.replay_from.empty()) throw UsageError("the replay backend needs --replay-from");
    if (policy_id.empty()) policy_id = single_policy_of(g.replay_from);
    b.backend = std::make_unique<policy::ReplayBackend>(g.replay_from, policy_id);
    return b;  // replay never writes a cache
  }

  fs::path cache = g.cache;
  if (cache.empty()) {
    if (const char* dir = std::getenv(policy::kCacheDirEnv); dir && *dir) {
      fs::create_directories(dir);
      cache = fs::path(dir) / (b.backend->policy_id() + ".jsonl");
    }
  }
  if (!cache.empty()) {
    b.cache = std::make_unique<policy::ResponseCache>(cache);
    log_info("response cache: " + cache.string() + " (" + std::to_string(b.cache->size()) +
             " records)");
  }
  return b;
}

// ---- subcommands ----------------------------------------------------------------------

struct SynthOptions {
  std::string spec;
  std::string out;
  synth::SynthSpec s;
};

int run_synth(CLI::App* sub, SynthOptions& o) {
  synth::SynthSpec spec = o.s;
  if (!o.spec.empty()) {
    spec = synth::load_synth_spec(o.spec);
    // Explicit flags override the spec file.
    auto given = [&](const char* name) { return sub->get_option(name)->count() > 0; };
    if (given("--n")) spec.n = o.s.n;
    if (given("--seed")) spec.seed = o.s.seed;
    if (given("--glyph-min")) spec.glyph_px_min = o.s.glyph_px_min;
    if (given("--glyph-max")) spec.glyph_px_max = o.s.glyph_px_max;
    if (given("--rows")) spec.rows = o.s.rows;
    if (given("--cols")) spec.cols = o.s.cols;
    if (given("--value-min")) spec.value_min = o.s.value_min;
    if (given("--value-max")) spec.value_max = o.s.value_max;
    if (given("--tau")) spec.tau = o.s.tau;
  }
  spec.validate();
  auto instances = synth::gen_corpus(spec, o.out);
  std::ofstream(fs::path(o.out) / "synth.conf") << synth::format_synth_spec(spec);
  log_info("wrote " + std::to_string(instances.size()) + " instances to " +
           (fs::path(o.out) / "instances.jsonl").string());
  return kExitOk;
}

struct DegradeOptions {
  std::string instances;
  std::string image;
  std::string out;
  std::string views;
  double alpha = 0.1;
};

int run_degrade(const DegradeOptions& o) {
  const auto views = parse_views(o.views.empty() ? ViewSpec::resolution(o.alpha).label() : o.views);
  if (!o.image.empty()) {
    if (views.size() != 1 || o.out.empty()) {
      throw UsageError("--image needs exactly one view and --out");
    }
    write_png(o.out, apply_view(read_image(o.image), views[0]));
    return kExitOk;
  }
  if (o.instances.empty()) throw UsageError("degrade needs --instances or --image");
  const auto instances = load_instances(o.instances);
  for (const auto& inst : instances) {
    const auto src = resolve_image_path(o.instances, inst);
    for (const auto& v : views) {
      std::cout << inst.id << '\t' << v.label() << '\t' << materialize_view(src, v).string() << '\n';
    }
  }
  return kExitOk;
}

struct GenerateOptions {
  GenOptions g;
  std::string views;
  double alpha = 0.1;
  std::string out;
};

int run_generate(const GenerateOptions& o) {
  const auto views = parse_views(o.views.empty() ? "hq," + ViewSpec::resolution(o.alpha).label() : o.views);
  const auto instances = load_instances(o.g.instances);
  auto bundle = make_backend(o.g);
  policy::Generator gen(*bundle.backend, bundle.cache.get(), o.g.instances);
  const auto decodes = decodes_of(o.g);
  log_info("generating " + std::to_string(instances.size() * views.size() * decodes.size()) +
           " responses with policy " + bundle.backend->policy_id());
  const auto records = gen.generate_all(instances, views, decodes, o.g.jobs);
  write_records(o.out, records);
  log_info("wrote " + std::to_string(records.size()) + " records to " + o.out);
  return kExitOk;
}

struct GradeOptions {
  std::string instances;
  std::string responses;
  std::string metric = "em";
  double tol = grade::kDefaultTolerance;
};

int run_grade(const GradeOptions& o) {
  const auto metric = metric_from(o.metric, o.tol);
  const auto instances = load_instances(o.instances);
  auto records = load_records(o.responses);
  grade::grade_records(records, instances, metric);
  write_records(o.responses, records);
  std::size_t correct = 0;
  for (const auto& r : records) correct += *r.correct ? 1 : 0;
  log_info("graded " + std::to_string(records.size()) + " records with " + metric.name() + ": " +
           std::to_string(correct) + " correct");
  return kExitOk;
}

struct PairsOptions {
  std::string mode = "vd-lf";
  std::string instances;
  std::string responses;
  std::string rejected_responses;
  std::string policy;
  std::string lq_view;
  double alpha = 0.1;
  bool no_dedup = false;
  bool all_combinations = false;
  std::string out;
};

fs::path default_instances(const std::string& given, const std::string& responses) {
  if (!given.empty()) return given;
  return fs::path(responses).parent_path() / "instances.jsonl";
}

int run_pairs(const PairsOptions& o) {
  const PairMode mode = parse_pair_mode(o.mode);
  const auto instances = load_instances(default_instances(o.instances, o.responses));
  const auto records = load_records(o.responses);
  PairOptions opts;
  opts.dedup = !o.no_dedup;
  opts.all_combinations = o.all_combinations;

  std::vector<PreferencePair> pairs;
  if (mode == PairMode::VdLf || mode == PairMode::VdLb) {
    check_alpha(o.alpha);
    const std::string lq = o.lq_view.empty() ? ViewSpec::resolution(o.alpha).label()
                                             : ViewSpec::parse(o.lq_view).label();
    const auto views = join_views(instances, records, lq, o.policy);
    pairs = mode == PairMode::VdLf ? build_vd_lf(views, opts) : build_vd_lb(views, opts);
  } else if (mode == PairMode::HqVsHq) {
    std::vector<ResponseRecord> mine;
    for (const auto& r : records) {
      if (o.policy.empty() || r.policy_id == o.policy) mine.push_back(r);
    }
    pairs = build_hq_vs_hq(instances, mine, opts);
  } else {
    if (o.rejected_responses.empty()) {
      throw UsageError("--mode cross needs --rejected-responses");
    }
    const auto dispreferred = load_records(o.rejected_responses);
    CrossPolicyStats stats;
    pairs = build_cross_policy(instances, records, dispreferred, opts, &stats);
    log_info("cross-policy join: " + std::to_string(stats.joined) + " joined, " +
             std::to_string(stats.skipped_preferred_only + stats.skipped_dispreferred_only) +
             " skipped");
  }
  const auto n = export_dpo_jsonl(pairs, o.out);
  log_info("wrote " + std::to_string(n) + " " + std::string(to_string(mode)) + " pairs to " + o.out);
  return kExitOk;
}

struct TrainOptions {
  std::string pairs;
  std::string eval;
  std::string objective = "dpo";
  double beta = 0.1;
  double lr = 1e-2;
  int steps = 100;
  int batch_size = 0;
  std::uint64_t seed = 0;
  int feature_dim = 32;
  bool length_normalize = false;
  std::string out;
  std::string history;
};

int run_train(const TrainOptions& o) {
  dpo::TrainConfig cfg;
  try {
    cfg.objective = dpo::parse_objective(o.objective);
  } catch (const Error& e) {
    throw UsageError(std::string("--objective: ") + e.what());
  }
  cfg.beta = o.beta;
  cfg.lr = o.lr;
  cfg.steps = o.steps;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.feature_dim = o.feature_dim;
  cfg.score.length_normalize = o.length_normalize;
  cfg.validate();

  const auto pairs = load_pairs(o.pairs);
  auto result = dpo::train(pairs, cfg);
  if (!o.out.empty()) save_policy(o.out, result.policy);
  if (!o.history.empty()) dpo::write_loss_history(o.history, result.history);

  const auto items = dpo::make_items(result.policy, pairs);
  dpo::DpoBatch batch{items, cfg.beta};
  std::cout << "pairs=" << pairs.size() << '\n';
  std::cout << "initial_loss=" << format_real(result.history.empty() ? 0.0 : result.history.front()) << '\n';
  std::cout << "final_dpo_loss=" << format_real(dpo::dpo_loss(result.policy, result.reference, batch, cfg.score)) << '\n';
  std::cout << "train_margin=" << format_real(dpo::mean_margin(result.policy, result.reference, items, cfg.score)) << '\n';
  if (!o.eval.empty()) {
    const auto held = load_pairs(o.eval);
    const auto held_items = dpo::make_items(result.policy, held);
    std::cout << "eval_pairs=" << held.size() << '\n';
    std::cout << "eval_margin=" << format_real(dpo::mean_margin(result.policy, result.reference, held_items, cfg.score)) << '\n';
  }
  return kExitOk;
}

struct SweepOptions {
  GenOptions g;
  std::string alphas = "1.0,0.8,0.6,0.4,0.2,0.1";
  std::string metric = "em";
  double tol = grade::kDefaultTolerance;
  std::string out;
  std::string responses_out;
};

int run_sweep(const SweepOptions& o) {
  const auto alphas = parse_alphas(o.alphas);
  const auto metric = metric_from(o.metric, o.tol);
  if (o.g.samples != 1) throw UsageError("sweep uses one decode per instance (--samples 1)");
  const auto instances = load_instances(o.g.instances);
  auto bundle = make_backend(o.g);
  policy::Generator gen(*bundle.backend, bundle.cache.get(), o.g.instances);
  std::vector<ResponseRecord> graded;
  analysis::SweepResult sweep;
  try {
    sweep = analysis::resolution_sweep(gen, instances, alphas, metric, decodes_of(o.g)[0], o.g.jobs,
                                       &graded);
  } catch (const analysis::SweepFailure& e) {
    if (!o.out.empty() && !e.partial().rows.empty()) {
      analysis::write_sweep_csv(fs::path(o.out), e.partial());
      log_warn("partial sweep written to " + o.out);
    }
    throw;
  }
  if (o.out.empty()) {
    analysis::write_sweep_csv(std::cout, sweep);
  } else {
    analysis::write_sweep_csv(fs::path(o.out), sweep);
  }
  if (!o.responses_out.empty()) write_records(o.responses_out, graded);
  log_info("\n" + analysis::format_sweep_table(sweep));
  return kExitOk;
}

struct ReportOptions {
  std::string instances;
  std::string responses;
  std::string policy;
  std::string lq_view;
  double alpha = 0.1;
  int bin_width = 10;
  std::string counts;
  std::string sweep;
  std::string baseline;
  std::vector<std::string> runs;
  std::string out_dir;
};

void write_file(const fs::path& dir, const std::string& name,
                const std::function<void(std::ostream&)>& body) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / name).string());
  body(out);
}

int run_report(const ReportOptions& o) {
  bool did_something = false;
  if (!o.responses.empty()) {
    check_alpha(o.alpha);
    const auto instances = load_instances(default_instances(o.instances, o.responses));
    const auto records = load_records(o.responses);
    const std::string lq = o.lq_view.empty() ? ViewSpec::resolution(o.alpha).label()
                                             : ViewSpec::parse(o.lq_view).label();
    const auto views = join_views(instances, records, lq, o.policy);
    const auto dist = analysis::category_distribution(views);
    const auto lengths = analysis::length_stats(views, o.bin_width);
    std::cout << analysis::format_category_table(dist) << '\n';
    analysis::write_lengths_csv(std::cout, lengths);
    if (!o.out_dir.empty()) {
      write_file(o.out_dir, "categories.csv", [&](std::ostream& s) { analysis::write_categories_csv(s, dist); });
      write_file(o.out_dir, "lengths.csv", [&](std::ostream& s) { analysis::write_lengths_csv(s, lengths); });
      write_file(o.out_dir, "length_hist.csv", [&](std::ostream& s) { analysis::write_histogram_csv(s, lengths); });
    }
    did_something = true;
  }
  if (!o.counts.empty()) {
    const auto parts = split_list(o.counts);
    if (parts.size() != 4) throw UsageError("--counts needs four comma-separated integers");
    std::int64_t c[4];
    for (int i = 0; i < 4; ++i) {
      auto [p, ec] = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), c[i]);
      if (ec != std::errc{} || p != parts[i].data() + parts[i].size()) {
        throw UsageError("--counts: not an integer: '" + parts[i] + "'");
      }
    }
    const auto dist = analysis::distribution_from_counts(c[0], c[1], c[2], c[3]);
    std::cout << analysis::format_category_table(dist) << '\n';
    did_something = true;
  }
  if (!o.sweep.empty()) {
    std::cout << analysis::format_sweep_table(analysis::read_sweep_csv(o.sweep)) << '\n';
    did_something = true;
  }
  if (!o.baseline.empty()) {
    if (o.runs.empty()) throw UsageError("--baseline needs at least one --run");
    const auto base = analysis::read_results_csv(o.baseline);
    std::vector<analysis::RunResults> treatments;
    for (const auto& r : o.runs) treatments.push_back(analysis::read_results_csv(r));
    const auto report = analysis::compare_runs(base, treatments);
    std::cout << analysis::format_report_table(report);
    if (!o.out_dir.empty()) {
      write_file(o.out_dir, "report.csv", [&](std::ostream& s) { analysis::write_report_csv(s, report); });
    }
    did_something = true;
  } else if (!o.runs.empty()) {
    throw UsageError("--run needs --baseline");
  }
  if (!did_something) {
    throw UsageError("report needs --responses, --counts, --sweep or --baseline");
  }
  return kExitOk;
}

// Lines of the app-wide config dump that belong to `sub`, e.g. "train.beta=0.1".
std::string resolved_config(CLI::App& app, const CLI::App* sub) {
  std::istringstream all(app.config_to_str(true, false));
  const std::string prefix = sub->get_name() + ".";
  std::string out;
  std::string line;
  while (std::getline(all, line)) {
    if (line.rfind(prefix, 0) == 0) out += line + '\n';
  }
  return out;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"vdforge: preference pairs from visual-quality degradations", "vdforge"};
  app.set_config("--config", "", "key=value run config (flags override it)");
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress messages")->configurable(false);

  bool print_config = false;
  auto add_sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    s->add_flag("--print-config", print_config, "print the resolved config and exit")
        ->configurable(false);
    return s;
  };

  SynthOptions so;
  auto* synth_cmd = add_sub("synth", "generate a synthetic grid-reading corpus");
  synth_cmd->add_option("--spec", so.spec, "synthetic spec file (key = value)");
  synth_cmd->add_option("--out", so.out, "output directory")->required();
  synth_cmd->add_option("--n", so.s.n)->capture_default_str();
  synth_cmd->add_option("--seed", so.s.seed)->capture_default_str();
  synth_cmd->add_option("--glyph-min", so.s.glyph_px_min)->capture_default_str();
  synth_cmd->add_option("--glyph-max", so.s.glyph_px_max)->capture_default_str();
  synth_cmd->add_option("--rows", so.s.rows)->capture_default_str();
  synth_cmd->add_option("--cols", so.s.cols)->capture_default_str();
  synth_cmd->add_option("--value-min", so.s.value_min)->capture_default_str();
  synth_cmd->add_option("--value-max", so.s.value_max)->capture_default_str();
  synth_cmd->add_option("--tau", so.s.tau)->capture_default_str();

  DegradeOptions dg;
  auto* degrade_cmd = add_sub("degrade", "render degraded views of images");
  degrade_cmd->add_option("--instances", dg.instances, "instances.jsonl manifest");
  degrade_cmd->add_option("--image", dg.image, "single input image");
  degrade_cmd->add_option("--out", dg.out, "output PNG for --image");
  degrade_cmd->add_option("--views", dg.views, "comma list of view labels (default res:<alpha>)");
  degrade_cmd->add_option("--alpha", dg.alpha)->capture_default_str();

  GenerateOptions ge;
  auto* generate_cmd = add_sub("generate", "produce policy responses for (instance, view) pairs");
  add_gen_options(generate_cmd, ge.g);
  generate_cmd->add_option("--views", ge.views, "comma list of view labels (default hq,res:<alpha>)");
  generate_cmd->add_option("--alpha", ge.alpha)->capture_default_str();
  generate_cmd->add_option("--out", ge.out, "responses.jsonl to write")->required();

  GradeOptions gr;
  auto* grade_cmd = add_sub("grade", "annotate responses.jsonl in place with correctness");
  grade_cmd->add_option("--instances", gr.instances)->required();
  grade_cmd->add_option("--responses", gr.responses)->required();
  grade_cmd->add_option("--metric", gr.metric, "em | tm")
      ->check(CLI::IsMember({"em", "tm"}))
      ->capture_default_str();
  grade_cmd->add_option("--tol", gr.tol, "tm tolerance")->capture_default_str();

  PairsOptions pa;
  auto* pairs_cmd = add_sub("pairs", "build preference pairs and export DPO jsonl");
  pairs_cmd->add_option("--mode", pa.mode, "vd-lf | vd-lb | hq-vs-hq | cross")
      ->check(CLI::IsMember({"vd-lf", "vd-lb", "hq-vs-hq", "cross"}))
      ->capture_default_str();
  pairs_cmd->add_option("--instances", pa.instances, "default: instances.jsonl next to --responses");
  pairs_cmd->add_option("--responses", pa.responses, "graded responses (preferred policy for cross)")
      ->required();
  pairs_cmd->add_option("--rejected-responses", pa.rejected_responses, "cross: dispreferred policy");
  pairs_cmd->add_option("--policy", pa.policy, "only use records of this policy");
  pairs_cmd->add_option("--lq-view", pa.lq_view, "LQ view label (default res:<alpha>)");
  pairs_cmd->add_option("--alpha", pa.alpha)->capture_default_str();
  pairs_cmd->add_flag("--no-dedup", pa.no_dedup, "keep pairs with identical texts");
  pairs_cmd->add_flag("--all-combinations", pa.all_combinations, "hq-vs-hq: every correct x wrong pair");
  pairs_cmd->add_option("--out", pa.out, "pairs.jsonl to write")->required();

  TrainOptions tr;
  auto* train_cmd = add_sub("train", "train the toy policy on exported pairs");
  train_cmd->add_option("--pairs", tr.pairs)->required();
  train_cmd->add_option("--eval", tr.eval, "held-out pairs for the final margin");
  train_cmd->add_option("--objective", tr.objective, "dpo | sft")
      ->check(CLI::IsMember({"dpo", "sft"}))
      ->capture_default_str();
  train_cmd->add_option("--beta", tr.beta)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--steps", tr.steps)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size, "0 = full batch")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--feature-dim", tr.feature_dim)->capture_default_str();
  train_cmd->add_flag("--length-normalize", tr.length_normalize);
  train_cmd->add_option("--out", tr.out, "trained policy JSON");
  train_cmd->add_option("--history", tr.history, "loss history CSV");

  SweepOptions sw;
  auto* sweep_cmd = add_sub("sweep", "accuracy across a resolution grid");
  add_gen_options(sweep_cmd, sw.g);
  sweep_cmd->add_option("--alphas", sw.alphas, "comma list in (0, 1]")->capture_default_str();
  sweep_cmd->add_option("--metric", sw.metric, "em | tm")
      ->check(CLI::IsMember({"em", "tm"}))
      ->capture_default_str();
  sweep_cmd->add_option("--tol", sw.tol)->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "sweep.csv (default: stdout)");
  sweep_cmd->add_option("--responses-out", sw.responses_out, "also write the graded responses");

  ReportOptions re;
  auto* report_cmd = add_sub("report", "category, length, sweep and run-comparison reports");
  report_cmd->add_option("--instances", re.instances, "default: instances.jsonl next to --responses");
  report_cmd->add_option("--responses", re.responses, "graded HQ+LQ responses");
  report_cmd->add_option("--policy", re.policy);
  report_cmd->add_option("--lq-view", re.lq_view);
  report_cmd->add_option("--alpha", re.alpha)->capture_default_str();
  report_cmd->add_option("--bin-width", re.bin_width)->check(CLI::PositiveNumber)->capture_default_str();
  report_cmd->add_option("--counts", re.counts, "always_correct,quality_sensitive,always_wrong,paradoxically_robust");
  report_cmd->add_option("--sweep", re.sweep, "sweep.csv to tabulate");
  report_cmd->add_option("--baseline", re.baseline, "baseline results.csv");
  report_cmd->add_option("--run", re.runs, "treatment results.csv (repeatable)");
  report_cmd->add_option("--out-dir", re.out_dir, "directory for CSV outputs");

  CLI::App* active = nullptr;
  try {
    app.parse(argc, argv);
    active = app.get_subcommands().front();
  } catch (const CLI::CallForHelp&) {
    CLI::App* where = &app;
    for (auto* s : app.get_subcommands()) where = s;
    std::cout << where->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    CLI::App* where = &app;
    for (auto* s : app.get_subcommands()) where = s;
    std::cerr << "vdforge: " << e.what() << "\n\n" << where->help();
    return kExitUsage;
  }

  set_quiet(quiet);
  if (print_config) {
    std::cout << resolved_config(app, active);
    return kExitOk;
  }

  const std::string name = active->get_name();
  try {
    if (name == "synth") return run_synth(active, so);
    if (name == "degrade") return run_degrade(dg);
    if (name == "generate") return run_generate(ge);
    if (name == "grade") return run_grade(gr);
    if (name == "pairs") return run_pairs(pa);
    if (name == "train") return run_train(tr);
    if (name == "sweep") return run_sweep(sw);
    return run_report(re);
  } catch (const UsageError& e) {
    std::cerr << "vdforge " << name << ": " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "vdforge " << name << ": error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace vdforge::cli
