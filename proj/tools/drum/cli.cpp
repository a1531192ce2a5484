// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <chrono>
#include <charconv>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drum/adapter.hpp"
#include "drum/checkpoint.hpp"
#include "drum/coreset.hpp"
#include "drum/embedding_store.hpp"
#include "drum/error.hpp"
#include "drum/eval.hpp"
#include "drum/plot.hpp"
#include "drum/report_io.hpp"
#include "drum/rng.hpp"
#include "drum/synthetic.hpp"
#include "drum/trainer.hpp"
#include "json.hpp"

#ifndef DRUM_VERSION
#define DRUM_VERSION "0.0.0"
#endif

namespace drum::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr std::uint64_t kInitStream = 0x696e6974;  // adapter init seed stream

const std::vector<std::string> kSubcommands = {"gen-synthetic", "inspect",  "sample", "train",
                                               "personalize",   "evaluate", "sweep"};
const std::vector<std::string> kGlobalKeys = {"seed", "threads"};

struct Globals {
  int threads = 1;
  std::uint64_t seed = 0;
  std::string config;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json typed_value(const std::string& text) {
  double number = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, number);
  if (!text.empty() && ec == std::errc{} && ptr == end) {
    std::int64_t whole = 0;
    const auto [iptr, iec] = std::from_chars(text.data(), end, whole);
    if (iec == std::errc{} && iptr == end) return whole;
    return number;
  }
  return text;
}

/// Every long option of `app` with its effective value.
json resolved_config(const CLI::App& app) {
  json cfg = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string name = opt->get_lnames().front();
    if (opt->get_expected_max() == 0) {
      cfg[name] = opt->count() > 0;
      continue;
    }
    if (opt->count() > 0) {
      cfg[name] = typed_value(opt->results().back());
    } else if (!opt->get_default_str().empty()) {
      cfg[name] = typed_value(opt->get_default_str());
    } else {
      cfg[name] = nullptr;
    }
  }
  return cfg;
}

struct Run {
  std::string subcommand;
  const CLI::App* app = nullptr;
  const Globals* globals = nullptr;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  std::string started_at = utc_now();
  json inputs = json::object();
  json outputs = json::object();
  json seeds = json::object();

  void write_manifest(const fs::path& path) const {
    json config = resolved_config(*app);
    config["threads"] = globals->threads;
    json m = {
        {"subcommand", subcommand},
        {"config", config},
        {"seed", globals->seed},
        {"seeds", seeds},
        {"inputs", inputs},
        {"outputs", outputs},
        {"engine_version", DRUM_VERSION},
        {"started_at", started_at},
        {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()},
    };
    write_text(path, m.dump(2) + "\n");
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError(flag + ": not a number: '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(flag + ": empty list");
  return out;
}

std::string config_key_to_flag(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

/// Expands a flat JSON config file into command-line tokens.
void config_tokens(const json& value, const std::string& key, std::vector<std::string>& out) {
  const std::string flag = config_key_to_flag(key);
  if (value.is_boolean()) {
    if (value.get<bool>()) out.push_back(flag);
  } else if (value.is_number_integer()) {
    out.push_back(flag);
    out.push_back(std::to_string(value.get<std::int64_t>()));
  } else if (value.is_number()) {
    out.push_back(flag);
    std::ostringstream os;
    os.precision(17);
    os << value.get<double>();
    out.push_back(os.str());
  } else if (value.is_string()) {
    out.push_back(flag);
    out.push_back(value.get<std::string>());
  } else if (value.is_array()) {
    std::string joined;
    for (const auto& item : value) {
      if (!item.is_primitive() || item.is_null()) throw ConfigError("config key '" + key + "': nested array value");
      if (!joined.empty()) joined += ",";
      joined += item.is_string() ? item.get<std::string>() : item.dump();
    }
    out.push_back(flag);
    out.push_back(joined);
  } else if (!value.is_null()) {
    throw ConfigError("config key '" + key + "' must be a scalar or a list");
  }
}

/// argv with the --config file spliced in ahead of the explicit flags, so
/// that explicit flags win under the take-last policy.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (!path) return args;

  json file;
  try {
    file = json::parse(read_text(*path));
  } catch (const json::exception& e) {
    throw FormatError("config " + *path + ": " + e.what());
  }
  if (!file.is_object()) throw FormatError("config " + *path + ": top level must be an object");

  std::vector<std::string> global, local;
  for (const auto& [key, value] : file.items()) {
    const bool is_global = std::find(kGlobalKeys.begin(), kGlobalKeys.end(), key) != kGlobalKeys.end();
    config_tokens(value, key, is_global ? global : local);
  }

  std::size_t sub = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (std::find(kSubcommands.begin(), kSubcommands.end(), args[i]) != kSubcommands.end()) {
      sub = i;
      break;
    }
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), global.begin(), global.end());
  for (std::size_t i = 1; i < args.size(); ++i) {
    out.push_back(args[i]);
    if (i == sub) out.insert(out.end(), local.begin(), local.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenOptions {
  std::string out;
  SyntheticSpec spec;
};

void run_gen(const GenOptions& o, Run& run, std::ostream& err) {
  SyntheticSpec spec = o.spec;
  spec.seed = run.globals->seed;
  const EmbeddingCorpus corpus = gen_synthetic(spec);
  save_corpus(corpus, o.out);
  run.seeds["synthetic"] = spec.seed;
  run.outputs["corpus"] = o.out;
  run.write_manifest(fs::path(o.out) / "run_manifest.json");
  err << "wrote " << corpus.size() << " records to " << o.out << "\n";
}

void run_inspect(const std::string& path, std::ostream& out) {
  const EmbeddingCorpus corpus = load_corpus(path);
  std::size_t users = 0;
  try {
    users = split_users(corpus).size();
  } catch (const ValidationError&) {
    users = 0;
  }
  out << "N: " << corpus.size() << "\n"
      << "d_sim: " << corpus.d_sim << "\n"
      << "d_cond: " << corpus.d_cond << "\n"
      << "max_tokens: " << corpus.max_tokens << "\n"
      << "encoder: " << corpus.encoder() << "\n"
      << "uncond_tokens: " << corpus.uncond.rows() << "\n"
      << "users: " << users << "\n";
}

struct SampleOptions {
  std::string corpus;
  double ratio = 0.1;
  std::optional<Index> k;
  bool no_preferences = false;
  std::string method = "coreset";
  std::string user;
  std::string out;
};

std::vector<Index> user_history(const EmbeddingCorpus& corpus, const std::string& user) {
  for (const auto& u : split_users(corpus)) {
    if (u.user == user) return u.history;
  }
  throw ValidationError("no user '" + user + "' in corpus");
}

void run_sample(const SampleOptions& o, Run& run, std::ostream& out) {
  const EmbeddingCorpus corpus = load_corpus(o.corpus);
  std::vector<Index> pool;
  if (o.user.empty()) {
    for (Index i = 0; i < corpus.size(); ++i) pool.push_back(i);
  } else {
    pool = user_history(corpus, o.user);
  }

  ProfileOptions opts;
  opts.method = parse_sampling_method(o.method);
  opts.ratio = o.ratio;
  opts.approx_size = o.k;
  opts.use_preferences = !o.no_preferences;
  opts.seed = run.globals->seed;

  UserProfile profile;
  profile.indices = select_profile(corpus, pool, opts);
  for (const Index i : profile.indices) profile.source_ids.push_back(corpus.records[static_cast<std::size_t>(i)].id);

  CoresetConfig cfg;
  cfg.sample_size = static_cast<Index>(profile.indices.size());
  cfg.approx_size = o.k.value_or(static_cast<Index>(pool.size()));
  cfg.seed = opts.seed;
  cfg.use_preferences = opts.use_preferences;
  const std::string text = profile_to_json(profile, cfg, o.ratio);

  run.inputs["corpus"] = o.corpus;
  run.seeds["sampling"] = opts.seed;
  if (o.out.empty()) {
    out << text;
    return;
  }
  write_text(o.out, text);
  run.outputs["profile"] = o.out;
  run.write_manifest(o.out + ".run.json");
}

struct TrainOptions {
  std::string corpus;
  std::string out;
  std::string heldout;
  TrainConfig train;
  std::optional<double> lr_floor;
  AdapterConfig arch;
  std::optional<Index> d_model;
};

void run_train(const TrainOptions& o, Run& run, std::ostream& err) {
  const EmbeddingCorpus corpus = load_corpus(o.corpus);
  std::optional<EmbeddingCorpus> heldout;
  if (!o.heldout.empty()) heldout = load_corpus(o.heldout);

  AdapterConfig arch = o.arch;
  arch.d_cond = corpus.d_cond;
  arch.d_model = o.d_model.value_or(corpus.d_cond);
  arch.validate();

  TrainConfig cfg = o.train;
  cfg.lr_floor = o.lr_floor;
  cfg.seed = run.globals->seed;
  cfg.threads = run.globals->threads;
  const std::uint64_t init_seed = derive_seed(cfg.seed, kInitStream);

  err << "training " << arch.n_layers << "x" << arch.n_heads << " adapter on " << corpus.size() << " prompts for "
      << cfg.total_steps << " steps\n";
  auto result = train(corpus, AdapterParams::initialize(arch, init_seed), cfg, heldout ? &*heldout : nullptr);
  const auto& report = result.report;
  err << "final loss " << report.loss.back() << ", train cosine " << report.train_cosine;
  if (report.heldout_cosine) err << ", held-out cosine " << *report.heldout_cosine;
  err << " (" << report.wall_seconds << " s)\n";

  save_checkpoint(result.params, {report.steps, cfg.seed}, o.out);
  const fs::path report_path = fs::path(o.out) / "train_report.json";
  write_text(report_path, train_report_to_json(report, cfg, arch));

  run.inputs["corpus"] = o.corpus;
  if (!o.heldout.empty()) run.inputs["heldout"] = o.heldout;
  run.seeds["init"] = init_seed;
  run.seeds["batches"] = cfg.seed;
  run.outputs["checkpoint"] = o.out;
  run.outputs["report"] = report_path.string();
  run.write_manifest(fs::path(o.out) / "run_manifest.json");
}

struct PersonalizeOptions {
  std::string params;
  std::string corpus;
  std::string profile;
  std::string target_id;
  double alpha = 0.3;
  bool no_guidance = false;
  std::string out;
};

const PromptRecord& record_by_id(const EmbeddingCorpus& corpus, const std::string& id) {
  const auto idx = corpus.find(id);
  if (!idx) throw ValidationError("no record with id '" + id + "'");
  return corpus.records[static_cast<std::size_t>(*idx)];
}

void run_personalize(const PersonalizeOptions& o, Run& run, std::ostream& err) {
  const LoadedCheckpoint ckpt = load_checkpoint(o.params);
  const EmbeddingCorpus corpus = load_corpus(o.corpus);
  const UserProfile profile = profile_from_json(read_text(o.profile));

  PersonalizationRequest req;
  req.target = record_by_id(corpus, o.target_id);
  for (const auto& id : profile.source_ids) req.references.push_back(record_by_id(corpus, id));
  req.guidance = {o.alpha, !o.no_guidance};
  req.uncond = corpus.uncond;
  const PersonalizedCondition result = forward(ckpt.params, req);

  EmbeddingCorpus single;
  single.d_sim = corpus.d_sim;
  single.d_cond = corpus.d_cond;
  single.max_tokens = std::max(corpus.max_tokens, result.condition.rows());
  single.uncond = corpus.uncond;
  single.manifest = corpus.manifest;
  single.manifest["personalized_target"] = o.target_id;
  single.manifest["personalized_references"] = std::to_string(req.references.size());
  PromptRecord rec;
  rec.id = req.target.id;
  rec.text = req.target.text;
  rec.sim_embedding = req.target.sim_embedding;
  rec.condition = result.condition;
  rec.class_embedding = result.class_embedding;
  rec.preference = req.target.preference;
  single.records.push_back(std::move(rec));
  save_corpus(single, o.out);

  run.inputs = {{"params", o.params}, {"corpus", o.corpus}, {"profile", o.profile}};
  run.outputs["corpus"] = o.out;
  run.write_manifest(fs::path(o.out) / "run_manifest.json");
  err << "personalized " << o.target_id << " with " << req.references.size() << " references\n";
}

struct EvalOptions {
  std::string params;
  std::string corpus;
  double alpha = 0.3;
  double ratio = 0.1;
  std::string method = "coreset";
  std::optional<Index> k;
  bool no_preferences = false;
  std::string history = "full";
  bool no_guidance = false;
  std::string label = "drum";
  std::string out;
};

EvalConfig eval_config(const EvalOptions& o, const Globals& g) {
  EvalConfig cfg;
  cfg.label = o.label;
  cfg.alpha = o.alpha;
  cfg.guidance = !o.no_guidance;
  cfg.profile.method = parse_sampling_method(o.method);
  cfg.profile.ratio = o.ratio;
  cfg.profile.approx_size = o.k;
  cfg.profile.use_preferences = !o.no_preferences;
  cfg.profile.seed = g.seed;
  cfg.history = parse_history_mode(o.history);
  cfg.threads = g.threads;
  return cfg;
}

void run_evaluate(const EvalOptions& o, Run& run, std::ostream& out, std::ostream& err) {
  const EmbeddingCorpus corpus = load_corpus(o.corpus);
  std::optional<LoadedCheckpoint> ckpt;
  if (!o.params.empty()) ckpt = load_checkpoint(o.params);
  const EvalConfig cfg = eval_config(o, *run.globals);
  const std::vector<EvalReport> reports{evaluate(corpus, ckpt ? &ckpt->params : nullptr, cfg)};

  const auto& r = reports.front();
  err << r.users.size() << " users: target align " << r.target_align << ", history align " << r.history_align
      << "\n";
  run.inputs["corpus"] = o.corpus;
  if (ckpt) run.inputs["params"] = o.params;
  run.seeds["profiles"] = cfg.profile.seed;
  if (o.out.empty()) {
    out << reports_to_json(reports);
    return;
  }
  const fs::path dir = o.out;
  write_text(dir / "report.json", reports_to_json(reports));
  write_text(dir / "report.csv", reports_to_csv(reports));
  run.outputs = {{"json", (dir / "report.json").string()}, {"csv", (dir / "report.csv").string()}};
  run.write_manifest(dir / "run_manifest.json");
}

struct SweepOptions {
  EvalOptions eval;
  std::string kind;
  std::string ratios = "0.05,0.1,0.2,0.3,0.5,1.0";
  std::string methods = "coreset,random,uniform";
  std::string alphas = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::string target_id;
  std::string reference_ids;
  bool svg = false;
};

std::string sampling_svg(const std::vector<EvalReport>& reports) {
  LineChart chart{"Sampling ratio vs target align", "sampling ratio", "target align", {}};
  for (const auto& r : reports) {
    const std::string name = to_string(r.config.profile.method);
    auto it = std::find_if(chart.series.begin(), chart.series.end(), [&](const Series& s) { return s.name == name; });
    if (it == chart.series.end()) {
      chart.series.push_back({name, {}});
      it = chart.series.end() - 1;
    }
    it->points.emplace_back(r.config.profile.ratio, r.target_align);
  }
  return line_chart_svg(chart);
}

std::string alpha_svg(const std::vector<AlphaSweepRow>& rows) {
  LineChart chart{"Personalization degree vs align", "alpha", "align", {}};
  Series target{"target", {}}, refs{"references", {}};
  for (const auto& row : rows) {
    target.points.emplace_back(row.alpha, row.target_align.value_or(row.condition_target_align));
    refs.points.emplace_back(row.alpha, row.reference_align.value_or(row.condition_reference_align));
  }
  chart.series = {target, refs};
  return line_chart_svg(chart);
}

void run_sweep(const SweepOptions& o, Run& run, std::ostream& out, std::ostream& err) {
  const EmbeddingCorpus corpus = load_corpus(o.eval.corpus);
  std::optional<LoadedCheckpoint> ckpt;
  if (!o.eval.params.empty()) ckpt = load_checkpoint(o.eval.params);
  const AdapterParams* params = ckpt ? &ckpt->params : nullptr;
  const EvalConfig base = eval_config(o.eval, *run.globals);
  run.inputs["corpus"] = o.eval.corpus;
  if (ckpt) run.inputs["params"] = o.eval.params;
  run.seeds["profiles"] = base.profile.seed;

  std::string json_text, csv_text, svg_text;
  if (o.kind == "sampling" || o.kind == "ablation") {
    std::vector<EvalReport> reports;
    if (o.kind == "sampling") {
      std::vector<SamplingMethod> methods;
      for (const auto& m : split_list(o.methods)) methods.push_back(parse_sampling_method(m));
      if (methods.empty()) throw ConfigError("--methods: empty list");
      const auto ratios = parse_doubles(o.ratios, "--ratios");
      reports = run_sampling_sweep(corpus, params, methods, ratios, base);
      if (o.svg) svg_text = sampling_svg(reports);
    } else {
      reports = run_ablation(corpus, params, base);
      if (o.svg) err << "no chart for ablation sweeps\n";
    }
    json_text = reports_to_json(reports);
    csv_text = reports_to_csv(reports);
  } else {
    if (!params) throw ConfigError("alpha sweep needs --params");
    if (o.target_id.empty()) throw ConfigError("alpha sweep needs --target-id");
    const PromptRecord& target = record_by_id(corpus, o.target_id);
    std::vector<PromptRecord> refs;
    if (!o.reference_ids.empty()) {
      for (const auto& id : split_list(o.reference_ids)) refs.push_back(record_by_id(corpus, id));
    } else {
      const auto slash = o.target_id.rfind('/');
      const std::string user = slash == std::string::npos ? "" : o.target_id.substr(0, slash);
      const auto history = user_history(corpus, user);
      for (const Index i : select_profile(corpus, history, base.profile)) {
        refs.push_back(corpus.records[static_cast<std::size_t>(i)]);
      }
    }
    const auto alphas = parse_doubles(o.alphas, "--alphas");
    const auto rows = run_alpha_sweep(target, refs, corpus.uncond, *params, alphas);
    json_text = alpha_sweep_to_json(rows);
    csv_text = alpha_sweep_to_csv(rows);
    if (o.svg) svg_text = alpha_svg(rows);
  }

  if (o.eval.out.empty()) {
    out << json_text;
    return;
  }
  const fs::path dir = o.eval.out;
  write_text(dir / "sweep.json", json_text);
  write_text(dir / "sweep.csv", csv_text);
  run.outputs = {{"json", (dir / "sweep.json").string()}, {"csv", (dir / "sweep.csv").string()}};
  if (!svg_text.empty()) {
    write_text(dir / "sweep.svg", svg_text);
    run.outputs["svg"] = (dir / "sweep.svg").string();
  }
  run.write_manifest(dir / "run_manifest.json");
}

void add_eval_options(CLI::App* sub, EvalOptions& o) {
  sub->add_option("--params", o.params, "Adapter checkpoint directory (omit for class-embedding metrics only)");
  sub->add_option("--corpus", o.corpus, "Corpus directory")->required();
  sub->add_option("--alpha", o.alpha, "Personalization degree")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--ratio", o.ratio, "Profile sampling ratio")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--method", o.method, "Profile sampling: coreset, random, uniform or full");
  sub->add_option("--k", o.k, "Coreset approximation subset size")->check(CLI::PositiveNumber);
  sub->add_flag("--no-preferences", o.no_preferences, "Treat every preference as 1");
  sub->add_option("--history", o.history, "History metric: full or recent2");
  sub->add_flag("--no-guidance", o.no_guidance, "Joint softmax instead of per-segment guidance");
  sub->add_option("--label", o.label, "Report label");
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Globals globals;
  GenOptions gen;
  std::string inspect_corpus;
  SampleOptions sample;
  TrainOptions train_opts;
  PersonalizeOptions pers;
  EvalOptions eval;
  SweepOptions sweep;

  CLI::App app{"Personalized text-to-image conditioning engine", "drum"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", DRUM_VERSION);
  app.add_option("--threads", globals.threads, "Worker threads (1 = bitwise reproducible)")->check(CLI::PositiveNumber);
  app.add_option("--seed", globals.seed, "Seed for every random choice")->envname("DRUM_SEED");
  app.add_option("--config", globals.config, "JSON file of flag values; explicit flags override it");

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a deterministic synthetic corpus");
  gen_cmd->add_option("--out", gen.out, "Output corpus directory")->required();
  gen_cmd->add_option("--users", gen.spec.n_users, "Number of users")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--history", gen.spec.history_len, "History records per user")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d-sim", gen.spec.d_sim, "Similarity embedding width")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d-cond", gen.spec.d_cond, "Condition token width")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--max-tokens", gen.spec.max_tokens, "Token cap per condition")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--archetypes", gen.spec.archetypes, "Latent archetypes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--noise", gen.spec.noise, "Record noise scale");
  gen_cmd->add_option("--token-noise", gen.spec.token_noise, "Per-token noise scale");
  gen_cmd->add_option("--dominant-share", gen.spec.dominant_share, "Probability of the user's main archetype")
      ->check(CLI::Range(0.0, 1.0));

  auto* inspect_cmd = app.add_subcommand("inspect", "Print corpus dimensions");
  inspect_cmd->add_option("--corpus", inspect_corpus, "Corpus directory")->required();

  auto* sample_cmd = app.add_subcommand("sample", "Select a profile from a corpus");
  sample_cmd->add_option("--corpus", sample.corpus, "Corpus directory")->required();
  sample_cmd->add_option("--ratio", sample.ratio, "Fraction of records to keep")->check(CLI::Range(0.0, 1.0));
  sample_cmd->add_option("--k", sample.k, "Coreset approximation subset size")->check(CLI::PositiveNumber);
  sample_cmd->add_flag("--no-preferences", sample.no_preferences, "Treat every preference as 1");
  sample_cmd->add_option("--method", sample.method, "coreset, random, uniform or full");
  sample_cmd->add_option("--user", sample.user, "Sample only this user's history");
  sample_cmd->add_option("--out", sample.out, "Profile JSON path (stdout when omitted)");

  auto* train_cmd = app.add_subcommand("train", "Train the adapter on reconstruction");
  train_cmd->add_option("--corpus", train_opts.corpus, "Training corpus directory")->required();
  train_cmd->add_option("--out", train_opts.out, "Checkpoint directory")->required();
  train_cmd->add_option("--heldout", train_opts.heldout, "Held-out corpus directory");
  train_cmd->add_option("--steps,--total-steps", train_opts.train.total_steps, "Optimizer steps")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train_opts.train.batch_size, "Prompts per step")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr,--lr-init", train_opts.train.lr_init, "Initial learning rate");
  train_cmd->add_option("--lr-floor", train_opts.lr_floor, "Final learning rate (default lr / 100)");
  train_cmd->add_option("--beta1", train_opts.train.beta1, "AdamW beta1");
  train_cmd->add_option("--beta2", train_opts.train.beta2, "AdamW beta2");
  train_cmd->add_option("--eps,--epsilon", train_opts.train.epsilon, "AdamW epsilon");
  train_cmd->add_option("--weight-decay", train_opts.train.weight_decay, "Decoupled weight decay");
  train_cmd->add_flag("--grad-check", train_opts.train.grad_check, "Finite-difference check at step 0");
  train_cmd->add_option("--layers,--n-layers", train_opts.arch.n_layers, "Attention layers")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--heads,--n-heads", train_opts.arch.n_heads, "Heads per layer")->check(CLI::PositiveNumber);
  train_cmd->add_option("--d-model", train_opts.d_model, "Adapter width (default d_cond)")
      ->check(CLI::PositiveNumber);

  auto* pers_cmd = app.add_subcommand("personalize", "Personalize one target condition");
  pers_cmd->add_option("--params", pers.params, "Adapter checkpoint directory")->required();
  pers_cmd->add_option("--corpus", pers.corpus, "Corpus directory")->required();
  pers_cmd->add_option("--profile", pers.profile, "Profile JSON")->required();
  pers_cmd->add_option("--target-id", pers.target_id, "Target record id")->required();
  pers_cmd->add_option("--alpha", pers.alpha, "Personalization degree")->check(CLI::Range(0.0, 1.0));
  pers_cmd->add_flag("--no-guidance", pers.no_guidance, "Joint softmax instead of per-segment guidance");
  pers_cmd->add_option("--out", pers.out, "Output corpus directory")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Score personalization per user");
  add_eval_options(eval_cmd, eval);
  eval_cmd->add_option("--out", eval.out, "Report directory (JSON on stdout when omitted)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Sampling, alpha or ablation sweep");
  add_eval_options(sweep_cmd, sweep.eval);
  sweep_cmd->add_option("--out", sweep.eval.out, "Sweep directory (JSON on stdout when omitted)");
  sweep_cmd->add_option("--kind", sweep.kind, "sampling, alpha or ablation")
      ->required()
      ->check(CLI::IsMember({"sampling", "alpha", "ablation"}));
  sweep_cmd->add_option("--ratios", sweep.ratios, "Comma-separated sampling ratios");
  sweep_cmd->add_option("--methods", sweep.methods, "Comma-separated sampling methods");
  sweep_cmd->add_option("--alphas", sweep.alphas, "Comma-separated alpha values");
  sweep_cmd->add_option("--target-id", sweep.target_id, "Alpha sweep target record");
  sweep_cmd->add_option("--reference-ids", sweep.reference_ids, "Alpha sweep references (default: sampled profile)");
  sweep_cmd->add_flag("--svg", sweep.svg, "Also write sweep.svg");

  try {
    std::vector<std::string> args(argv, argv + argc);
    if (args.empty()) args.emplace_back("drum");
    args = expand_config(args);
    std::vector<const char*> expanded;
    for (const auto& a : args) expanded.push_back(a.c_str());

    try {
      app.parse(static_cast<int>(expanded.size()), expanded.data());
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        if (dynamic_cast<const CLI::CallForVersion*>(&e)) {
          out << e.what() << "\n";
        } else {
          out << app.help();
        }
        return kExitOk;
      }
      err << "usage error: " << e.what() << "\n\n" << app.help();
      return kExitUsage;
    }

    Run run;
    run.globals = &globals;
    if (gen_cmd->parsed()) {
      run.subcommand = "gen-synthetic";
      run.app = gen_cmd;
      run_gen(gen, run, err);
    } else if (inspect_cmd->parsed()) {
      run_inspect(inspect_corpus, out);
    } else if (sample_cmd->parsed()) {
      run.subcommand = "sample";
      run.app = sample_cmd;
      run_sample(sample, run, out);
    } else if (train_cmd->parsed()) {
      run.subcommand = "train";
      run.app = train_cmd;
      run_train(train_opts, run, err);
    } else if (pers_cmd->parsed()) {
      run.subcommand = "personalize";
      run.app = pers_cmd;
      run_personalize(pers, run, err);
    } else if (eval_cmd->parsed()) {
      run.subcommand = "evaluate";
      run.app = eval_cmd;
      run_evaluate(eval, run, out, err);
    } else if (sweep_cmd->parsed()) {
      run.subcommand = "sweep";
      run.app = sweep_cmd;
      run_sweep(sweep, run, out, err);
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error [internal]: " << e.what() << "\n";
    return kExitDomainError;
  }
}

}  // namespace drum::cli
