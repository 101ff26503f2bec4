#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "dmcl/checkpoint.hpp"
#include "dmcl/dataset_io.hpp"
#include "dmcl/gradcheck_suite.hpp"
#include "dmcl/kernels.hpp"
#include "dmcl/retrieval.hpp"
#include "dmcl/synthetic_world.hpp"
#include "dmcl/trainer.hpp"

namespace dmcl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradTolerance = 1e-4;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir = "out";
  std::optional<std::size_t> k;
  int threads = 1;
};

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--seed", g.seed, "Random seed (overrides the config file)");
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
  app.add_option("--k", g.k, "Rank cutoff for Hits@k")->check(CLI::PositiveNumber);
  app.add_option("--threads", g.threads, "Thread cap for parallel kernels")->check(CLI::PositiveNumber)->capture_default_str();
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidConfig, path + ": " + e.what());
  }
}

synth::WorldConfig world_from_json(const json& j) {
  synth::WorldConfig w;
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "world config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dim") w.dim = v.get<std::size_t>();
      else if (key == "num_intents") w.num_intents = v.get<std::size_t>();
      else if (key == "intent_rank") w.intent_rank = v.get<std::size_t>();
      else if (key == "hallucination_ratio") w.hallucination_ratio = v.get<double>();
      else if (key == "text_noise_sigma") w.text_noise_sigma = v.get<double>();
      else if (key == "target_jitter") w.target_jitter = v.get<double>();
      else if (key == "intent_scale") w.intent_scale = v.get<double>();
      else if (key == "matched_threshold") w.matched_threshold = v.get<double>();
      else if (key == "seed") w.seed = v.get<std::uint64_t>();
      else if (key == "corpus_size") w.corpus_size = v.get<std::size_t>();
      else if (key == "rounds") w.rounds = v.get<std::size_t>();
      else if (key == "test_every") w.test_every = v.get<std::size_t>();
      else throw Error(Errc::InvalidConfig, "unknown world key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("world config type error: ") + e.what());
  }
  return w;
}

nlohmann::ordered_json world_to_json(const synth::WorldConfig& w) {
  nlohmann::ordered_json j;
  j["dim"] = w.dim;
  j["num_intents"] = w.num_intents;
  j["intent_rank"] = w.intent_rank;
  j["hallucination_ratio"] = w.hallucination_ratio;
  j["text_noise_sigma"] = w.text_noise_sigma;
  j["target_jitter"] = w.target_jitter;
  j["intent_scale"] = w.intent_scale;
  j["matched_threshold"] = w.matched_threshold;
  j["seed"] = w.seed;
  j["corpus_size"] = w.corpus_size;
  j["rounds"] = w.rounds;
  j["test_every"] = w.test_every;
  return j;
}

struct Resolved {
  train::TrainConfig train;
  synth::WorldConfig world;
};

// Config file first, then flags.
Resolved resolve(const Globals& g) {
  const json j = load_json(g.config);
  Resolved r;
  r.train = train::config_from_json(j, {"world"});
  if (j.contains("world")) r.world = world_from_json(j["world"]);
  if (g.seed) {
    r.train.seed = *g.seed;
    r.world.seed = *g.seed;
  }
  if (g.k) r.train.k = *g.k;
  r.train.validate();
  return r;
}

fs::path out_path(const Globals& g, const char* name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

train::Model load_model(const std::string& checkpoint) {
  if (!fs::exists(checkpoint)) throw Error(Errc::IoFailure, "missing checkpoint " + checkpoint);
  return train::model_from_tensors(read_checkpoint(checkpoint));
}

int cmd_gradcheck(const Globals& g, std::size_t instances, std::ostream& out) {
  const auto entries = run_gradcheck_suite(g.seed.value_or(0), instances);
  std::string csv = "check,instances,max_rel_error,pass\n";
  bool ok = true;
  for (const auto& e : entries) {
    const bool pass = e.max_error < kGradTolerance;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %3zu  %.3e  %s\n", e.name.c_str(), e.instances, e.max_error,
                  pass ? "ok" : "FAIL");
    out << line;
    csv += e.name + "," + std::to_string(e.instances) + "," + fmt(e.max_error) + "," + (pass ? "1" : "0") + "\n";
  }
  write_file_atomic(out_path(g, "gradcheck.csv"), csv);
  return ok ? kOk : kVerificationFailed;
}

int cmd_synth(const Globals& g, const synth::WorldConfig& overrides_src, const std::vector<std::string>& set_keys,
              std::ostream& out) {
  Resolved r = resolve(g);
  synth::WorldConfig w = r.world;
  // Only the flags the user actually passed replace config values.
  for (const auto& key : set_keys) {
    if (key == "dim") w.dim = overrides_src.dim;
    else if (key == "intents") w.num_intents = overrides_src.num_intents;
    else if (key == "intent-rank") w.intent_rank = overrides_src.intent_rank;
    else if (key == "rho") w.hallucination_ratio = overrides_src.hallucination_ratio;
    else if (key == "corpus") w.corpus_size = overrides_src.corpus_size;
    else if (key == "rounds") w.rounds = overrides_src.rounds;
  }
  const synth::World world = synth::generate_world(w);
  const data::Dataset ds = synth::to_dataset(world);
  fs::create_directories(g.out_dir);
  data::save_dataset(g.out_dir, ds);
  write_file_atomic(fs::path(g.out_dir) / "world.json", world_to_json(w).dump(2) + "\n");
  out << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test dialogues, " << ds.corpus.size()
      << " corpus items to " << g.out_dir << "\n";
  return kOk;
}

int cmd_theory(const Globals& g, const std::vector<double>& rhos, std::size_t dim, std::size_t samples,
               const std::string& encoder, std::ostream& out) {
  if (dim < 1 || samples < 2) throw Error(Errc::InvalidConfig, "theory needs dim >= 1 and samples >= 2");
  const Rng root(g.seed.value_or(0));
  Rng setup = root.split(0);
  const Embedding s = l2_normalize(gaussian_vector(setup, dim));
  const encoders::LinearEncoder w =
      encoder == "identity" ? encoders::LinearEncoder{Matrix::identity(dim)} : encoders::make_linear(dim, dim, setup);
  std::string csv = "rho,expected,empirical,stderr,cross_mean,cross_stderr,max_identity_residual\n";
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    Rng rng = root.split(1 + i);
    const auto est = synth::empirical_cosine(w, s, rhos[i], samples, rng);
    const double expected = synth::expected_cosine(rhos[i]);
    csv += fmt(rhos[i]) + "," + fmt(expected) + "," + fmt(est.mean) + "," + fmt(est.stderr_mean) + "," +
           fmt(est.cross_mean) + "," + fmt(est.cross_stderr) + "," + fmt(est.max_identity_residual) + "\n";
    char line[160];
    std::snprintf(line, sizeof line, "rho=%-8g expected=%.6f empirical=%.6f (se %.1e)\n", rhos[i], expected, est.mean,
                  est.stderr_mean);
    out << line;
  }
  write_file_atomic(out_path(g, "theory.csv"), csv);
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::optional<std::string>& mode,
              std::optional<std::size_t> steps, bool fixed_alphas, std::ostream& out) {
  Resolved r = resolve(g);
  if (mode) r.train.mode = train::parse_objective(*mode);
  if (steps) r.train.steps = *steps;
  if (fixed_alphas) r.train.learn_alphas = false;
  r.train.validate();
  const data::Dataset ds = data::load_dataset(data_dir);
  const auto result = train::train(r.train, ds);
  write_checkpoint(out_path(g, "model.ckpt"), train::model_tensors(result.model));
  train::write_trace(out_path(g, "trace.csv"), result.trace);
  write_file_atomic(out_path(g, "config.json"), train::config_to_json(r.train).dump(2) + "\n");
  out << "trained " << train::objective_name(r.train.mode) << " for " << r.train.steps << " steps; config "
      << train::config_hash(r.train) << "\n";
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& data_dir, const std::string& checkpoint, bool untrained,
             std::ostream& out) {
  const Resolved r = resolve(g);
  const data::Dataset ds = data::load_dataset(data_dir);
  const train::Model model = untrained ? train::init_model(r.train, ds.text_features.dim(), ds.corpus.dim())
                                       : load_model(checkpoint);
  train::EvalSnapshot snap = train::evaluate(model, ds, r.train.k);
  snap.report.seed = r.train.seed;
  snap.report.config_hash = train::config_hash(r.train);
  retrieval::emit_report(snap.report, out_path(g, "report.csv"));

  // Positive pairs (final-round query, target) for the density diagnostic.
  const auto qe = model.query_encoders();
  const auto encoded = retrieval::encode_corpus(model.target, ds.corpus);
  const auto& dialogues = ds.test.empty() ? ds.train : ds.test;
  std::map<std::pair<std::string, std::size_t>, std::vector<Embedding>> proxies;
  for (const auto& t : ds.triples) proxies[{t.instance_id, t.round}].push_back(t.proxy_feature);
  std::string pairs;
  for (const auto& d : dialogues) {
    const std::size_t n = d.rounds.size();
    const auto text_row = ds.text_features.find(data::text_key(d.instance_id, n));
    const auto target_row = encoded.find(d.target_id);
    if (!text_row || !target_row) continue;
    const Embedding q = retrieval::build_query(qe, ds.text_features.row(*text_row), proxies[{d.instance_id, n}]);
    const auto t = encoded.row(*target_row);
    pairs += json{{"a", q}, {"b", std::vector<double>(t.begin(), t.end())}}.dump() + "\n";
  }
  write_file_atomic(out_path(g, "pairs.jsonl"), pairs);

  out << "Hits@" << r.train.k << " by round:";
  for (double h : snap.report.hits) out << " " << h;
  out << "\n";
  if (snap.noise_ratio) out << "noise suppression ratio: " << *snap.noise_ratio << "\n";
  return kOk;
}

int cmd_density(const Globals& g, const std::string& pairs_path, std::size_t bins, std::ostream& out) {
  std::ifstream in(pairs_path);
  if (!in) throw Error(Errc::IoFailure, "cannot open pair file " + pairs_path);
  std::vector<std::pair<Embedding, Embedding>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      pairs.emplace_back(j.at("a").get<Embedding>(), j.at("b").get<Embedding>());
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaViolation, pairs_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const auto h = retrieval::similarity_density(pairs, bins);
  retrieval::emit_histogram(h, out_path(g, "density.csv"));
  out << "pairs " << pairs.size() << " mean " << h.mean << " variance " << h.variance << "\n";
  return kOk;
}

int cmd_compare(const Globals& g, const std::string& data_dir, const std::vector<std::string>& mode_names,
                std::ostream& out) {
  const Resolved r = resolve(g);
  std::vector<train::Objective> modes;
  for (const auto& m : mode_names) modes.push_back(train::parse_objective(m));
  const data::Dataset ds = data::load_dataset(data_dir);
  const auto rows = train::compare_modes(r.train, modes, ds);
  train::write_comparison(out_path(g, "compare.csv"), rows, r.train.k);
  for (const auto& row : rows) {
    out << train::objective_name(row.mode) << " Hits@" << r.train.k << "=" << row.hits_final;
    if (row.noise_ratio_final) out << " noise_ratio " << *row.noise_ratio_init << " -> " << *row.noise_ratio_final;
    out << "\n";
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view contrastive retrieval laboratory", "dmcl"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Globals g;
  add_globals(app, g);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  std::size_t instances = 20;
  gradcheck->add_option("--instances", instances, "Random instances per check")->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic world and write its dataset");
  synth::WorldConfig world_flags;
  synth_cmd->add_option("--dim", world_flags.dim, "Feature dimension");
  synth_cmd->add_option("--intents", world_flags.num_intents, "Number of intents (dialogues)");
  synth_cmd->add_option("--intent-rank", world_flags.intent_rank, "Rank of the intent subspace");
  synth_cmd->add_option("--rho", world_flags.hallucination_ratio, "Hallucination ratio E|h|^2/|s|^2");
  synth_cmd->add_option("--corpus", world_flags.corpus_size, "Corpus size");
  synth_cmd->add_option("--rounds", world_flags.rounds, "Dialogue rounds");

  auto* theory = app.add_subcommand("theory", "Empirical vs expected cosine under additive noise");
  std::vector<double> rhos{0.0, 0.25, 1.0, 4.0};
  std::size_t theory_dim = 512, samples = 10000;
  std::string theory_encoder = "identity";
  theory->add_option("--rho", rhos, "Noise ratios (comma separated)")->delimiter(',')->capture_default_str();
  theory->add_option("--dim", theory_dim, "Dimension")->capture_default_str();
  theory->add_option("--samples", samples, "Monte Carlo samples per ratio")->capture_default_str();
  theory->add_option("--encoder", theory_encoder, "Linear map applied to both vectors")
      ->check(CLI::IsMember({"identity", "random"}))
      ->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train encoders on a stored dataset");
  std::string data_dir;
  std::optional<std::string> mode;
  std::optional<std::size_t> steps;
  bool fixed_alphas = false;
  train_cmd->add_option("--data", data_dir, "Dataset directory written by synth")->required();
  train_cmd->add_option("--mode", mode, "Objective mode")
      ->check(CLI::IsMember({"dmcl_total", "align_only", "diffusion_only_nce", "text_only_nce", "cos_align_theory"}));
  train_cmd->add_option("--steps", steps, "Optimizer steps")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--fixed-alphas", fixed_alphas, "Keep the view weights at 1");

  auto* eval = app.add_subcommand("eval", "Evaluate stored encoders with cumulative Hits@k");
  std::string checkpoint;
  bool untrained = false;
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  auto* ckpt_opt = eval->add_option("--checkpoint", checkpoint, "Model checkpoint");
  auto* untrained_opt = eval->add_flag("--untrained", untrained, "Evaluate freshly initialized encoders");
  ckpt_opt->excludes(untrained_opt);
  untrained_opt->excludes(ckpt_opt);

  auto* density = app.add_subcommand("density", "Histogram of cosine similarities over a pair file");
  std::string pairs_path;
  std::size_t bins = 20;
  density->add_option("--pairs", pairs_path, "JSONL file of {\"a\": [...], \"b\": [...]}")->required();
  density->add_option("--bins", bins, "Histogram bins")->check(CLI::Range(std::size_t{2}, std::size_t{100000}))->capture_default_str();

  auto* compare = app.add_subcommand("compare", "Train and evaluate several objective modes");
  std::vector<std::string> modes{"dmcl_total", "diffusion_only_nce", "text_only_nce"};
  compare->add_option("--data", data_dir, "Dataset directory")->required();
  compare->add_option("--modes", modes, "Objective modes (comma separated)")->delimiter(',')->capture_default_str();

  for (auto* sub : {gradcheck, synth_cmd, theory, train_cmd, eval, density, compare}) add_globals(*sub, g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    kernels::set_threads(g.threads);
    if (eval->parsed() && checkpoint.empty() && !untrained) checkpoint = (fs::path(g.out_dir) / "model.ckpt").string();
    if (gradcheck->parsed()) return cmd_gradcheck(g, instances, out);
    if (synth_cmd->parsed()) {
      std::vector<std::string> set_keys;
      for (const char* key : {"dim", "intents", "intent-rank", "rho", "corpus", "rounds"})
        if (synth_cmd->count(std::string("--") + key) > 0) set_keys.emplace_back(key);
      return cmd_synth(g, world_flags, set_keys, out);
    }
    if (theory->parsed()) return cmd_theory(g, rhos, theory_dim, samples, theory_encoder, out);
    if (train_cmd->parsed()) return cmd_train(g, data_dir, mode, steps, fixed_alphas, out);
    if (eval->parsed()) return cmd_eval(g, data_dir, checkpoint, untrained, out);
    if (density->parsed()) return cmd_density(g, pairs_path, bins, out);
    if (compare->parsed()) return cmd_compare(g, data_dir, modes, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::InvalidConfig ? kUsage : kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace dmcl::cli
