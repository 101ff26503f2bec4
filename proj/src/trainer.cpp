#include "dmcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "dmcl/synthetic_world.hpp"

namespace dmcl::train {

namespace {

enum Stream : std::uint64_t { kTextInit = 11, kDiffusionInit = 12, kTargetInit = 13, kSampling = 20 };

constexpr std::pair<Objective, std::string_view> kObjectives[] = {
    {Objective::DmclTotal, "dmcl_total"},
    {Objective::AlignOnly, "align_only"},
    {Objective::DiffusionOnlyNce, "diffusion_only_nce"},
    {Objective::TextOnlyNce, "text_only_nce"},
    {Objective::CosAlignTheory, "cos_align_theory"},
};

constexpr std::pair<EncoderKind, std::string_view> kEncoderKinds[] = {
    {EncoderKind::Identity, "identity"},
    {EncoderKind::Linear, "linear"},
    {EncoderKind::Mlp, "mlp"},
};

std::string_view kind_name(EncoderKind k) {
  for (const auto& [kind, name] : kEncoderKinds)
    if (kind == k) return name;
  return "?";
}

EncoderKind parse_kind(const std::string& name) {
  for (const auto& [kind, n] : kEncoderKinds)
    if (n == name) return kind;
  throw Error(Errc::InvalidConfig, "unknown encoder kind '" + name + "'");
}

encoders::Encoder make_encoder(EncoderKind kind, std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng rng) {
  switch (kind) {
    case EncoderKind::Identity:
      if (d_in != d_out) throw Error(Errc::InvalidConfig, "identity encoder needs equal input and output dims");
      return encoders::IdentityEncoder{d_in};
    case EncoderKind::Linear: return encoders::make_linear(d_in, d_out, rng);
    case EncoderKind::Mlp: return encoders::make_mlp(d_in, hidden, d_out, rng);
  }
  throw Error(Errc::InvalidConfig, "unknown encoder kind");
}

void add_into(std::vector<std::vector<double>>& acc, const std::vector<std::vector<double>>& g) {
  for (std::size_t t = 0; t < g.size(); ++t)
    for (std::size_t k = 0; k < g[t].size(); ++k) acc[t][k] += g[t][k];
}

std::vector<std::vector<double>> zero_grads(const encoders::Encoder& enc) {
  std::vector<std::vector<double>> out;
  auto& mutable_enc = const_cast<encoders::Encoder&>(enc);  // parameters() only exposes shapes here
  for (const auto& p : encoders::parameters(mutable_enc, "")) out.emplace_back(p.values.size(), 0.0);
  return out;
}

// Row-wise encode + normalize, keeping the raw outputs for the backward pass.
struct Encoded {
  std::vector<Embedding> raw;
  Matrix unit;
};

Encoded encode_rows(const encoders::Encoder& enc, const std::vector<const Embedding*>& xs) {
  Encoded e;
  e.unit = Matrix(xs.size(), encoders::output_dim(enc));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    e.raw.push_back(encoders::encode(enc, *xs[i]));
    const Embedding z = l2_normalize(e.raw.back());
    std::copy(z.begin(), z.end(), e.unit.row(i).begin());
  }
  return e;
}

void backprop_rows(const encoders::Encoder& enc, const std::vector<const Embedding*>& xs, const Encoded& e,
                   const Matrix& grad_unit, std::vector<std::vector<double>>& acc) {
  if (std::holds_alternative<encoders::IdentityEncoder>(enc)) return;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Embedding g_raw = l2_normalize_backward(e.raw[i], grad_unit.row(i));
    add_into(acc, encoders::encode_backward(enc, *xs[i], g_raw).params);
  }
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string_view objective_name(Objective o) noexcept {
  for (const auto& [obj, name] : kObjectives)
    if (obj == o) return name;
  return "?";
}

Objective parse_objective(std::string_view name) {
  for (const auto& [obj, n] : kObjectives)
    if (n == name) return obj;
  throw Error(Errc::InvalidConfig, "unknown objective mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  const std::size_t min_batch = mode == Objective::CosAlignTheory ? 1 : 2;
  if (batch_size < min_batch) fail("batch_size must be >= " + std::to_string(min_batch) + " for this mode");
  if (steps < 1) fail("steps must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be finite and >= 0");
  if (!(clip_norm >= 0.0)) fail("clip_norm must be >= 0");
  if (k < 1) fail("k must be >= 1");
  if (encoder == EncoderKind::Mlp && hidden < 1) fail("hidden must be >= 1");
  hyperparams.validate();
  encoders::FusionParams{w_text}.validate();
  if (learn_fusion && (w_text <= 0.0 || w_text >= 1.0)) fail("learn_fusion needs w_text strictly inside (0, 1)");
}

TrainConfig config_from_json(const nlohmann::json& j, const std::vector<std::string>& ignored) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (std::find(ignored.begin(), ignored.end(), key) != ignored.end()) continue;
      if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "steps") c.steps = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "mode") c.mode = parse_objective(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "eval_every") c.eval_every = value.get<std::size_t>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "learn_alphas") c.learn_alphas = value.get<bool>();
      else if (key == "w_text") c.w_text = value.get<double>();
      else if (key == "learn_fusion") c.learn_fusion = value.get<bool>();
      else if (key == "encoder") c.encoder = parse_kind(value.get<std::string>());
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else if (key == "target_encoder") c.target_encoder = parse_kind(value.get<std::string>());
      else if (key == "k") c.k = value.get<std::size_t>();
      else if (key == "hyperparams") {
        auto& h = c.hyperparams;
        for (const auto& [hk, hv] : value.items()) {
          if (hk == "tau_T") h.tau_T = hv.get<double>();
          else if (hk == "tau_D") h.tau_D = hv.get<double>();
          else if (hk == "tau_F") h.tau_F = hv.get<double>();
          else if (hk == "tau_TD") h.tau_TD = hv.get<double>();
          else if (hk == "eps_smooth") h.eps_smooth = hv.get<double>();
          else if (hk == "K") h.K = hv.get<int>();
          else if (hk == "margin_m") h.margin_m = hv.get<double>();
          else if (hk == "tau_h") h.tau_h = hv.get<double>();
          else if (hk == "lambda_h") h.lambda_h = hv.get<double>();
          else if (hk == "beta_cons") h.beta_cons = hv.get<double>();
          else if (hk == "beta_dist") h.beta_dist = hv.get<double>();
          else throw Error(Errc::InvalidConfig, "unknown hyperparams key '" + hk + "'");
        }
      } else {
        throw Error(Errc::InvalidConfig, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["learning_rate"] = c.learning_rate;
  const auto& h = c.hyperparams;
  j["hyperparams"] = {{"tau_T", h.tau_T},       {"tau_D", h.tau_D},         {"tau_F", h.tau_F},
                      {"tau_TD", h.tau_TD},     {"eps_smooth", h.eps_smooth}, {"K", h.K},
                      {"margin_m", h.margin_m}, {"tau_h", h.tau_h},         {"lambda_h", h.lambda_h},
                      {"beta_cons", h.beta_cons}, {"beta_dist", h.beta_dist}};
  j["mode"] = objective_name(c.mode);
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["clip_norm"] = c.clip_norm;
  j["learn_alphas"] = c.learn_alphas;
  j["w_text"] = c.w_text;
  j["learn_fusion"] = c.learn_fusion;
  j["encoder"] = kind_name(c.encoder);
  j["hidden"] = c.hidden;
  j["target_encoder"] = kind_name(c.target_encoder);
  j["k"] = c.k;
  return j;
}

std::string config_hash(const TrainConfig& cfg) { return retrieval::fnv1a_hex(config_to_json(cfg).dump()); }

Model init_model(const TrainConfig& cfg, std::size_t feature_dim, std::size_t target_dim) {
  const Rng root(cfg.seed);
  Model m;
  m.text = make_encoder(cfg.encoder, feature_dim, cfg.hidden, target_dim, root.split(kTextInit));
  m.diffusion = make_encoder(cfg.encoder, feature_dim, cfg.hidden, target_dim, root.split(kDiffusionInit));
  m.target = make_encoder(cfg.target_encoder, target_dim, cfg.hidden, target_dim, root.split(kTargetInit));
  m.weights = losses::ViewWeights::unit();
  m.fusion.w_text = cfg.w_text;
  return m;
}

std::vector<NamedTensor> model_tensors(const Model& m) {
  std::vector<NamedTensor> out;
  auto add = [&out](const encoders::Encoder& enc, const char* prefix) {
    for (const auto& p : encoders::parameters(const_cast<encoders::Encoder&>(enc), prefix)) {
      out.push_back({p.name, p.rows, p.cols, std::vector<double>(p.values.begin(), p.values.end())});
    }
  };
  add(m.text, "text");
  add(m.diffusion, "diffusion");
  add(m.target, "target");
  out.push_back({"alpha.raw", 1, 3, {m.weights.raw.begin(), m.weights.raw.end()}});
  out.push_back({"fusion.w_text", 1, 1, {m.fusion.w_text}});
  return out;
}

Model model_from_tensors(const std::vector<NamedTensor>& tensors) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (t.values.size() != t.rows * t.cols) throw Error(Errc::MalformedHeader, "tensor " + t.name + " size");
    by_name[t.name] = &t;
  }
  auto get = [&](const std::string& name) -> const NamedTensor* {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : it->second;
  };
  auto matrix = [](const NamedTensor& t) {
    Matrix m(t.rows, t.cols);
    std::copy(t.values.begin(), t.values.end(), m.data().begin());
    return m;
  };
  auto load = [&](const std::string& prefix) -> std::optional<encoders::Encoder> {
    if (const auto* w = get(prefix + ".W")) return encoders::LinearEncoder{matrix(*w)};
    const auto *w1 = get(prefix + ".W1"), *b1 = get(prefix + ".b1"), *w2 = get(prefix + ".W2"), *b2 = get(prefix + ".b2");
    if (w1 && b1 && w2 && b2) return encoders::MlpEncoder{matrix(*w1), b1->values, matrix(*w2), b2->values};
    return std::nullopt;
  };
  Model m;
  auto text = load("text");
  auto diffusion = load("diffusion");
  if (!text || !diffusion) throw Error(Errc::MalformedHeader, "checkpoint lacks text or diffusion encoder");
  m.text = *text;
  m.diffusion = *diffusion;
  m.target = load("target").value_or(encoders::IdentityEncoder{encoders::output_dim(m.text)});
  const auto* alpha = get("alpha.raw");
  const auto* w = get("fusion.w_text");
  if (!alpha || alpha->values.size() != 3 || !w || w->values.size() != 1) {
    throw Error(Errc::MalformedHeader, "checkpoint lacks alpha.raw or fusion.w_text");
  }
  std::copy(alpha->values.begin(), alpha->values.end(), m.weights.raw.begin());
  m.fusion.w_text = w->values[0];
  return m;
}

TrainingSet training_set(const data::Dataset& ds) {
  std::unordered_set<std::string> train_ids;
  for (const auto& d : ds.train) train_ids.insert(d.instance_id);
  TrainingSet set;
  for (const auto& t : ds.triples) {
    if (!train_ids.count(t.instance_id)) continue;
    const auto text_row = ds.text_features.find(data::text_key(t.instance_id, t.round));
    if (!text_row) throw Error(Errc::SchemaViolation, "no text feature for " + data::text_key(t.instance_id, t.round));
    const auto target_row = ds.corpus.find(t.target_id);
    if (!target_row) throw Error(Errc::MissingTarget, "target " + t.target_id + " not in corpus");
    const auto text = ds.text_features.row(*text_row);
    const auto target = ds.corpus.row(*target_row);
    set.text.emplace_back(text.begin(), text.end());
    set.proxy.push_back(t.proxy_feature);
    set.target.emplace_back(target.begin(), target.end());
    set.target_id.push_back(t.target_id);
  }
  return set;
}

Batch sample_batch(const TrainingSet& set, Rng& rng, std::size_t n) {
  if (n == 0 || set.size() < n) {
    throw Error(Errc::InsufficientData,
                "need " + std::to_string(n) + " training records, have " + std::to_string(set.size()));
  }
  std::vector<std::size_t> pool(set.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  Batch b;
  b.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::string> ids;
  for (std::size_t i : b.indices) ids.push_back(set.target_id[i]);
  b.positives = losses::PositiveTable::from_target_ids(ids);
  return b;
}

Trainable trainable(Model& m, const TrainConfig& cfg, double& fusion_raw) {
  Trainable t;
  for (auto* enc : {&m.text, &m.diffusion, &m.target}) {
    const char* prefix = enc == &m.text ? "text" : enc == &m.diffusion ? "diffusion" : "target";
    for (auto& p : encoders::parameters(*enc, prefix)) {
      t.params.push_back(p.values);
      t.names.push_back(p.name);
    }
  }
  if (cfg.learn_alphas) {
    t.params.emplace_back(m.weights.raw.data(), m.weights.raw.size());
    t.names.emplace_back("alpha.raw");
  }
  if (cfg.learn_fusion) {
    t.params.emplace_back(&fusion_raw, 1);
    t.names.emplace_back("fusion.raw");
  }
  return t;
}

StepResult compute_step(const Model& m, const TrainConfig& cfg, const TrainingSet& set, const Batch& batch) {
  const std::size_t n = batch.indices.size();
  std::vector<const Embedding*> xt, xg, xs;
  for (std::size_t i : batch.indices) {
    xt.push_back(&set.text[i]);
    xg.push_back(&set.proxy[i]);
    xs.push_back(&set.target[i]);
  }

  auto g_text = zero_grads(m.text);
  auto g_diff = zero_grads(m.diffusion);
  auto g_target = zero_grads(m.target);
  std::array<double, 3> g_alpha{};
  double g_w = 0.0;

  StepResult out;
  if (cfg.mode == Objective::CosAlignTheory) {
    // -mean cos(f(x_gen), f(x_text)) with the diffusion encoder on both inputs.
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Embedding a = encoders::encode(m.diffusion, *xg[i]);
      const Embedding b = encoders::encode(m.diffusion, *xt[i]);
      const auto l = losses::cosine_align_loss(a, b);
      out.value += l.value * inv_n;
      std::vector<double> ga(l.grad_u.data().begin(), l.grad_u.data().end());
      std::vector<double> gb(l.grad_v.data().begin(), l.grad_v.data().end());
      for (double& x : ga) x *= inv_n;
      for (double& x : gb) x *= inv_n;
      add_into(g_diff, encoders::encode_backward(m.diffusion, *xg[i], ga).params);
      add_into(g_diff, encoders::encode_backward(m.diffusion, *xt[i], gb).params);
    }
    out.terms.emplace_back("cos_align", out.value);
  } else {
    const Encoded et = encode_rows(m.text, xt);
    const Encoded ed = encode_rows(m.diffusion, xg);
    const Encoded es = encode_rows(m.target, xs);
    losses::ViewBatch vb;
    vb.text = et.unit;
    vb.diffusion = ed.unit;
    vb.target = es.unit;
    vb.fused = Matrix(n, es.unit.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const Embedding f = encoders::fuse(vb.text.row(i), {Embedding(vb.diffusion.row(i).begin(), vb.diffusion.row(i).end())},
                                         m.fusion);
      std::copy(f.begin(), f.end(), vb.fused.row(i).begin());
    }
    vb.positives = batch.positives;

    losses::ViewGrads g = losses::ViewGrads::zeros_like(vb);
    switch (cfg.mode) {
      case Objective::DmclTotal:
      case Objective::AlignOnly: {
        losses::BatchLoss bl = cfg.mode == Objective::DmclTotal ? losses::total_loss(vb, cfg.hyperparams, m.weights)
                                                                : losses::alignment_loss(vb, cfg.hyperparams, m.weights);
        out.value = bl.value;
        out.terms = std::move(bl.terms);
        g = std::move(bl.grads);
        g_alpha = bl.grad_alpha_raw;
        break;
      }
      case Objective::DiffusionOnlyNce:
      case Objective::TextOnlyNce: {
        const bool diff = cfg.mode == Objective::DiffusionOnlyNce;
        const auto l = losses::symmetric_info_nce(diff ? vb.diffusion : vb.text, vb.target, vb.positives,
                                                  diff ? cfg.hyperparams.tau_D : cfg.hyperparams.tau_T,
                                                  cfg.hyperparams.eps_smooth);
        out.value = l.value;
        out.terms.emplace_back(diff ? "nce_D" : "nce_T", l.value);
        (diff ? g.diffusion : g.text) = l.grad_u;
        g.target = l.grad_v;
        break;
      }
      case Objective::CosAlignTheory: break;
    }

    if (!std::isfinite(out.value)) return out;

    // Fused view back onto its inputs.
    for (std::size_t i = 0; i < n; ++i) {
      const auto fb = encoders::fuse_backward(vb.text.row(i), vb.diffusion.row(i), m.fusion, g.fused.row(i));
      for (std::size_t k = 0; k < fb.text.size(); ++k) {
        g.text(i, k) += fb.text[k];
        g.diffusion(i, k) += fb.proxy_mean[k];
      }
      g_w += fb.w_text;
    }
    backprop_rows(m.text, xt, et, g.text, g_text);
    backprop_rows(m.diffusion, xg, ed, g.diffusion, g_diff);
    backprop_rows(m.target, xs, es, g.target, g_target);
  }
  out.terms.emplace_back("loss", out.value);

  for (auto* part : {&g_text, &g_diff, &g_target})
    for (auto& t : *part) out.grads.push_back(std::move(t));
  if (cfg.learn_alphas) out.grads.emplace_back(g_alpha.begin(), g_alpha.end());
  if (cfg.learn_fusion) {
    // w = sigmoid(raw)
    const double w = m.fusion.w_text;
    out.grads.push_back({g_w * w * (1.0 - w)});
  }
  return out;
}

void write_trace(const std::filesystem::path& path, const TrainTrace& trace) {
  std::string csv = "step,term,value\n";
  for (const auto& r : trace.rows) csv += std::to_string(r.step) + "," + r.term + "," + fmt17(r.value) + "\n";
  write_file_atomic(path, csv);
}

EvalSnapshot evaluate(const Model& m, const data::Dataset& ds, std::size_t k) {
  const auto& dialogues = ds.test.empty() ? ds.train : ds.test;
  EvalSnapshot snap;
  snap.report = retrieval::evaluate_run(dialogues, ds.triples, ds.corpus, ds.text_features, m.query_encoders(), k);
  if (ds.intents) {
    const auto probes = synth::probes_from(ds, dialogues);
    snap.noise_ratio = synth::noise_suppression_ratio(m.diffusion, probes);
  }
  return snap;
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& ds, Model model) {
  cfg.validate();
  const TrainingSet set = training_set(ds);
  Rng sampler = Rng(cfg.seed).split(kSampling);
  encoders::OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;
  double fusion_raw = 0.0;
  if (cfg.learn_fusion) fusion_raw = std::log(model.fusion.w_text / (1.0 - model.fusion.w_text));

  TrainResult result;
  auto record_eval = [&](std::size_t step) {
    const EvalSnapshot snap = evaluate(model, ds, cfg.k);
    auto& rows = result.trace.rows;
    rows.push_back({step, "eval_hits_at_k", snap.report.hits.back()});
    if (snap.noise_ratio) rows.push_back({step, "eval_noise_ratio", *snap.noise_ratio});
    const auto a = model.weights.alphas();
    rows.push_back({step, "alpha_T", a[0]});
    rows.push_back({step, "alpha_D", a[1]});
    rows.push_back({step, "alpha_F", a[2]});
  };

  if (cfg.eval_every > 0) record_eval(0);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const Batch batch = sample_batch(set, sampler, cfg.batch_size);
    StepResult sr;
    try {
      sr = compute_step(model, cfg, set, batch);
    } catch (const Error& e) {
      if (e.code() != Errc::NonFiniteEvaluation) throw;
      throw Error(Errc::NonFiniteLoss, "non-finite loss at step " + std::to_string(step) + " (" + e.what() + ")");
    }
    if (!std::isfinite(sr.value)) {
      throw Error(Errc::NonFiniteLoss, "non-finite loss at step " + std::to_string(step));
    }
    for (const auto& [term, value] : sr.terms) result.trace.rows.push_back({step, term, value});

    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : sr.grads)
        for (double x : g) sq += x * x;
      const double gnorm = std::sqrt(sq);
      if (gnorm > cfg.clip_norm) {
        const double scale = cfg.clip_norm / gnorm;
        for (auto& g : sr.grads)
          for (double& x : g) x *= scale;
      }
    }
    const Trainable t = trainable(model, cfg, fusion_raw);
    encoders::opt_step(opt, t.params, sr.grads);
    if (cfg.learn_fusion) model.fusion.w_text = sigmoid(fusion_raw);

    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) record_eval(step);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& ds) {
  cfg.validate();
  if (ds.corpus.size() == 0 || ds.text_features.size() == 0) throw Error(Errc::InsufficientData, "empty dataset");
  return train(cfg, ds, init_model(cfg, ds.text_features.dim(), ds.corpus.dim()));
}

std::vector<ModeResult> compare_modes(const TrainConfig& base, const std::vector<Objective>& modes,
                                      const data::Dataset& ds) {
  if (modes.empty()) throw Error(Errc::EmptyModes, "no modes to compare");
  std::vector<ModeResult> out;
  for (Objective mode : modes) {
    TrainConfig cfg = base;
    cfg.mode = mode;
    cfg.eval_every = 0;
    const Model init = init_model(cfg, ds.text_features.dim(), ds.corpus.dim());
    ModeResult r;
    r.mode = mode;
    if (ds.intents) r.noise_ratio_init = evaluate(init, ds, cfg.k).noise_ratio;
    const TrainResult trained = train(cfg, ds, init);
    const EvalSnapshot snap = evaluate(trained.model, ds, cfg.k);
    r.hits = snap.report.hits;
    r.hits_final = r.hits.back();
    r.noise_ratio_final = snap.noise_ratio;
    out.push_back(std::move(r));
  }
  return out;
}

void write_comparison(const std::filesystem::path& path, const std::vector<ModeResult>& rows, std::size_t k) {
  std::string csv = "mode,hits_at_" + std::to_string(k) + ",noise_ratio_init,noise_ratio_final\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); };
  for (const auto& r : rows) {
    csv += std::string(objective_name(r.mode)) + "," + fmt17(r.hits_final) + "," + opt(r.noise_ratio_init) + "," +
           opt(r.noise_ratio_final) + "\n";
  }
  write_file_atomic(path, csv);
}

}  // namespace dmcl::train
