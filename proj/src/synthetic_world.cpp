#include "dmcl/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <memory>
#include <tuple>
#include <unordered_map>

#include "dmcl/kernels.hpp"

namespace dmcl::synth {

namespace {

enum Stream : std::uint64_t { kBasis = 1, kIntents = 2, kDistractors = 3, kInstanceBase = 1000 };

std::string padded(const char* prefix, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

Matrix orthonormal_rows(std::size_t rank, std::size_t dim, Rng& rng) {
  if (rank == dim) return Matrix::identity(dim);
  Matrix basis(rank, dim);
  for (std::size_t r = 0; r < rank; ++r) {
    Embedding v = gaussian_vector(rng, dim);
    // Two Gram-Schmidt passes keep the basis orthonormal to rounding.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < r; ++p) {
        const double proj = dot(v, basis.row(p));
        for (std::size_t k = 0; k < dim; ++k) v[k] -= proj * basis(p, k);
      }
    }
    const Embedding unit = l2_normalize(v);
    std::copy(unit.begin(), unit.end(), basis.row(r).begin());
  }
  return basis;
}

Embedding add_noise(std::span<const double> base, Rng& rng, double stddev) {
  Embedding out(base.begin(), base.end());
  for (double& x : out) x += stddev * rng.normal();
  return out;
}

double local_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace

std::string_view category_name(HallucinationCategory c) noexcept {
  switch (c) {
    case HallucinationCategory::Matched: return "Matched";
    case HallucinationCategory::WrongDetail: return "WrongDetail";
    case HallucinationCategory::ExtraObject: return "ExtraObject";
    case HallucinationCategory::SpatialActionError: return "SpatialActionError";
    case HallucinationCategory::OtherError: return "OtherError";
  }
  return "Unknown";
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (dim < 2) fail("dim must be >= 2");
  if (num_intents < 2) fail("num_intents must be >= 2");
  if (intent_rank < 1 || intent_rank > dim) fail("intent_rank must lie in [1, dim]");
  if (corpus_size < num_intents) fail("corpus_size must be >= num_intents");
  if (!(hallucination_ratio >= 0.0)) fail("hallucination_ratio must be >= 0");
  if (!(text_noise_sigma >= 0.0) || !(target_jitter >= 0.0)) fail("noise levels must be >= 0");
  if (!(intent_scale > 0.0)) fail("intent_scale must be > 0");
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  World world;
  world.config = cfg;

  Rng basis_rng = root.split(kBasis);
  world.intent_basis = orthonormal_rows(cfg.intent_rank, cfg.dim, basis_rng);

  Rng intent_rng = root.split(kIntents);
  std::vector<Embedding> intents(cfg.num_intents);
  for (auto& s : intents) {
    const Embedding coeffs = l2_normalize(gaussian_vector(intent_rng, cfg.intent_rank));
    s.assign(cfg.dim, 0.0);
    for (std::size_t r = 0; r < cfg.intent_rank; ++r)
      for (std::size_t k = 0; k < cfg.dim; ++k) s[k] += cfg.intent_scale * coeffs[r] * world.intent_basis(r, k);
  }

  const double unit_sd = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  std::vector<double> mean_ratio(cfg.num_intents);
  for (std::size_t m = 0; m < cfg.num_intents; ++m) {
    Rng rng = root.split(kInstanceBase + m);
    SyntheticInstance inst;
    inst.intent_id = m;
    inst.instance_id = padded("dlg_", m, 4);
    inst.target_id = padded("img_", m, 5);
    inst.s = intents[m];
    const double s_norm = norm(inst.s);
    inst.x_text = add_noise(inst.s, rng, cfg.text_noise_sigma * s_norm * unit_sd);
    inst.target_feature = add_noise(inst.s, rng, cfg.target_jitter * s_norm * unit_sd);
    const double h_sd = std::sqrt(cfg.hallucination_ratio) * s_norm * unit_sd;
    double ratio_sum = 0.0;
    for (std::size_t n = 0; n <= cfg.rounds; ++n) {
      Embedding h = gaussian_vector(rng, cfg.dim, h_sd);
      ratio_sum += norm(h) / s_norm;
      Embedding x = inst.s;
      for (std::size_t k = 0; k < cfg.dim; ++k) x[k] += h[k];
      inst.x_gen_per_round.push_back(std::move(x));
    }
    mean_ratio[m] = ratio_sum / static_cast<double>(cfg.rounds + 1);
    world.instances.push_back(std::move(inst));
  }

  // Labels: Matched under the threshold, otherwise quartiles of the remaining ratios.
  std::vector<std::size_t> flagged;
  for (std::size_t m = 0; m < cfg.num_intents; ++m) {
    if (mean_ratio[m] > cfg.matched_threshold) flagged.push_back(m);
  }
  std::stable_sort(flagged.begin(), flagged.end(), [&](std::size_t a, std::size_t b) { return mean_ratio[a] < mean_ratio[b]; });
  for (std::size_t rank = 0; rank < flagged.size(); ++rank) {
    const std::size_t bucket = std::min<std::size_t>(3, 4 * rank / flagged.size());
    world.instances[flagged[rank]].category = static_cast<HallucinationCategory>(1 + bucket);
  }

  std::vector<std::string> ids;
  std::vector<Embedding> rows;
  for (const auto& inst : world.instances) {
    ids.push_back(inst.target_id);
    rows.push_back(inst.target_feature);
  }
  Rng distractor_rng = root.split(kDistractors);
  constexpr double kMix[3] = {0.3, 0.6, 0.9};
  for (std::size_t j = 0; j + cfg.num_intents < cfg.corpus_size; ++j) {
    const std::size_t m = distractor_rng.below(cfg.num_intents);
    const double beta = kMix[j % 3];
    const Embedding g = gaussian_vector(distractor_rng, cfg.dim, cfg.intent_scale * unit_sd);
    Embedding x(cfg.dim);
    for (std::size_t k = 0; k < cfg.dim; ++k) x[k] = beta * intents[m][k] + (1.0 - beta) * g[k];
    ids.push_back(padded("img_", cfg.num_intents + j, 5));
    rows.push_back(std::move(x));
  }
  world.corpus = data::EmbeddingStore(std::move(ids), Matrix::from_rows(rows));
  return world;
}

data::DialogueInstance synthetic_dialogue(const SyntheticInstance& inst, std::size_t rounds) {
  data::DialogueInstance d;
  d.instance_id = inst.instance_id;
  d.target_id = inst.target_id;
  d.caption = "a scene for intent " + std::to_string(inst.intent_id) + " in " + inst.instance_id;
  for (std::size_t n = 1; n <= rounds; ++n) {
    d.rounds.push_back({"what is detail " + std::to_string(n) + "?",
                        "detail " + std::to_string(n) + " of " + inst.instance_id});
  }
  return d;
}

data::Generator synthetic_generator(const World& world) {
  auto table = std::make_shared<std::unordered_map<std::string, Embedding>>();
  for (const auto& inst : world.instances) {
    const auto d = synthetic_dialogue(inst, world.config.rounds);
    for (std::size_t n = 0; n <= world.config.rounds; ++n) {
      table->emplace(data::concat_context(d, n), inst.x_gen_per_round[n]);
    }
  }
  return [table](const std::string& prompt) -> Embedding {
    auto it = table->find(prompt);
    if (it == table->end()) throw Error(Errc::InvalidArgument, "synthetic generator has no proxy for '" + prompt + "'");
    return it->second;
  };
}

data::Dataset to_dataset(const World& world) {
  const auto& cfg = world.config;
  data::Dataset ds;
  std::vector<data::DialogueInstance> all;
  std::vector<std::string> text_ids, intent_ids;
  std::vector<Embedding> text_rows, intent_rows;
  for (std::size_t i = 0; i < world.instances.size(); ++i) {
    const auto& inst = world.instances[i];
    auto d = synthetic_dialogue(inst, cfg.rounds);
    const bool held_out = cfg.test_every > 0 && i % cfg.test_every == 0;
    (held_out ? ds.test : ds.train).push_back(d);
    all.push_back(std::move(d));
    for (std::size_t n = 0; n <= cfg.rounds; ++n) {
      text_ids.push_back(data::text_key(inst.instance_id, n));
      text_rows.push_back(inst.x_text);
    }
    intent_ids.push_back(inst.instance_id);
    intent_rows.push_back(inst.s);
  }
  ds.triples = data::build_triples(all, data::identity_reformulator, synthetic_generator(world));
  ds.corpus = world.corpus;
  ds.text_features = data::EmbeddingStore(std::move(text_ids), Matrix::from_rows(text_rows));
  ds.intents = data::EmbeddingStore(std::move(intent_ids), Matrix::from_rows(intent_rows));
  return ds;
}

double expected_cosine(double rho) {
  if (rho < 0.0 || std::isnan(rho)) throw Error(Errc::NegativeRatio, "rho = " + std::to_string(rho));
  return 1.0 / std::sqrt(1.0 + rho);
}

CosineEstimate empirical_cosine(const encoders::LinearEncoder& w, std::span<const double> s, double rho,
                                std::size_t samples, Rng& rng) {
  if (samples < 100) throw Error(Errc::InvalidArgument, "empirical_cosine needs at least 100 samples");
  if (rho < 0.0) throw Error(Errc::NegativeRatio, "rho = " + std::to_string(rho));
  const Matrix& W = w.weight;
  if (W.cols() != s.size()) throw Error(Errc::DimensionMismatch, "empirical_cosine");
  const std::size_t d = s.size();
  const std::size_t d_out = W.rows();

  const Embedding ws = kernels::matvec(W, s);
  const double ws_sq = dot(ws, ws);
  if (!(ws_sq > kZeroEpsilon * kZeroEpsilon)) throw Error(Errc::ZeroVector, "W s vanishes");
  const double h_sd = std::sqrt(rho * dot(s, s) / static_cast<double>(d));

  Matrix h(samples, d);
  for (double& x : h.data()) x = h_sd * rng.normal();

  std::vector<double> cos(samples), residual(samples), cross(samples);
  const auto n = static_cast<long>(samples);
#pragma omp parallel for num_threads(kernels::threads()) schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto hi = h.row(static_cast<std::size_t>(i));
    std::vector<double> x(d), wh(d_out), qg(d_out);
    for (std::size_t k = 0; k < d; ++k) x[k] = s[k] + hi[k];
    for (std::size_t o = 0; o < d_out; ++o) {
      wh[o] = local_dot(W.row(o).data(), hi.data(), d);
      qg[o] = local_dot(W.row(o).data(), x.data(), d);
    }
    const double num = local_dot(qg.data(), ws.data(), d_out);
    const double cross_term = local_dot(wh.data(), ws.data(), d_out);
    cos[i] = num / std::sqrt(local_dot(qg.data(), qg.data(), d_out) * ws_sq);
    residual[i] = std::abs(num - (ws_sq + cross_term));
    cross[i] = cross_term;
  }

  auto mean_and_stderr = [samples](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(samples);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(samples - 1);
    return std::pair{mean, std::sqrt(var / static_cast<double>(samples))};
  };
  CosineEstimate est;
  std::tie(est.mean, est.stderr_mean) = mean_and_stderr(cos);
  std::tie(est.cross_mean, est.cross_stderr) = mean_and_stderr(cross);
  est.max_identity_residual = *std::max_element(residual.begin(), residual.end());
  return est;
}

std::vector<NoiseProbe> probes_from(std::span<const SyntheticInstance> instances) {
  std::vector<NoiseProbe> probes;
  probes.reserve(instances.size());
  for (const auto& inst : instances) probes.push_back({inst.s, inst.x_gen_per_round});
  return probes;
}

std::vector<NoiseProbe> probes_from(const data::Dataset& ds, std::span<const data::DialogueInstance> dialogues) {
  if (!ds.intents) throw Error(Errc::InvalidArgument, "dataset has no intents store");
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<NoiseProbe> probes;
  for (const auto& d : dialogues) {
    const auto row = ds.intents->find(d.instance_id);
    if (!row) throw Error(Errc::MissingTarget, "no intent vector for " + d.instance_id);
    const auto s = ds.intents->row(*row);
    slot.emplace(d.instance_id, probes.size());
    probes.push_back({Embedding(s.begin(), s.end()), {}});
  }
  for (const auto& t : ds.triples) {
    auto it = slot.find(t.instance_id);
    if (it != slot.end()) probes[it->second].x_gen.push_back(t.proxy_feature);
  }
  return probes;
}

double noise_suppression_ratio(const encoders::Encoder& enc, std::span<const NoiseProbe> probes) {
  if (probes.empty()) throw Error(Errc::InvalidArgument, "noise_suppression_ratio on empty set");
  std::vector<double> sums(probes.size(), 0.0);
  std::vector<std::size_t> counts(probes.size(), 0);
  const auto n = static_cast<long>(probes.size());
  bool zero = false;
#pragma omp parallel for num_threads(kernels::threads()) schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto& probe = probes[static_cast<std::size_t>(i)];
    const Embedding fs = encoders::encode(enc, probe.s);
    const double base = dot(fs, fs);
    if (!(base > kZeroEpsilon * kZeroEpsilon)) {
#pragma omp atomic write
      zero = true;
      continue;
    }
    for (const auto& x : probe.x_gen) {
      const Embedding fx = encoders::encode(enc, x);
      double diff = 0.0;
      for (std::size_t k = 0; k < fx.size(); ++k) diff += (fx[k] - fs[k]) * (fx[k] - fs[k]);
      sums[static_cast<std::size_t>(i)] += diff / base;
      ++counts[static_cast<std::size_t>(i)];
    }
  }
  if (zero) throw Error(Errc::ZeroVector, "encoder maps an intent component to zero");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    total += sums[i];
    count += counts[i];
  }
  if (count == 0) throw Error(Errc::InvalidArgument, "no proxies to measure");
  return total / static_cast<double>(count);
}

double noise_suppression_ratio(const encoders::Encoder& enc, std::span<const SyntheticInstance> instances) {
  const auto probes = probes_from(instances);
  return noise_suppression_ratio(enc, probes);
}

}  // namespace dmcl::synth
