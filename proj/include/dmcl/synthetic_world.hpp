#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmcl/dataset_io.hpp"
#include "dmcl/encoders.hpp"
#include "dmcl/numkit.hpp"

namespace dmcl::synth {

/// Judge categories for a generated proxy. Reporting metadata only.
enum class HallucinationCategory { Matched, WrongDetail, ExtraObject, SpatialActionError, OtherError };

std::string_view category_name(HallucinationCategory c) noexcept;

struct WorldConfig {
  std::size_t dim = 64;
  std::size_t num_intents = 200;
  /// Intent vectors live in a random subspace of this rank; dim means fully isotropic.
  std::size_t intent_rank = 16;
  /// Target E|h|^2 / |s|^2.
  double hallucination_ratio = 2.0;
  /// Per-coordinate text jitter is text_noise_sigma * |s| / sqrt(dim).
  double text_noise_sigma = 0.05;
  /// Same scaling for the jitter between an intent and its target image feature.
  double target_jitter = 0.05;
  double intent_scale = 1.0;
  /// Mean |h| / |s| at or below this is labelled Matched.
  double matched_threshold = 0.5;
  std::uint64_t seed = 42;
  std::size_t corpus_size = 2000;
  std::size_t rounds = 5;
  /// Every test_every-th instance is held out for evaluation; 0 keeps all in train.
  std::size_t test_every = 4;

  /// Throws InvalidConfig.
  void validate() const;
};

struct SyntheticInstance {
  std::size_t intent_id = 0;
  std::string instance_id;
  std::string target_id;
  Embedding s;
  Embedding x_text;
  /// s + h_n for rounds 0..N, fresh h each round.
  std::vector<Embedding> x_gen_per_round;
  Embedding target_feature;
  HallucinationCategory category = HallucinationCategory::Matched;
};

struct World {
  WorldConfig config;
  /// Orthonormal rows spanning the intent subspace (intent_rank x dim).
  Matrix intent_basis;
  std::vector<SyntheticInstance> instances;
  /// Targets first (ids in instance order), then distractors.
  data::EmbeddingStore corpus;
};

/// Pure function of cfg.
World generate_world(const WorldConfig& cfg);

/// Dialogue transcript whose contexts key the synthetic generator.
data::DialogueInstance synthetic_dialogue(const SyntheticInstance& inst, std::size_t rounds);

/// Generator stage returning x_gen for the round whose context string it receives.
data::Generator synthetic_generator(const World& world);

/// Dialogues split by test_every, triples from the identity reformulator and the synthetic
/// generator, corpus, text features per round, and the intents store.
data::Dataset to_dataset(const World& world);

/// 1 / sqrt(1 + rho). Throws NegativeRatio for rho < 0.
double expected_cosine(double rho);

struct CosineEstimate {
  double mean = 0.0;
  double stderr_mean = 0.0;
  /// max over samples of |q_gen.q_text - (|Ws|^2 + (Wh).(Ws))|
  double max_identity_residual = 0.0;
  /// Mean and standard error of the cross term (Wh).(Ws).
  double cross_mean = 0.0;
  double cross_stderr = 0.0;
};

/// Monte Carlo estimate of E cos(W(s + h), W s) with h ~ N(0, rho |s|^2 / d I).
/// Draws are serial from rng; the per-sample evaluation runs in parallel.
CosineEstimate empirical_cosine(const encoders::LinearEncoder& w, std::span<const double> s, double rho,
                                std::size_t samples, Rng& rng);

/// An intent component with the proxies generated for it.
struct NoiseProbe {
  Embedding s;
  std::vector<Embedding> x_gen;
};

std::vector<NoiseProbe> probes_from(std::span<const SyntheticInstance> instances);
/// Probes for the given dialogues from a stored dataset; needs the intents store.
std::vector<NoiseProbe> probes_from(const data::Dataset& ds, std::span<const data::DialogueInstance> dialogues);

/// Mean over (instance, proxy) of |f(x_gen) - f(s)|^2 / |f(s)|^2 on raw encoder outputs.
double noise_suppression_ratio(const encoders::Encoder& enc, std::span<const NoiseProbe> probes);
double noise_suppression_ratio(const encoders::Encoder& enc, std::span<const SyntheticInstance> instances);

}  // namespace dmcl::synth
