#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dmcl/checkpoint.hpp"
#include "dmcl/dataset_io.hpp"
#include "dmcl/encoders.hpp"
#include "dmcl/losses.hpp"
#include "dmcl/retrieval.hpp"

namespace dmcl::train {

enum class Objective { DmclTotal, AlignOnly, DiffusionOnlyNce, TextOnlyNce, CosAlignTheory };

std::string_view objective_name(Objective o) noexcept;
/// Throws InvalidConfig on an unknown name.
Objective parse_objective(std::string_view name);

enum class EncoderKind { Identity, Linear, Mlp };

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  double learning_rate = 1e-3;
  losses::LossHyperParams hyperparams;
  Objective mode = Objective::DmclTotal;
  std::uint64_t seed = 42;
  /// Evaluate every this many steps (plus once before training); 0 disables.
  std::size_t eval_every = 500;
  /// Global-norm clipping threshold; 0 disables.
  double clip_norm = 10.0;
  bool learn_alphas = true;
  double w_text = 0.5;
  bool learn_fusion = false;
  EncoderKind encoder = EncoderKind::Linear;
  std::size_t hidden = 64;
  EncoderKind target_encoder = EncoderKind::Identity;
  std::size_t k = 10;

  void validate() const;
};

/// Unknown keys are rejected except those listed in `ignored`.
TrainConfig config_from_json(const nlohmann::json& j, const std::vector<std::string>& ignored = {});
nlohmann::ordered_json config_to_json(const TrainConfig& cfg);
/// 16 hex digits identifying the canonical JSON form of cfg.
std::string config_hash(const TrainConfig& cfg);

struct Model {
  encoders::Encoder text;
  encoders::Encoder diffusion;
  encoders::Encoder target;
  losses::ViewWeights weights = losses::ViewWeights::unit();
  encoders::FusionParams fusion;

  retrieval::QueryEncoders query_encoders() const { return {text, diffusion, target, fusion}; }
};

Model init_model(const TrainConfig& cfg, std::size_t feature_dim, std::size_t target_dim);
std::vector<NamedTensor> model_tensors(const Model& m);
/// Encoder kinds are recovered from tensor names; a missing target encoder means identity.
Model model_from_tensors(const std::vector<NamedTensor>& tensors);

/// Flattened training examples: one per triple of a training dialogue.
struct TrainingSet {
  std::vector<Embedding> text;
  std::vector<Embedding> proxy;
  std::vector<Embedding> target;
  std::vector<std::string> target_id;

  std::size_t size() const noexcept { return target_id.size(); }
};

TrainingSet training_set(const data::Dataset& ds);

struct Batch {
  std::vector<std::size_t> indices;
  losses::PositiveTable positives;
};

/// n distinct indices; positives by target-id equality. Throws InsufficientData.
Batch sample_batch(const TrainingSet& set, Rng& rng, std::size_t n);

struct StepResult {
  double value = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  /// One gradient per entry of trainable(), same order.
  std::vector<std::vector<double>> grads;
};

/// Trainable tensors in optimizer order: encoders, then alpha raw, then fusion raw.
struct Trainable {
  std::vector<std::span<double>> params;
  std::vector<std::string> names;
};
Trainable trainable(Model& m, const TrainConfig& cfg, double& fusion_raw);

/// Forward and full backward for one batch under cfg.mode. A non-finite loss value is
/// returned without gradients.
StepResult compute_step(const Model& m, const TrainConfig& cfg, const TrainingSet& set, const Batch& batch);

struct TraceRow {
  std::size_t step = 0;
  std::string term;
  double value = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
};

void write_trace(const std::filesystem::path& path, const TrainTrace& trace);

struct EvalSnapshot {
  retrieval::RetrievalReport report;
  std::optional<double> noise_ratio;
};

/// Hits@k over the test split (the train split if there is no test split) and, when the
/// dataset carries intents, the diffusion encoder's noise-suppression ratio.
EvalSnapshot evaluate(const Model& m, const data::Dataset& ds, std::size_t k);

struct TrainResult {
  Model model;
  TrainTrace trace;
};

/// Loss rows are labelled with the update number (1..steps); eval rows with the number of
/// updates applied so far. Throws NonFiniteLoss naming the step.
TrainResult train(const TrainConfig& cfg, const data::Dataset& ds, Model model);
TrainResult train(const TrainConfig& cfg, const data::Dataset& ds);

struct ModeResult {
  Objective mode;
  double hits_final = 0.0;
  std::vector<double> hits;
  std::optional<double> noise_ratio_init;
  std::optional<double> noise_ratio_final;
};

/// Trains and evaluates base with each mode in turn. Throws EmptyModes.
std::vector<ModeResult> compare_modes(const TrainConfig& base, const std::vector<Objective>& modes,
                                      const data::Dataset& ds);
void write_comparison(const std::filesystem::path& path, const std::vector<ModeResult>& rows, std::size_t k);

}  // namespace dmcl::train
