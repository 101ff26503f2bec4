#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dmcl/numkit.hpp"

namespace dmcl::encoders {

/// Pass-through map; the default target-side encoder.
struct IdentityEncoder {
  std::size_t dim = 0;
};

/// f(x) = W x, W is d_out x d_in.
struct LinearEncoder {
  Matrix weight;
};

/// f(x) = W2 tanh(W1 x + b1) + b2.
struct MlpEncoder {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
};

using Encoder = std::variant<IdentityEncoder, LinearEncoder, MlpEncoder>;

/// Weights ~ N(0, 2 / (fan_in + fan_out)), biases zero.
LinearEncoder make_linear(std::size_t d_in, std::size_t d_out, Rng& rng);
MlpEncoder make_mlp(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng);

std::size_t input_dim(const Encoder& enc);
std::size_t output_dim(const Encoder& enc);

/// Mutable view of one parameter tensor, row-major.
struct ParamView {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<double> values;
};

/// Parameters in a fixed order; names are prefix + "." + local name.
std::vector<ParamView> parameters(Encoder& enc, const std::string& prefix);

/// Raw (pre-normalization) embedding.
Embedding encode(const Encoder& enc, std::span<const double> x);

struct EncoderGrads {
  /// One gradient per tensor, same order and length as parameters().
  std::vector<std::vector<double>> params;
  Embedding input;
};

EncoderGrads encode_backward(const Encoder& enc, std::span<const double> x, std::span<const double> upstream);

struct FusionParams {
  double w_text = 0.5;

  void validate() const;
};

/// Element-wise mean; throws InvalidArgument on an empty set.
Embedding mean_embedding(const std::vector<Embedding>& embs);

/// l2_normalize(w * text + (1 - w) * mean(proxies)); an empty proxy set returns text.
Embedding fuse(std::span<const double> text, const std::vector<Embedding>& proxies, const FusionParams& fp);

struct FusionGrads {
  Embedding text;
  Embedding proxy_mean;
  double w_text = 0.0;
};

/// Backward of fuse() for a single (already averaged) proxy.
FusionGrads fuse_backward(std::span<const double> text, std::span<const double> proxy_mean, const FusionParams& fp,
                          std::span<const double> upstream);

/// Adam state. Moment buffers are sized on the first step and checked on every later one.
struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One adaptive-moment update over params in the given order. Throws NonFiniteGradient
/// before touching any parameter if a gradient entry is NaN or infinite.
void opt_step(OptimizerState& state, const std::vector<std::span<double>>& params,
              const std::vector<std::vector<double>>& grads);

}  // namespace dmcl::encoders
