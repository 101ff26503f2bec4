#include "dmcl/encoders.hpp"

#include <cmath>
#include <string>

#include "dmcl/kernels.hpp"

namespace dmcl::encoders {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void fill_gaussian(Matrix& m, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : m.data()) x = stddev * rng.normal();
}

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(Errc::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

std::vector<double> outer(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = a[i] * b[j];
  return out;
}

}  // namespace

LinearEncoder make_linear(std::size_t d_in, std::size_t d_out, Rng& rng) {
  LinearEncoder enc{Matrix(d_out, d_in)};
  fill_gaussian(enc.weight, rng, d_in, d_out);
  return enc;
}

MlpEncoder make_mlp(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng) {
  MlpEncoder enc{Matrix(hidden, d_in), std::vector<double>(hidden, 0.0), Matrix(d_out, hidden),
                 std::vector<double>(d_out, 0.0)};
  fill_gaussian(enc.w1, rng, d_in, hidden);
  fill_gaussian(enc.w2, rng, hidden, d_out);
  return enc;
}

std::size_t input_dim(const Encoder& enc) {
  return std::visit(overloaded{[](const IdentityEncoder& e) { return e.dim; },
                               [](const LinearEncoder& e) { return e.weight.cols(); },
                               [](const MlpEncoder& e) { return e.w1.cols(); }},
                    enc);
}

std::size_t output_dim(const Encoder& enc) {
  return std::visit(overloaded{[](const IdentityEncoder& e) { return e.dim; },
                               [](const LinearEncoder& e) { return e.weight.rows(); },
                               [](const MlpEncoder& e) { return e.w2.rows(); }},
                    enc);
}

std::vector<ParamView> parameters(Encoder& enc, const std::string& prefix) {
  return std::visit(
      overloaded{
          [](IdentityEncoder&) { return std::vector<ParamView>{}; },
          [&](LinearEncoder& e) {
            return std::vector<ParamView>{{prefix + ".W", e.weight.rows(), e.weight.cols(), e.weight.data()}};
          },
          [&](MlpEncoder& e) {
            return std::vector<ParamView>{{prefix + ".W1", e.w1.rows(), e.w1.cols(), e.w1.data()},
                                          {prefix + ".b1", 1, e.b1.size(), e.b1},
                                          {prefix + ".W2", e.w2.rows(), e.w2.cols(), e.w2.data()},
                                          {prefix + ".b2", 1, e.b2.size(), e.b2}};
          }},
      enc);
}

Embedding encode(const Encoder& enc, std::span<const double> x) {
  require_dim(x.size(), input_dim(enc), "encode input");
  return std::visit(overloaded{[&](const IdentityEncoder&) { return Embedding(x.begin(), x.end()); },
                               [&](const LinearEncoder& e) { return kernels::matvec(e.weight, x); },
                               [&](const MlpEncoder& e) {
                                 Embedding h = kernels::matvec(e.w1, x);
                                 for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + e.b1[i]);
                                 Embedding y = kernels::matvec(e.w2, h);
                                 for (std::size_t i = 0; i < y.size(); ++i) y[i] += e.b2[i];
                                 return y;
                               }},
                    enc);
}

EncoderGrads encode_backward(const Encoder& enc, std::span<const double> x, std::span<const double> upstream) {
  require_dim(x.size(), input_dim(enc), "encode_backward input");
  require_dim(upstream.size(), output_dim(enc), "encode_backward upstream");
  return std::visit(
      overloaded{[&](const IdentityEncoder&) {
                   return EncoderGrads{{}, Embedding(upstream.begin(), upstream.end())};
                 },
                 [&](const LinearEncoder& e) {
                   return EncoderGrads{{outer(upstream, x)}, kernels::matvec_transposed(e.weight, upstream)};
                 },
                 [&](const MlpEncoder& e) {
                   Embedding h = kernels::matvec(e.w1, x);
                   for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + e.b1[i]);
                   Embedding gh = kernels::matvec_transposed(e.w2, upstream);
                   for (std::size_t i = 0; i < gh.size(); ++i) gh[i] *= 1.0 - h[i] * h[i];
                   EncoderGrads g;
                   g.params = {outer(gh, x), gh, outer(upstream, h), Embedding(upstream.begin(), upstream.end())};
                   g.input = kernels::matvec_transposed(e.w1, gh);
                   return g;
                 }},
      enc);
}

void FusionParams::validate() const {
  if (!(w_text >= 0.0 && w_text <= 1.0)) throw Error(Errc::InvalidConfig, "w_text must lie in [0, 1]");
}

Embedding mean_embedding(const std::vector<Embedding>& embs) {
  if (embs.empty()) throw Error(Errc::InvalidArgument, "mean of empty embedding set");
  Embedding mean(embs.front().size(), 0.0);
  for (const auto& e : embs) {
    require_dim(e.size(), mean.size(), "mean_embedding");
    for (std::size_t k = 0; k < e.size(); ++k) mean[k] += e[k];
  }
  for (double& x : mean) x /= static_cast<double>(embs.size());
  return mean;
}

Embedding fuse(std::span<const double> text, const std::vector<Embedding>& proxies, const FusionParams& fp) {
  fp.validate();
  if (proxies.empty()) return Embedding(text.begin(), text.end());
  const Embedding mean = mean_embedding(proxies);
  require_dim(mean.size(), text.size(), "fuse");
  Embedding mix(text.size());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = fp.w_text * text[k] + (1.0 - fp.w_text) * mean[k];
  return l2_normalize(mix);
}

FusionGrads fuse_backward(std::span<const double> text, std::span<const double> proxy_mean, const FusionParams& fp,
                          std::span<const double> upstream) {
  require_dim(proxy_mean.size(), text.size(), "fuse_backward");
  Embedding mix(text.size());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = fp.w_text * text[k] + (1.0 - fp.w_text) * proxy_mean[k];
  const Embedding g_mix = l2_normalize_backward(mix, upstream);
  FusionGrads g;
  g.text.resize(text.size());
  g.proxy_mean.resize(text.size());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    g.text[k] = fp.w_text * g_mix[k];
    g.proxy_mean[k] = (1.0 - fp.w_text) * g_mix[k];
    g.w_text += g_mix[k] * (text[k] - proxy_mean[k]);
  }
  return g;
}

void opt_step(OptimizerState& state, const std::vector<std::span<double>>& params,
              const std::vector<std::vector<double>>& grads) {
  if (params.size() != grads.size()) throw Error(Errc::DimensionMismatch, "opt_step: params vs grads count");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require_dim(grads[t].size(), params[t].size(), "opt_step tensor");
    if (!all_finite(grads[t])) throw Error(Errc::NonFiniteGradient, "tensor " + std::to_string(t));
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error(Errc::DimensionMismatch, "opt_step: state shape changed");

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.m[t];
    auto& v = state.v[t];
    require_dim(m.size(), params[t].size(), "opt_step moment");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = grads[t][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      params[t][i] -= state.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.epsilon);
    }
  }
}

}  // namespace dmcl::encoders
