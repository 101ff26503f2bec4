#include "dmcl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dmcl/kernels.hpp"

namespace dmcl::losses {

namespace {

constexpr double kProbFloor = 1e-12;

void require_positive_tau(double tau, const char* what) {
  if (!(tau > 0.0)) throw Error(Errc::NonPositiveTemperature, std::string(what) + " = " + std::to_string(tau));
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::DimensionMismatch, std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                             "x" + std::to_string(b.cols()));
  }
}

void require_table(const PositiveTable& q, std::size_t n) {
  if (q.size() != n) throw Error(Errc::DimensionMismatch, "positive table side != batch size");
}

// log softmax(x / tau) and softmax(x / tau) for one row.
void log_softmax(std::span<const double> x, double tau, std::vector<double>& logp, std::vector<double>& p) {
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double xi : x) z += std::exp((xi - mx) / tau);
  const double log_z = std::log(z);
  logp.resize(x.size());
  p.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    logp[j] = (x[j] - mx) / tau - log_z;
    p[j] = std::exp(logp[j]);
  }
}

// grad_u = G V, grad_v = G^T U for a loss that depends on S = U V^T through G = dL/dS.
void backprop_similarity(const Matrix& g, const Matrix& u, const Matrix& v, LossOutput& out) {
  out.grad_u = Matrix(u.rows(), u.cols());
  out.grad_v = Matrix(v.rows(), v.cols());
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t j = 0; j < v.rows(); ++j) {
      const double gij = g(i, j);
      if (gij == 0.0) continue;
      auto gu = out.grad_u.row(i);
      auto gv = out.grad_v.row(j);
      const auto ui = u.row(i);
      const auto vj = v.row(j);
      for (std::size_t k = 0; k < u.cols(); ++k) {
        gu[k] += gij * vj[k];
        gv[k] += gij * ui[k];
      }
    }
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto& d = dst.data();
  const auto& s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

// d/dx of JS with inputs clamped at kProbFloor: 0.5 (log x^ + [x > floor]) - 0.5 (log m^ + [m > floor]).
double js_partial(double x, double m) {
  const double xc = std::max(x, kProbFloor);
  const double mc = std::max(m, kProbFloor);
  return 0.5 * (std::log(xc) + (x > kProbFloor ? 1.0 : 0.0)) - 0.5 * (std::log(mc) + (m > kProbFloor ? 1.0 : 0.0));
}

// Softmax rows of (a b^T) / tau.
Matrix softmax_rows(const Matrix& a, const Matrix& b, double tau, Matrix& scores) {
  scores = kernels::similarity(a, b);
  Matrix probs(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto p = softmax_tau(scores.row(i), tau);
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }
  return probs;
}

// Gradient w.r.t. scores given upstream dL/dP for P = softmax(scores / tau).
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& upstream, double tau) {
  Matrix g(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) inner += probs(i, j) * upstream(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j) g(i, j) = probs(i, j) * (upstream(i, j) - inner) / tau;
  }
  return g;
}

// One direction of the HNM loss. sims(a, c) is the similarity of anchor a to candidate c;
// accumulates scale * dL/dsims into dsims.
double hnm_direction(const Matrix& sims, const PositiveTable& q, std::size_t k, double margin, double tau_h,
                     double scale, Matrix& dsims) {
  const std::size_t n = sims.rows();
  double total = 0.0;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t a = 0; a < n; ++a) {
    positives.clear();
    negatives.clear();
    for (std::size_t c = 0; c < n; ++c) (q(a, c) ? positives : negatives).push_back(c);
    const auto row = sims.row(a);
    const auto hard = mine_hard_negatives(row, negatives, k);
    if (hard.empty()) continue;
    double s_pos = 0.0;
    for (std::size_t p : positives) s_pos += row[p];
    s_pos /= static_cast<double>(positives.size());

    const double inv_h = 1.0 / static_cast<double>(hard.size());
    double pull = 0.0;
    for (std::size_t j : hard) {
      const double x = (row[j] - s_pos + margin) / tau_h;
      total += softplus(x) * inv_h;
      const double c = scale * sigmoid(x) * inv_h / tau_h;
      dsims(a, j) += c;
      pull += c;
    }
    for (std::size_t p : positives) dsims(a, p) -= pull / static_cast<double>(positives.size());
  }
  return total;
}

}  // namespace

PositiveTable PositiveTable::identity(std::size_t n) {
  PositiveTable t(n);
  for (std::size_t i = 0; i < n; ++i) t.set(i, i, true);
  return t;
}

PositiveTable PositiveTable::from_target_ids(std::span<const std::string> ids) {
  PositiveTable t(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < ids.size(); ++j) t.set(i, j, ids[i] == ids[j]);
  return t;
}

std::size_t PositiveTable::row_count(std::size_t i) const {
  return static_cast<std::size_t>(std::count(q_.begin() + i * n_, q_.begin() + (i + 1) * n_, 1));
}

PositiveTable PositiveTable::transposed() const {
  PositiveTable t(n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) t.set(j, i, (*this)(i, j));
  return t;
}

void PositiveTable::validate_rows() const {
  for (std::size_t i = 0; i < n_; ++i) {
    if (row_count(i) == 0) throw Error(Errc::EmptyPositiveRow, "row " + std::to_string(i) + " has no positive");
  }
}

void LossHyperParams::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  for (auto [name, t] : {std::pair{"tau_T", tau_T}, {"tau_D", tau_D}, {"tau_F", tau_F}, {"tau_TD", tau_TD}, {"tau_h", tau_h}}) {
    if (!(t > 0.0)) fail(std::string(name) + " must be > 0");
  }
  if (!(eps_smooth >= 0.0 && eps_smooth < 1.0)) fail("eps_smooth must lie in [0, 1)");
  if (K < 1) fail("K must be >= 1");
  if (!(margin_m > 0.0)) fail("margin_m must be > 0");
  if (!(lambda_h >= 0.0)) fail("lambda_h must be >= 0");
  if (!(beta_cons >= 0.0)) fail("beta_cons must be >= 0");
  if (!(beta_dist >= 0.0)) fail("beta_dist must be >= 0");
}

void ViewBatch::validate() const {
  require_same_shape(text, target, "text vs target");
  require_same_shape(diffusion, target, "diffusion vs target");
  require_same_shape(fused, target, "fused vs target");
  require_table(positives, target.rows());
}

ViewGrads ViewGrads::zeros_like(const ViewBatch& b) {
  return {Matrix(b.text.rows(), b.text.cols()), Matrix(b.diffusion.rows(), b.diffusion.cols()),
          Matrix(b.fused.rows(), b.fused.cols()), Matrix(b.target.rows(), b.target.cols())};
}

ViewWeights ViewWeights::unit() { return from_alphas({1.0, 1.0, 1.0}); }

ViewWeights ViewWeights::from_alphas(const std::array<double, 3>& alphas) {
  ViewWeights w;
  for (std::size_t v = 0; v < 3; ++v) w.raw[v] = softplus_inverse(alphas[v]);
  return w;
}

std::array<double, 3> ViewWeights::alphas() const {
  return {softplus(raw[0]), softplus(raw[1]), softplus(raw[2])};
}

LossOutput cosine_align_loss(std::span<const double> gen, std::span<const double> text) {
  if (gen.size() != text.size()) throw Error(Errc::DimensionMismatch, "cosine_align_loss");
  const double ng = norm(gen);
  const double nt = norm(text);
  if (ng <= kZeroEpsilon || nt <= kZeroEpsilon) throw Error(Errc::ZeroVector, "cosine_align_loss");
  const double c = dot(gen, text) / (ng * nt);
  LossOutput out;
  out.value = -c;
  out.grad_u = Matrix(1, gen.size());
  out.grad_v = Matrix(1, text.size());
  for (std::size_t k = 0; k < gen.size(); ++k) {
    const double gh = gen[k] / ng;
    const double th = text[k] / nt;
    out.grad_u(0, k) = -(th - c * gh) / ng;
    out.grad_v(0, k) = -(gh - c * th) / nt;
  }
  return out;
}

LossOutput info_nce_single(const Matrix& q, const Matrix& k, double tau) {
  require_same_shape(q, k, "info_nce_single");
  require_positive_tau(tau, "tau");
  const std::size_t n = q.rows();
  if (n == 0) throw Error(Errc::InvalidArgument, "info_nce_single on empty batch");
  const Matrix s = kernels::similarity(q, k);
  Matrix g(n, n);
  double value = 0.0;
  std::vector<double> logp, p;
  const double scale = 1.0 / (static_cast<double>(n) * tau);
  for (std::size_t i = 0; i < n; ++i) {
    log_softmax(s.row(i), tau, logp, p);
    value -= logp[i];
    for (std::size_t j = 0; j < n; ++j) g(i, j) = (p[j] - (i == j ? 1.0 : 0.0)) * scale;
  }
  LossOutput out;
  out.value = value / static_cast<double>(n);
  backprop_similarity(g, q, k, out);
  return out;
}

Matrix smooth_targets(const PositiveTable& q, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw Error(Errc::InvalidArgument, "eps must lie in [0, 1]");
  q.validate_rows();
  const std::size_t n = q.size();
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double count = static_cast<double>(q.row_count(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double q_hat = q(i, j) ? 1.0 / count : 0.0;
      t(i, j) = (1.0 - eps) * q_hat + eps / static_cast<double>(n);
    }
  }
  return t;
}

LossOutput symmetric_info_nce(const Matrix& u, const Matrix& v, const PositiveTable& q, double tau, double eps) {
  require_same_shape(u, v, "symmetric_info_nce");
  require_positive_tau(tau, "tau");
  const std::size_t n = u.rows();
  if (n == 0) throw Error(Errc::InvalidArgument, "symmetric_info_nce on empty batch");
  require_table(q, n);
  const Matrix fwd = smooth_targets(q, eps);
  const Matrix bwd = smooth_targets(q.transposed(), eps);
  const Matrix s = kernels::similarity(u, v);
  const Matrix st = s.transposed();

  Matrix g(n, n);
  double acc = 0.0;
  std::vector<double> logp, p;
  for (std::size_t i = 0; i < n; ++i) {
    log_softmax(s.row(i), tau, logp, p);
    for (std::size_t j = 0; j < n; ++j) {
      acc += fwd(i, j) * logp[j];
      g(i, j) += p[j] - fwd(i, j);
    }
  }
  // Anchors v_j over candidates u_i: logits are column j of s.
  for (std::size_t j = 0; j < n; ++j) {
    log_softmax(st.row(j), tau, logp, p);
    for (std::size_t i = 0; i < n; ++i) {
      acc += bwd(j, i) * logp[i];
      g(i, j) += p[i] - bwd(j, i);
    }
  }
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (double& x : g.data()) x *= scale / tau;

  LossOutput out;
  out.value = -acc * scale;
  backprop_similarity(g, u, v, out);
  return out;
}

std::vector<std::size_t> mine_hard_negatives(std::span<const double> anchor_sims,
                                             std::span<const std::size_t> negatives, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidArgument, "hard-negative count K must be >= 1");
  std::vector<std::size_t> order(negatives.begin(), negatives.end());
  for (std::size_t j : order) {
    if (j >= anchor_sims.size()) throw Error(Errc::DimensionMismatch, "negative index out of range");
  }
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (anchor_sims[a] != anchor_sims[b]) return anchor_sims[a] > anchor_sims[b];
                      return a < b;
                    });
  order.resize(take);
  return order;
}

LossOutput hnm_loss(const Matrix& u, const Matrix& v, const PositiveTable& q, std::size_t k, double margin,
                    double tau_h) {
  require_same_shape(u, v, "hnm_loss");
  require_positive_tau(tau_h, "tau_h");
  if (!(margin > 0.0)) throw Error(Errc::InvalidArgument, "margin must be > 0");
  const std::size_t n = u.rows();
  if (n == 0) throw Error(Errc::InvalidArgument, "hnm_loss on empty batch");
  require_table(q, n);
  q.validate_rows();
  const PositiveTable qt = q.transposed();
  qt.validate_rows();

  const Matrix s = kernels::similarity(u, v);
  const Matrix st = s.transposed();
  const double scale = 0.5 / static_cast<double>(n);
  Matrix g(n, n);
  Matrix gt(n, n);
  const double uv = hnm_direction(s, q, k, margin, tau_h, scale, g);
  const double vu = hnm_direction(st, qt, k, margin, tau_h, scale, gt);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) += gt(j, i);

  LossOutput out;
  out.value = (uv + vu) * scale;
  backprop_similarity(g, u, v, out);
  return out;
}

LossOutput js_agreement(const Matrix& p, const Matrix& q) {
  require_same_shape(p, q, "js_agreement");
  const std::size_t n = p.rows();
  if (n == 0) throw Error(Errc::InvalidArgument, "js_agreement on empty input");
  LossOutput out;
  out.grad_u = Matrix(p.rows(), p.cols());
  out.grad_v = Matrix(q.rows(), q.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double js = 0.0;
    for (std::size_t k = 0; k < p.cols(); ++k) {
      const double a = p(i, k);
      const double b = q(i, k);
      const double m = 0.5 * (a + b);
      const double log_m = std::log(std::max(m, kProbFloor));
      if (a > 0.0) js += 0.5 * a * (std::log(std::max(a, kProbFloor)) - log_m);
      if (b > 0.0) js += 0.5 * b * (std::log(std::max(b, kProbFloor)) - log_m);
      out.grad_u(i, k) = js_partial(a, m) * inv_n;
      out.grad_v(i, k) = js_partial(b, m) * inv_n;
    }
    total += std::max(js, 0.0);
  }
  out.value = total * inv_n;
  return out;
}

BatchLoss alignment_loss(const ViewBatch& batch, const LossHyperParams& hp, const ViewWeights& weights) {
  batch.validate();
  const std::array<const Matrix*, 3> views{&batch.text, &batch.diffusion, &batch.fused};
  const std::array<double, 3> taus{hp.tau_T, hp.tau_D, hp.tau_F};
  const std::array<const char*, 3> tags{"T", "D", "F"};
  const auto alphas = weights.alphas();

  BatchLoss out;
  out.grads = ViewGrads::zeros_like(batch);
  std::array<Matrix*, 3> view_grads{&out.grads.text, &out.grads.diffusion, &out.grads.fused};
  for (std::size_t v = 0; v < 3; ++v) {
    const LossOutput nce = symmetric_info_nce(*views[v], batch.target, batch.positives, taus[v], hp.eps_smooth);
    double view_value = nce.value;
    add_scaled(*view_grads[v], nce.grad_u, alphas[v]);
    add_scaled(out.grads.target, nce.grad_v, alphas[v]);
    out.terms.emplace_back(std::string("nce_") + tags[v], nce.value);
    if (hp.lambda_h != 0.0) {
      const LossOutput hnm = hnm_loss(*views[v], batch.target, batch.positives, static_cast<std::size_t>(hp.K),
                                      hp.margin_m, hp.tau_h);
      view_value += hp.lambda_h * hnm.value;
      add_scaled(*view_grads[v], hnm.grad_u, alphas[v] * hp.lambda_h);
      add_scaled(out.grads.target, hnm.grad_v, alphas[v] * hp.lambda_h);
      out.terms.emplace_back(std::string("hnm_") + tags[v], hnm.value);
    }
    out.value += alphas[v] * view_value;
    out.grad_alpha_raw[v] = view_value * sigmoid(weights.raw[v]);
  }
  out.terms.emplace_back("align", out.value);
  return out;
}

BatchLoss consistency_loss(const ViewBatch& batch, const LossHyperParams& hp) {
  batch.validate();
  const LossOutput nce = symmetric_info_nce(batch.text, batch.diffusion, PositiveTable::identity(batch.size()),
                                            hp.tau_TD, hp.eps_smooth);
  BatchLoss out;
  out.value = nce.value;
  out.grads = ViewGrads::zeros_like(batch);
  out.grads.text = nce.grad_u;
  out.grads.diffusion = nce.grad_v;
  out.terms.emplace_back("cons", nce.value);
  return out;
}

BatchLoss distribution_loss(const ViewBatch& batch, const LossHyperParams& hp) {
  batch.validate();
  require_positive_tau(hp.tau_T, "tau_T");
  require_positive_tau(hp.tau_D, "tau_D");
  Matrix scores_t, scores_d;
  const Matrix p_t = softmax_rows(batch.text, batch.target, hp.tau_T, scores_t);
  const Matrix p_d = softmax_rows(batch.diffusion, batch.target, hp.tau_D, scores_d);
  const LossOutput js = js_agreement(p_t, p_d);

  LossOutput via_text, via_diff;
  backprop_similarity(softmax_rows_backward(p_t, js.grad_u, hp.tau_T), batch.text, batch.target, via_text);
  backprop_similarity(softmax_rows_backward(p_d, js.grad_v, hp.tau_D), batch.diffusion, batch.target, via_diff);

  BatchLoss out;
  out.value = js.value;
  out.grads = ViewGrads::zeros_like(batch);
  out.grads.text = via_text.grad_u;
  out.grads.diffusion = via_diff.grad_u;
  out.grads.target = via_text.grad_v;
  add_scaled(out.grads.target, via_diff.grad_v, 1.0);
  out.terms.emplace_back("dist", js.value);
  return out;
}

BatchLoss total_loss(const ViewBatch& batch, const LossHyperParams& hp, const ViewWeights& weights) {
  BatchLoss out = alignment_loss(batch, hp, weights);
  auto absorb = [&out](const BatchLoss& part, double beta) {
    out.value += beta * part.value;
    add_scaled(out.grads.text, part.grads.text, beta);
    add_scaled(out.grads.diffusion, part.grads.diffusion, beta);
    add_scaled(out.grads.fused, part.grads.fused, beta);
    add_scaled(out.grads.target, part.grads.target, beta);
    out.terms.insert(out.terms.end(), part.terms.begin(), part.terms.end());
  };
  if (hp.beta_cons != 0.0) absorb(consistency_loss(batch, hp), hp.beta_cons);
  if (hp.beta_dist != 0.0) absorb(distribution_loss(batch, hp), hp.beta_dist);
  out.terms.emplace_back("total", out.value);
  return out;
}

}  // namespace dmcl::losses
