#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmcl/numkit.hpp"

namespace dmcl::losses {

/// Square 0/1 table: entry (i, j) marks (u_i, v_j) as a positive pair.
class PositiveTable {
 public:
  PositiveTable() = default;
  explicit PositiveTable(std::size_t n) : n_(n), q_(n * n, 0) {}

  static PositiveTable identity(std::size_t n);
  /// q(i, j) = 1 iff ids[i] == ids[j]; duplicate targets give multi-positive rows.
  static PositiveTable from_target_ids(std::span<const std::string> ids);

  std::size_t size() const noexcept { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return q_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool positive) { q_[i * n_ + j] = positive ? 1 : 0; }

  std::size_t row_count(std::size_t i) const;
  PositiveTable transposed() const;
  /// Throws EmptyPositiveRow naming the first row without a positive.
  void validate_rows() const;

  bool operator==(const PositiveTable&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> q_;
};

/// Scalar loss with gradients for the two embedding blocks it consumed.
struct LossOutput {
  double value = 0.0;
  Matrix grad_u;
  Matrix grad_v;
};

struct LossHyperParams {
  double tau_T = 0.07;
  double tau_D = 0.07;
  double tau_F = 0.07;
  double tau_TD = 0.07;
  double eps_smooth = 0.1;
  int K = 4;
  double margin_m = 0.2;
  double tau_h = 0.05;
  double lambda_h = 0.5;
  double beta_cons = 1.0;
  double beta_dist = 0.5;

  /// Throws InvalidConfig when any range constraint fails.
  void validate() const;
};

/// Unit-norm embeddings for one minibatch. Row i of every block belongs to instance i.
struct ViewBatch {
  Matrix text;
  Matrix diffusion;
  Matrix fused;
  Matrix target;
  PositiveTable positives;

  std::size_t size() const noexcept { return target.rows(); }
  void validate() const;
};

struct ViewGrads {
  Matrix text;
  Matrix diffusion;
  Matrix fused;
  Matrix target;

  static ViewGrads zeros_like(const ViewBatch& b);
};

/// View weights alpha = softplus(raw), ordered text, diffusion, fused.
struct ViewWeights {
  std::array<double, 3> raw{};

  /// raw chosen so that every alpha is exactly softplus(raw) = 1.
  static ViewWeights unit();
  static ViewWeights from_alphas(const std::array<double, 3>& alphas);
  std::array<double, 3> alphas() const;
};

struct BatchLoss {
  double value = 0.0;
  ViewGrads grads;
  /// d value / d raw alpha (zero for losses that do not use the weights).
  std::array<double, 3> grad_alpha_raw{};
  /// Named sub-terms in evaluation order, e.g. ("nce_T", x), ("align", y).
  std::vector<std::pair<std::string, double>> terms;
};

// Pairwise terms.

/// -cos(gen, text). grad_u is d/d gen (1 x d), grad_v is d/d text.
LossOutput cosine_align_loss(std::span<const double> gen, std::span<const double> text);

/// Single-direction InfoNCE with diagonal positives: mean_i -log softmax_j(q_i.k_j / tau)[i].
LossOutput info_nce_single(const Matrix& q, const Matrix& k, double tau);

/// Row-normalized positives mixed with the uniform distribution: (1-eps) q_hat + eps/N.
/// eps = 1 is accepted as the fully smoothed limit.
Matrix smooth_targets(const PositiveTable& q, double eps);

/// Bidirectional multi-positive InfoNCE. The u->v direction uses smoothed rows of q,
/// the v->u direction smoothed rows of q^T.
LossOutput symmetric_info_nce(const Matrix& u, const Matrix& v, const PositiveTable& q, double tau,
                              double eps);

/// Top-K negatives by similarity; ties go to the lower index. Result is in rank order.
std::vector<std::size_t> mine_hard_negatives(std::span<const double> anchor_sims,
                                             std::span<const std::size_t> negatives, std::size_t k);

/// Symmetric soft-ranking margin loss over mined hard negatives, against the mean
/// positive similarity. Mined sets are held fixed when differentiating.
LossOutput hnm_loss(const Matrix& u, const Matrix& v, const PositiveTable& q, std::size_t k,
                    double margin, double tau_h);

/// Mean row-wise Jensen-Shannon divergence (natural log). grad_u is d/dP, grad_v is d/dQ.
LossOutput js_agreement(const Matrix& p, const Matrix& q);

// Batch objectives.

BatchLoss alignment_loss(const ViewBatch& batch, const LossHyperParams& hp, const ViewWeights& weights);

/// Feature-level text/diffusion InfoNCE with identity positives at tau_TD.
BatchLoss consistency_loss(const ViewBatch& batch, const LossHyperParams& hp);

/// JS agreement between the text and diffusion retrieval distributions over batch targets,
/// differentiated through both softmaxes.
BatchLoss distribution_loss(const ViewBatch& batch, const LossHyperParams& hp);

/// align + beta_cons * cons + beta_dist * dist. Terms whose weight is zero are skipped.
BatchLoss total_loss(const ViewBatch& batch, const LossHyperParams& hp, const ViewWeights& weights);

}  // namespace dmcl::losses
