#pragma once

// Naive reference evaluators. They share no code with the library beyond Matrix storage:
// every pairwise term is materialized, logs and exps are taken directly, and TopK uses a
// full sort.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dmcl/losses.hpp"
#include "dmcl/numkit.hpp"

namespace oracle {

using dmcl::Matrix;
using dmcl::losses::PositiveTable;

inline double dot(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
  return s;
}

// p[i][j] = exp(s_ij / tau) / sum_l exp(s_il / tau)
inline std::vector<std::vector<double>> probs(const Matrix& u, const Matrix& v, double tau) {
  const std::size_t n = u.rows();
  std::vector<std::vector<double>> p(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t l = 0; l < n; ++l) z += std::exp(dot(u, i, v, l) / tau);
    for (std::size_t j = 0; j < n; ++j) p[i][j] = std::exp(dot(u, i, v, j) / tau) / z;
  }
  return p;
}

inline double info_nce_single(const Matrix& q, const Matrix& k, double tau) {
  const auto p = oracle::probs(q, k, tau);
  double sum = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) sum += -std::log(p[i][i]);
  return sum / static_cast<double>(q.rows());
}

inline std::vector<std::vector<double>> q_tilde(const PositiveTable& q, double eps) {
  const std::size_t n = q.size();
  std::vector<std::vector<double>> t(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double count = 0.0;
    for (std::size_t j = 0; j < n; ++j) count += q(i, j) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double q_hat = q(i, j) ? 1.0 / count : 0.0;
      t[i][j] = (1.0 - eps) * q_hat + eps / static_cast<double>(n);
    }
  }
  return t;
}

// -(1/2N) (sum_ij qt_ij log p_ij + sum_ij qtT_ij log pvu_ij), the reverse direction using
// smoothed rows of q^T.
inline double symmetric_info_nce(const Matrix& u, const Matrix& v, const PositiveTable& q, double tau, double eps) {
  const std::size_t n = u.rows();
  const auto puv = oracle::probs(u, v, tau);
  const auto pvu = oracle::probs(v, u, tau);
  PositiveTable qt(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) qt.set(i, j, q(j, i));
  const auto a = q_tilde(q, eps);
  const auto b = q_tilde(qt, eps);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sum += a[i][j] * std::log(puv[i][j]) + b[i][j] * std::log(pvu[i][j]);
  return -sum / (2.0 * static_cast<double>(n));
}

inline std::vector<std::size_t> top_k(const std::vector<double>& sims, const std::vector<std::size_t>& negatives,
                                      std::size_t k) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t j : negatives) order.emplace_back(-sims[j], j);
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < std::min(k, order.size()); ++t) out.push_back(order[t].second);
  return out;
}

inline double hnm_one_direction(const Matrix& u, const Matrix& v, const PositiveTable& q, std::size_t k,
                                double m, double tau_h) {
  const std::size_t n = u.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sims(n);
    std::vector<std::size_t> neg;
    double s_pos = 0.0, n_pos = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      sims[j] = dot(u, i, v, j);
      if (q(i, j)) {
        s_pos += sims[j];
        n_pos += 1.0;
      } else {
        neg.push_back(j);
      }
    }
    s_pos /= n_pos;
    const auto hard = top_k(sims, neg, k);
    if (hard.empty()) continue;
    double row = 0.0;
    for (std::size_t j : hard) row += std::log(1.0 + std::exp((sims[j] - s_pos + m) / tau_h));
    total += row / static_cast<double>(hard.size());
  }
  return total / static_cast<double>(n);
}

inline double hnm(const Matrix& u, const Matrix& v, const PositiveTable& q, std::size_t k, double m, double tau_h) {
  PositiveTable qt(q.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j) qt.set(i, j, q(j, i));
  return 0.5 * (oracle::hnm_one_direction(u, v, q, k, m, tau_h) + oracle::hnm_one_direction(v, u, qt, k, m, tau_h));
}

inline double js_row(const std::vector<double>& p, const std::vector<double>& q) {
  double js = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double mid = 0.5 * (p[j] + q[j]);
    if (p[j] > 0.0) js += 0.5 * p[j] * std::log(p[j] / mid);
    if (q[j] > 0.0) js += 0.5 * q[j] * std::log(q[j] / mid);
  }
  return js;
}

inline double js(const Matrix& p, const Matrix& q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::vector<double> a(p.row(i).begin(), p.row(i).end()), b(q.row(i).begin(), q.row(i).end());
    sum += oracle::js_row(a, b);
  }
  return sum / static_cast<double>(p.rows());
}

inline double softplus(double x) { return std::log(1.0 + std::exp(x)); }

inline double alignment(const dmcl::losses::ViewBatch& b, const dmcl::losses::LossHyperParams& hp,
                        const std::array<double, 3>& raw) {
  const Matrix* views[3] = {&b.text, &b.diffusion, &b.fused};
  const double taus[3] = {hp.tau_T, hp.tau_D, hp.tau_F};
  double total = 0.0;
  for (int v = 0; v < 3; ++v) {
    double term = oracle::symmetric_info_nce(*views[v], b.target, b.positives, taus[v], hp.eps_smooth);
    if (hp.lambda_h != 0.0)
      term += hp.lambda_h * oracle::hnm(*views[v], b.target, b.positives, static_cast<std::size_t>(hp.K), hp.margin_m, hp.tau_h);
    total += softplus(raw[v]) * term;
  }
  return total;
}

inline double distribution(const dmcl::losses::ViewBatch& b, const dmcl::losses::LossHyperParams& hp) {
  const auto pt = oracle::probs(b.text, b.target, hp.tau_T);
  const auto pd = oracle::probs(b.diffusion, b.target, hp.tau_D);
  double sum = 0.0;
  for (std::size_t i = 0; i < pt.size(); ++i) sum += oracle::js_row(pt[i], pd[i]);
  return sum / static_cast<double>(pt.size());
}

inline double total(const dmcl::losses::ViewBatch& b, const dmcl::losses::LossHyperParams& hp,
                    const std::array<double, 3>& raw) {
  return oracle::alignment(b, hp, raw) +
         hp.beta_cons * oracle::symmetric_info_nce(b.text, b.diffusion, PositiveTable::identity(b.size()), hp.tau_TD,
                                           hp.eps_smooth) +
         hp.beta_dist * oracle::distribution(b, hp);
}

// 1-based rank of `target` after a full sort by (score desc, id asc).
inline std::size_t rank_of(const std::vector<double>& scores, const std::vector<std::string>& ids, std::size_t target) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && ids[a] < ids[b]);
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

}  // namespace oracle
