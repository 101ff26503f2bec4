#include "dmcl/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dmcl {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonPositiveTemperature: return "NonPositiveTemperature";
    case Errc::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case Errc::EmptyPositiveRow: return "EmptyPositiveRow";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NegativeRatio: return "NegativeRatio";
    case Errc::RoundOutOfRange: return "RoundOutOfRange";
    case Errc::StageFailure: return "StageFailure";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::MissingTarget: return "MissingTarget";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyModes: return "EmptyModes";
  }
  return "Unknown";
}

Matrix Matrix::from_rows(const std::vector<Embedding>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw Error(Errc::DimensionMismatch, "ragged rows in Matrix::from_rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::DimensionMismatch,
                "dot of lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Embedding l2_normalize(std::span<const double> v, double epsilon) {
  const double n = norm(v);
  if (n <= epsilon) throw Error(Errc::ZeroVector, "cannot normalize vector with norm " + std::to_string(n));
  Embedding out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Embedding l2_normalize_backward(std::span<const double> v, std::span<const double> upstream) {
  if (v.size() != upstream.size()) throw Error(Errc::DimensionMismatch, "l2_normalize_backward");
  const double n = norm(v);
  if (n <= kZeroEpsilon) throw Error(Errc::ZeroVector, "l2_normalize_backward of zero vector");
  double yg = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) yg += v[i] / n * upstream[i];
  Embedding g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = (upstream[i] - v[i] / n * yg) / n;
  return g;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > kZeroEpsilon) || !(nb > kZeroEpsilon)) throw Error(Errc::ZeroVector, "cosine of zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> softmax_tau(std::span<const double> scores, double tau) {
  if (!(tau > 0.0)) throw Error(Errc::NonPositiveTemperature, "tau = " + std::to_string(tau));
  if (scores.empty()) throw Error(Errc::InvalidArgument, "softmax of empty scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp((scores[i] - mx) / tau);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

double softplus(double x) noexcept {
  // log(1 + e^x) without overflow for large |x|.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw Error(Errc::InvalidArgument, "softplus_inverse needs y > 0");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t Rng::next_u64() noexcept {
  std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= threshold) return x % bound;
  }
}

Rng Rng::split(std::uint64_t stream) const noexcept {
  Rng mixer(seed_ ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  return Rng(mixer.next_u64());
}

Embedding gaussian_vector(Rng& rng, std::size_t dim, double stddev) {
  Embedding v(dim);
  for (double& x : v) x = stddev * rng.normal();
  return v;
}

double grad_check(const DiffFn& f, std::span<const double> point, double step) {
  if (!(step > 0.0)) throw Error(Errc::InvalidArgument, "grad_check step must be positive");
  std::vector<double> analytic;
  const double f0 = f(point, &analytic);
  if (!std::isfinite(f0) || !all_finite(analytic)) {
    throw Error(Errc::NonFiniteEvaluation, "non-finite value or gradient at the check point");
  }
  if (analytic.size() != point.size()) throw Error(Errc::DimensionMismatch, "gradient length != point length");

  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f(x, nullptr);
    x[i] = saved - step;
    const double fm = f(x, nullptr);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(Errc::NonFiniteEvaluation, "non-finite value at coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace dmcl
