#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dmcl/error.hpp"

namespace dmcl {

/// Norms at or below this are treated as zero everywhere in the library.
inline constexpr double kZeroEpsilon = 1e-12;

using Embedding = std::vector<double>;

/// Dense row-major matrix. Rows are embeddings of a batch or a weight matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<Embedding>& rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Vector kernels. All lengths must agree or DimensionMismatch is thrown.
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
Embedding l2_normalize(std::span<const double> v, double epsilon = kZeroEpsilon);
double cosine(std::span<const double> a, std::span<const double> b);

/// Backward of y = v / |v|: returns (g - y (y.g)) / |v|.
Embedding l2_normalize_backward(std::span<const double> v, std::span<const double> upstream);

/// Row softmax of scores / tau with max subtraction.
std::vector<double> softmax_tau(std::span<const double> scores, double tau);

double softplus(double x) noexcept;
double sigmoid(double x) noexcept;
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

bool all_finite(std::span<const double> v) noexcept;

/// Deterministic counter-based generator (SplitMix64 finalizer over seed + counter).
/// Gaussian draws use the Box-Muller transform, consuming two uniforms per pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Independent stream derived from this generator's seed.
  Rng split(std::uint64_t stream) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Embedding gaussian_vector(Rng& rng, std::size_t dim, double stddev = 1.0);

/// Scalar function of a flat parameter vector. When grad is non-null it must be
/// filled with the analytic gradient (resized by the callee).
using DiffFn = std::function<double(std::span<const double> x, std::vector<double>* grad)>;

/// Central-difference check of an analytic gradient. Returns
/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
double grad_check(const DiffFn& f, std::span<const double> point, double step = 1e-5);

}  // namespace dmcl
