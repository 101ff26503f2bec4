#include "dmcl/kernels.hpp"

#include <omp.h>

#include <string>

namespace dmcl::kernels {

namespace {

int g_threads = 1;

void check_cols(const Matrix& a, std::size_t n, const char* what) {
  if (a.cols() != n) {
    throw Error(Errc::DimensionMismatch, std::string(what) + ": expected " + std::to_string(n) +
                                             " columns, got " + std::to_string(a.cols()));
  }
}

inline double row_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }
int threads() { return g_threads; }

Matrix similarity(const Matrix& a, const Matrix& b) {
  check_cols(b, a.cols(), "similarity");
  Matrix s(a.rows(), b.rows());
  const auto n = static_cast<long>(a.rows() * b.rows());
  const std::size_t nb = b.rows();
  const std::size_t d = a.cols();
#pragma omp parallel for num_threads(g_threads) schedule(static) if (n > 4096)
  for (long idx = 0; idx < n; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx) / nb;
    const std::size_t j = static_cast<std::size_t>(idx) % nb;
    s(i, j) = row_dot(a.row(i).data(), b.row(j).data(), d);
  }
  return s;
}

std::vector<double> score_corpus(const Matrix& corpus, std::span<const double> query) {
  check_cols(corpus, query.size(), "score_corpus");
  std::vector<double> scores(corpus.rows());
  const auto n = static_cast<long>(corpus.rows());
#pragma omp parallel for num_threads(g_threads) schedule(static) if (n > 512)
  for (long r = 0; r < n; ++r) {
    scores[r] = row_dot(corpus.row(r).data(), query.data(), query.size());
  }
  return scores;
}

std::vector<double> matvec(const Matrix& w, std::span<const double> x) {
  check_cols(w, x.size(), "matvec");
  std::vector<double> y(w.rows());
  const auto n = static_cast<long>(w.rows());
#pragma omp parallel for num_threads(g_threads) schedule(static) if (n * static_cast<long>(x.size()) > 65536)
  for (long r = 0; r < n; ++r) y[r] = row_dot(w.row(r).data(), x.data(), x.size());
  return y;
}

std::vector<double> matvec_transposed(const Matrix& w, std::span<const double> x) {
  if (w.rows() != x.size()) throw Error(Errc::DimensionMismatch, "matvec_transposed");
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    const auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) y[c] += row[c] * xr;
  }
  return y;
}

Matrix map_rows(const Matrix& w, const Matrix& x) {
  check_cols(x, w.cols(), "map_rows");
  Matrix out(x.rows(), w.rows());
  const auto n = static_cast<long>(x.rows() * w.rows());
  const std::size_t nw = w.rows();
  const std::size_t d = w.cols();
#pragma omp parallel for num_threads(g_threads) schedule(static) if (n * static_cast<long>(d) > 65536)
  for (long idx = 0; idx < n; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx) / nw;
    const std::size_t o = static_cast<std::size_t>(idx) % nw;
    out(i, o) = row_dot(w.row(o).data(), x.row(i).data(), d);
  }
  return out;
}

void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const Embedding unit = l2_normalize(m.row(r));
    std::copy(unit.begin(), unit.end(), m.row(r).begin());
  }
}

namespace ref {

Matrix similarity(const Matrix& a, const Matrix& b) {
  check_cols(b, a.cols(), "ref::similarity");
  Matrix s(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      s(i, j) = acc;
    }
  return s;
}

std::vector<double> score_corpus(const Matrix& corpus, std::span<const double> query) {
  check_cols(corpus, query.size(), "ref::score_corpus");
  std::vector<double> scores(corpus.rows());
  for (std::size_t r = 0; r < corpus.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) acc += corpus(r, k) * query[k];
    scores[r] = acc;
  }
  return scores;
}

std::vector<double> matvec(const Matrix& w, std::span<const double> x) {
  check_cols(w, x.size(), "ref::matvec");
  std::vector<double> y(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += w(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

Matrix map_rows(const Matrix& w, const Matrix& x) {
  check_cols(x, w.cols(), "ref::map_rows");
  Matrix out(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) acc += w(o, c) * x(i, c);
      out(i, o) = acc;
    }
  return out;
}

}  // namespace ref

}  // namespace dmcl::kernels
