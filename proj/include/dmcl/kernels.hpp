#pragma once

#include <span>
#include <vector>

#include "dmcl/numkit.hpp"

// Data-parallel inner loops. Every parallel kernel writes each output element from
// exactly one thread with a fixed inner summation order, so results are bit-identical
// to the serial reference in dmcl::kernels::ref for any thread count.
namespace dmcl::kernels {

/// S(i, j) = a_i . b_j
Matrix similarity(const Matrix& a, const Matrix& b);

/// scores[r] = corpus_r . query
std::vector<double> score_corpus(const Matrix& corpus, std::span<const double> query);

/// y = W x
std::vector<double> matvec(const Matrix& w, std::span<const double> x);

/// y = W^T x
std::vector<double> matvec_transposed(const Matrix& w, std::span<const double> x);

/// Rows of x mapped through W: out_i = W x_i.
Matrix map_rows(const Matrix& w, const Matrix& x);

/// Normalizes every row in place; throws ZeroVector on a vanishing row.
void normalize_rows(Matrix& m);

/// Thread cap used by every kernel; 1 by default.
void set_threads(int n);
int threads();

namespace ref {
Matrix similarity(const Matrix& a, const Matrix& b);
std::vector<double> score_corpus(const Matrix& corpus, std::span<const double> query);
std::vector<double> matvec(const Matrix& w, std::span<const double> x);
Matrix map_rows(const Matrix& w, const Matrix& x);
}  // namespace ref

}  // namespace dmcl::kernels
