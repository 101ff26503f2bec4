#include "dmcl/kernels.hpp"
#include "support.hpp"

using namespace dmcl;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

struct ThreadGuard {
  int saved = kernels::threads();
  ~ThreadGuard() { kernels::set_threads(saved); }
};

}  // namespace

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  ThreadGuard guard;
  Rng rng(21);
  const Matrix a = random_matrix(300, 17, rng);
  const Matrix b = random_matrix(90, 17, rng);
  const Matrix w = random_matrix(11, 17, rng);
  const Embedding x = gaussian_vector(rng, 17);

  const Matrix sim_ref = kernels::ref::similarity(a, b);
  const auto score_ref = kernels::ref::score_corpus(a, x);
  const auto mv_ref = kernels::ref::matvec(w, x);
  const Matrix map_ref = kernels::ref::map_rows(w, a);
  for (int threads : {1, 2, 3, 4, 7}) {
    kernels::set_threads(threads);
    CHECK(kernels::similarity(a, b) == sim_ref);
    CHECK(kernels::score_corpus(a, x) == score_ref);
    CHECK(kernels::matvec(w, x) == mv_ref);
    CHECK(kernels::map_rows(w, a) == map_ref);
  }
}

TEST_CASE("kernel values") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const Matrix s = kernels::similarity(a, b);
  CHECK(s == Matrix::from_rows({{1, 2, 3}, {3, 4, 7}}));
  CHECK(kernels::score_corpus(a, std::vector<double>{1, -1}) == std::vector<double>{-1, -1});
  CHECK(kernels::matvec(a, std::vector<double>{1, 1}) == std::vector<double>{3, 7});
  CHECK(kernels::matvec_transposed(a, std::vector<double>{1, 1}) == std::vector<double>{4, 6});
  CHECK_ERRC(kernels::similarity(a, Matrix(2, 3)), Errc::DimensionMismatch);
  CHECK_ERRC(kernels::matvec(a, std::vector<double>{1}), Errc::DimensionMismatch);

  Matrix m = Matrix::from_rows({{3, 4}, {0, 2}});
  kernels::normalize_rows(m);
  CHECK(m == Matrix::from_rows({{0.6, 0.8}, {0, 1}}));
  Matrix z = Matrix::from_rows({{1, 0}, {0, 0}});
  CHECK_ERRC(kernels::normalize_rows(z), Errc::ZeroVector);
}
