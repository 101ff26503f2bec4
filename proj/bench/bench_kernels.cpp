// Serial reference vs OpenMP kernels. Usage: dmcl_bench [threads] [repeats]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "dmcl/kernels.hpp"
#include "dmcl/numkit.hpp"

using namespace dmcl;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

double best_ms(const std::function<void()>& fn, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double ref_ms, double par_ms, bool same) {
  std::printf("%-14s ref %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, ref_ms, par_ms, ref_ms / par_ms,
              same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : 4;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
  kernels::set_threads(threads);
  std::printf("threads %d, best of %d\n", kernels::threads(), repeats);

  Rng rng(1);
  const Matrix corpus = random_matrix(20000, 256, rng);
  const Matrix queries = random_matrix(256, 256, rng);
  const Matrix w = random_matrix(256, 256, rng);
  const Embedding q = gaussian_vector(rng, 256);

  std::vector<double> a, b;
  const double r1 = best_ms([&] { a = kernels::ref::score_corpus(corpus, q); }, repeats);
  const double p1 = best_ms([&] { b = kernels::score_corpus(corpus, q); }, repeats);
  report("score_corpus", r1, p1, a == b);

  Matrix sa, sb;
  const double r2 = best_ms([&] { sa = kernels::ref::similarity(queries, corpus); }, repeats);
  const double p2 = best_ms([&] { sb = kernels::similarity(queries, corpus); }, repeats);
  report("similarity", r2, p2, sa == sb);

  Matrix ma, mb;
  const double r3 = best_ms([&] { ma = kernels::ref::map_rows(w, corpus); }, repeats);
  const double p3 = best_ms([&] { mb = kernels::map_rows(w, corpus); }, repeats);
  report("map_rows", r3, p3, ma == mb);
  return 0;
}
