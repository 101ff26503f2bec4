#pragma once

#include <doctest.h>

#include <string>

#include "dmcl/error.hpp"
#include "dmcl/losses.hpp"
#include "dmcl/numkit.hpp"

// Checks that expr throws dmcl::Error with the given code.
#define CHECK_ERRC(expr, errc)                                        \
  do {                                                                \
    bool thrown_ = false;                                             \
    try {                                                             \
      (void)(expr);                                                   \
    } catch (const dmcl::Error& e_) {                                 \
      thrown_ = true;                                                 \
      CHECK_MESSAGE(e_.code() == (errc), std::string(dmcl::errc_name(e_.code()))); \
    }                                                                 \
    CHECK_MESSAGE(thrown_, "no dmcl::Error from " #expr);             \
  } while (0)

namespace testing {

inline dmcl::Matrix unit_rows(std::size_t n, std::size_t d, dmcl::Rng& rng) {
  dmcl::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = dmcl::l2_normalize(dmcl::gaussian_vector(rng, d));
    std::copy(z.begin(), z.end(), m.row(i).begin());
  }
  return m;
}

// Target ids drawn with replacement so some batches have multi-positive rows.
inline dmcl::losses::PositiveTable random_table(std::size_t n, dmcl::Rng& rng) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(rng.below(n)));
  return dmcl::losses::PositiveTable::from_target_ids(ids);
}

inline dmcl::losses::ViewBatch random_batch(std::size_t n, std::size_t d, dmcl::Rng& rng) {
  dmcl::losses::ViewBatch b;
  b.text = unit_rows(n, d, rng);
  b.diffusion = unit_rows(n, d, rng);
  b.fused = unit_rows(n, d, rng);
  b.target = unit_rows(n, d, rng);
  b.positives = random_table(n, rng);
  return b;
}

}  // namespace testing
