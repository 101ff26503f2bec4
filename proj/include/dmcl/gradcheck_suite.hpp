#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dmcl {

struct GradCheckEntry {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
};

/// Finite-difference checks of every loss gradient and both encoder backwards on random
/// small problems (d <= 16, N <= 5). Instance i of each check uses seed first_seed + i.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t first_seed = 0, std::size_t instances = 20);

}  // namespace dmcl
