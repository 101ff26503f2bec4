#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace dmcl {

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  bool operator==(const NamedTensor&) const = default;
};

// Plain-text parameter file:
//
//   DMCLCKPT v1
//   tensor <name> <rows> <cols>
//   <cols values of row 0, %.17g, space separated>
//   ...
//
// Names must not contain whitespace. Values round-trip exactly.
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace dmcl
