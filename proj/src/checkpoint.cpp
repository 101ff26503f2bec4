#include "dmcl/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dmcl/error.hpp"

namespace dmcl {

namespace {
constexpr const char* kMagic = "DMCLCKPT v1";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoFailure, "rename to " + path.string() + ": " + ec.message());
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::string out = std::string(kMagic) + "\n";
  char buf[32];
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos) {
      throw Error(Errc::InvalidArgument, "tensor name must be a single non-empty token");
    }
    if (t.values.size() != t.rows * t.cols) throw Error(Errc::DimensionMismatch, "tensor " + t.name);
    out += "tensor " + t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", t.values[r * t.cols + c]);
        if (c) out += ' ';
        out += buf;
      }
      out += '\n';
    }
  }
  write_file_atomic(path, out);
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw Error(Errc::MalformedHeader, path.string() + ": missing '" + kMagic + "' header");
  }
  std::vector<NamedTensor> tensors;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string tag;
    NamedTensor t;
    if (!(head >> tag >> t.name >> t.rows >> t.cols) || tag != "tensor") {
      throw Error(Errc::MalformedHeader, path.string() + ":" + std::to_string(line_no) + ": bad tensor header");
    }
    t.values.reserve(t.rows * t.cols);
    for (std::size_t r = 0; r < t.rows; ++r) {
      if (!std::getline(in, line)) throw Error(Errc::MalformedHeader, path.string() + ": truncated tensor " + t.name);
      ++line_no;
      const char* p = line.c_str();
      for (std::size_t c = 0; c < t.cols; ++c) {
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(p, &end);
        if (end == p) {
          throw Error(Errc::MalformedHeader, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                 std::to_string(t.cols) + " values");
        }
        t.values.push_back(v);
        p = end;
      }
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace dmcl
