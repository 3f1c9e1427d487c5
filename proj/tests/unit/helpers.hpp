#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "nirom/linalg.hpp"

namespace testing {

/// Small seeded generator for property tests (xorshift64*), independent of
/// the library's own RNG.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull) {
    if (s_ == 0) s_ = 1;
  }
  std::uint64_t next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545F4914F6CDD1Dull;
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  long range(long lo, long hi) { return lo + static_cast<long>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  nirom::Matrix matrix(nirom::Index rows, nirom::Index cols, double lo = -1.0, double hi = 1.0) {
    nirom::Matrix m(rows, cols);
    for (nirom::Index j = 0; j < cols; ++j)
      for (nirom::Index i = 0; i < rows; ++i) m(i, j) = uniform(lo, hi);
    return m;
  }

 private:
  std::uint64_t s_;
};

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nirom_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nirom::Vector uniform_times(nirom::Index m, double t0 = 0.0, double dt = 1.0) {
  nirom::Vector t(m);
  for (nirom::Index k = 0; k < m; ++k) t[k] = t0 + static_cast<double>(k) * dt;
  return t;
}

}  // namespace testing
