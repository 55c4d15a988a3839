#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ktts/types.hpp"

namespace ktts {

// Seeded random source with a fixed draw algorithm, so that sequences are
// reproducible across platforms and standard libraries. (std::normal_distribution
// and std::shuffle leave their algorithms unspecified; we avoid both.)
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1).
  Scalar uniform() {
    return static_cast<Scalar>(eng_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller, one cached mate per pair.
  Scalar normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    Scalar u1 = 1.0 - uniform();  // (0, 1]
    Scalar u2 = uniform();
    Scalar r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, bound).
  uint64_t integer(uint64_t bound) {
    // Rejection sampling keeps the draw unbiased.
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return v % bound;
  }

  // Column-major fill of standard normals.
  Mat normal_mat(Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  Mat uniform_mat(Index rows, Index cols, Scalar lo, Scalar hi) {
    Mat m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = lo + (hi - lo) * uniform();
    return m;
  }

  // Fisher-Yates shuffle with our own bounded draw.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  Scalar spare_ = 0.0;
};

}  // namespace ktts
