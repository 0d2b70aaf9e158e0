#pragma once

#include "drlqg/divergence.hpp"

#include <cstdint>

namespace drlqg {

// Counter-based substreams: substream(master, k) yields a stream that is
// bit-reproducible regardless of evaluation order, so parallel and serial
// Monte-Carlo runs agree exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Box-Muller.
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline Rng substream(std::uint64_t master, std::uint64_t index) {
  // One splitmix step decorrelates (master, index) pairs.
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

inline Vector sample_standard_normal(int dim, Rng& rng) {
  Vector z(dim);
  for (int i = 0; i < dim; ++i) z[i] = rng.normal();
  return z;
}

// Caches the Cholesky factor so repeated trials pay one factorization.
class GaussianSampler {
 public:
  explicit GaussianSampler(const GaussianBlock& block)
      : mean_(block.mean), chol_(block.cov.llt().matrixL()) {}

  Vector draw(Rng& rng) const {
    return mean_ + chol_ * sample_standard_normal(static_cast<int>(mean_.size()), rng);
  }

 private:
  Vector mean_;
  Matrix chol_;
};

}  // namespace drlqg
