#pragma once

#include <cstdint>
#include <random>

#include "riccati_lab/common.hpp"

namespace riccati_lab {

/// splitmix64 finalizer. Sub-seeds for probe `i` of a run seeded with `s`
/// are `splitmix64(s ^ splitmix64(i + 1))`, so every probe owns an
/// independent stream regardless of scheduling.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  double uniform(double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(engine_);
  }

  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gaussian();
    return m;
  }

  /// Standard Gaussian, then normalized (rotation invariant on the sphere).
  Vector unit_vector(Eigen::Index n) {
    Vector v = gaussian_matrix(n, 1);
    double norm = v.norm();
    while (norm == 0.0) {
      v = gaussian_matrix(n, 1);
      norm = v.norm();
    }
    return v / norm;
  }

  Matrix symmetric_matrix(Eigen::Index n) { return symmetrize(gaussian_matrix(n, n)); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace riccati_lab
