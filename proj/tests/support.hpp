#pragma once

#include "dsnewton/matrix_kernel.hpp"
#include "dsnewton/random.hpp"

namespace dsnewton::testkit {

inline Matrix random_symmetric(Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix a = gaussian_matrix(d, d, rng);
  return 0.5 * (a + a.transpose());
}

/// A^T A / k with A k x d Gaussian; rank min(k, d).
inline Matrix random_psd(Eigen::Index d, std::uint64_t seed, Eigen::Index k = 0) {
  Rng rng(seed);
  if (k == 0) k = d;
  const Matrix a = gaussian_matrix(k, d, rng);
  return a.transpose() * a / static_cast<double>(k);
}

inline double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace dsnewton::testkit
