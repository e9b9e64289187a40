#pragma once

#include "dsnewton/matrix_kernel.hpp"

#include <cstdint>
#include <random>

namespace dsnewton {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream seed for (master, round, worker). Worker 0 is reserved for the server.
constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t round, std::uint64_t worker) noexcept {
  return mix64(mix64(mix64(master) ^ round) ^ (worker * 0xd1b54a32d192ed03ULL));
}

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// rows x cols matrix with orthonormal columns, Haar distributed (rows >= cols).
inline Matrix haar_orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  if (rows < cols) throw std::invalid_argument("haar_orthonormal: need rows >= cols");
  const Matrix g = gaussian_matrix(rows, cols, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Sign fix on R's diagonal makes the distribution exactly Haar.
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace dsnewton
