#pragma once

// Synthetic regression designs: X = U D V^T with Haar U (n x d), V (d x d)
// and exponentially decaying singular values D_kk = 0.99^{k/2}.

#include "dsnewton/objectives.hpp"
#include "dsnewton/random.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace dsnewton {

struct SyntheticData {
  Dataset data;
  Vector theta_star;
};

inline Vector exponential_singular_values(Eigen::Index d, double base = 0.99) {
  Vector s(d);
  for (Eigen::Index k = 0; k < d; ++k) s[k] = std::pow(base, 0.5 * static_cast<double>(k + 1));
  return s;
}

inline Matrix synth_design(Eigen::Index n, Eigen::Index d, Rng& rng) {
  if (d < 1) throw std::invalid_argument("synthetic design: d must be positive");
  if (n < d) throw std::invalid_argument("synthetic design: need n >= d");
  const Matrix u = haar_orthonormal(n, d, rng);
  const Matrix v = haar_orthonormal(d, d, rng);
  return u * exponential_singular_values(d).asDiagonal() * v.transpose();
}

/// y = X theta* + N(0, noise_variance), theta* ~ N(0, I).
inline SyntheticData synth_ridge(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double noise_variance = 0.01) {
  Rng rng(seed);
  Matrix x = synth_design(n, d, rng);
  Vector theta = gaussian_matrix(d, 1, rng);
  Vector y = x * theta + gaussian_matrix(n, 1, rng, std::sqrt(noise_variance));
  return {{std::move(x), std::move(y)}, std::move(theta)};
}

/// y = (sign(x^T theta* + N(0, noise_variance)) + 1) / 2, with sign(0) = +1.
inline SyntheticData synth_logistic(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double noise_variance = 1e4) {
  Rng rng(seed);
  Matrix x = synth_design(n, d, rng);
  Vector theta = gaussian_matrix(d, 1, rng);
  const Vector latent = x * theta + gaussian_matrix(n, 1, rng, std::sqrt(noise_variance));
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = latent[i] >= 0.0 ? 1.0 : 0.0;
  return {{std::move(x), std::move(y)}, std::move(theta)};
}

}  // namespace dsnewton
