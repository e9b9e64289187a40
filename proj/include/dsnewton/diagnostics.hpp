#pragma once

// Experiment-grade measurements. All of these densify d x d matrices and are
// meant for desk-scale dimensions (d <= kMaxDenseDim).

#include "dsnewton/calibration.hpp"
#include "dsnewton/newton_solver.hpp"
#include "dsnewton/parallel.hpp"
#include "dsnewton/random.hpp"
#include "dsnewton/sketching.hpp"
#include "dsnewton/worker_pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dsnewton {

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> xs, double pct) {
  if (xs.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = pct / 100.0 * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return percentile(std::move(xs), 50.0); }

struct SummaryStats {
  double p20 = 0.0;
  double median = 0.0;
  double p80 = 0.0;

  static SummaryStats of(const std::vector<double>& xs) {
    return {percentile(xs, 20.0), percentile(xs, 50.0), percentile(xs, 80.0)};
  }
};

namespace detail {
inline void require_dense_size(Eigen::Index d, const char* where) {
  if (d > kMaxDenseDim)
    throw std::invalid_argument(std::string(where) + ": d exceeds the dense diagnostics limit of " +
                                std::to_string(kMaxDenseDim));
}
}  // namespace detail

namespace detail {
/// Factor A = D V^T of H = V D^2 V^T with Haar V, given the eigenvalues D^2.
inline HessianView rotated_factor(const Vector& eigenvalues, Rng& rng) {
  const Eigen::Index d = eigenvalues.size();
  const Matrix v = haar_orthonormal(d, d, rng);
  return HessianView::factored(eigenvalues.cwiseSqrt().asDiagonal() * v.transpose());
}
}  // namespace detail

/// Random test Hessians. H = X^T X with X = U D V^T reduces to V D^2 V^T, so
/// only the right singular vectors are sampled.
struct Ensemble {
  HessianView hessian;
  double lambda;
};

/// (L): D_kk = (0.9 + eps_k)^{k/2}, eps_k ~ N(0, 1e-4), lambda = 1e-3.
inline Ensemble ensemble_l(Eigen::Index d, std::uint64_t seed) {
  detail::require_dense_size(d, "ensemble_l");
  Rng rng(seed);
  std::normal_distribution<double> eps(0.0, 1e-2);
  Vector ev(d);
  for (Eigen::Index k = 0; k < d; ++k) ev[k] = std::pow(0.9 + eps(rng), static_cast<double>(k + 1));
  return {detail::rotated_factor(ev, rng), 1e-3};
}

/// (R): D_kk = (k/d)^2, lambda = 1e-5.
inline Ensemble ensemble_r(Eigen::Index d, std::uint64_t seed) {
  detail::require_dense_size(d, "ensemble_r");
  Rng rng(seed);
  Vector ev(d);
  for (Eigen::Index k = 0; k < d; ++k) ev[k] = std::pow(static_cast<double>(k + 1) / static_cast<double>(d), 4.0);
  return {detail::rotated_factor(ev, rng), 1e-5};
}

struct BiasPoint {
  Eigen::Index m = 0;
  std::vector<double> corrected;    ///< per trial |W_bar - W|_F^2 / d^2
  std::vector<double> uncorrected;  ///< same sketches, lambda_hat := lambda
  std::vector<double> mean_lambda_hat;
};

/// Bias proxy of the averaged estimator for `trials` independent rounds of q
/// workers. Corrected and uncorrected variants share the sketches.
inline BiasPoint bias_proxy(const HessianView& h, double lambda, Eigen::Index m, int q, SketchDistribution dist,
                            int trials, std::uint64_t seed, unsigned threads = 0) {
  const Eigen::Index d = h.dim();
  detail::require_dense_size(d, "bias_proxy");
  Matrix w = h.densify().dense();
  w.diagonal().array() += lambda;
  w = w.llt().solve(Matrix::Identity(d, d));

  BiasPoint out;
  out.m = m;
  out.corrected.assign(static_cast<std::size_t>(trials), 0.0);
  out.uncorrected.assign(static_cast<std::size_t>(trials), 0.0);
  out.mean_lambda_hat.assign(static_cast<std::size_t>(trials), 0.0);
  const double d2 = static_cast<double>(d) * static_cast<double>(d);
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t trial) {
    Matrix wc = Matrix::Zero(d, d);
    Matrix wu = Matrix::Zero(d, d);
    double lh_sum = 0.0;
    for (int k = 1; k <= q; ++k) {
      const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(m) * 1000003ULL + trial, k);
      const WorkerEstimate est = worker_estimate(h, lambda, m, dist, s, false);
      wc += densify_estimator(est.sketched, est.lambda.lambda_hat).dense();
      wu += densify_estimator(est.sketched, lambda).dense();
      lh_sum += est.lambda.lambda_hat;
    }
    wc /= static_cast<double>(q);
    wu /= static_cast<double>(q);
    out.corrected[trial] = (wc - w).squaredNorm() / d2;
    out.uncorrected[trial] = (wu - w).squaredNorm() / d2;
    out.mean_lambda_hat[trial] = lh_sum / q;
  });
  return out;
}

struct BiasCurveRow {
  Eigen::Index m = 0;
  SummaryStats corrected;
  SummaryStats uncorrected;
};

struct BiasCurve {
  double effective_dim = 0.0;
  std::vector<BiasCurveRow> rows;
};

/// Sketch sizes from ceil(1.5 d_lambda) doubling up to min(d, 16 d_lambda).
/// When 1.5 d_lambda already exceeds d the starting point alone is kept.
inline std::vector<Eigen::Index> bias_curve_grid(double deff, Eigen::Index d) {
  const auto start = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(1.5 * deff)));
  const double cap = std::max(std::min(static_cast<double>(d), 16.0 * deff), static_cast<double>(start));
  std::vector<Eigen::Index> ms;
  for (Eigen::Index m = start; static_cast<double>(m) <= cap; m *= 2) ms.push_back(m);
  return ms;
}

inline BiasCurve bias_curve(const HessianView& h, double lambda, int q, SketchDistribution dist, int trials,
                            std::uint64_t seed, unsigned threads = 0) {
  BiasCurve c;
  c.effective_dim = effective_dimension(Spectrum::of(h), lambda);
  for (Eigen::Index m : bias_curve_grid(c.effective_dim, h.dim())) {
    const BiasPoint p = bias_proxy(h, lambda, m, q, dist, trials, seed, threads);
    c.rows.push_back({m, SummaryStats::of(p.corrected), SummaryStats::of(p.uncorrected)});
  }
  return c;
}

struct DeterministicEquivalentReport {
  double stieltjes_empirical_mean = 0.0;
  double stieltjes_oracle = 0.0;
  double stieltjes_deviation = 0.0;
  double bilinear_empirical_mean = 0.0;
  double bilinear_deterministic = 0.0;
  double bilinear_deviation = 0.0;
  double budget = 0.0;  ///< 5 / sqrt(m)
};

/// Compares sketched quantities for diagonal H = diag(spec) with their
/// Marchenko-Pastur deterministic equivalents, for u = e_i and v = e_j:
///   E[u^T S^T (S H S^T - z I)^{-1} S v]  vs  u^T (H + s(z)^{-1} I)^{-1} v.
inline DeterministicEquivalentReport deterministic_equivalent_check(const Spectrum& spec, Eigen::Index m, double z,
                                                                    int trials, std::uint64_t seed,
                                                                    Eigen::Index u_index = 0,
                                                                    Eigen::Index v_index = 0,
                                                                    SketchDistribution dist = SketchDistribution::gaussian(),
                                                                    unsigned threads = 0) {
  if (!(z < 0.0)) throw std::invalid_argument("deterministic_equivalent_check: z must be negative");
  const Eigen::Index d = spec.dim();
  if (u_index < 0 || u_index >= d || v_index < 0 || v_index >= d)
    throw std::invalid_argument("deterministic_equivalent_check: coordinate out of range");
  const HessianView h = HessianView::diagonal(spec.eigenvalues());
  std::vector<double> stiel(static_cast<std::size_t>(trials));
  std::vector<double> bil(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t trial) {
    const SketchedHessian sk = sketch_hessian(sample_sketch(dist, m, d, mix_seed(seed, trial, 0)), h);
    stiel[trial] = empirical_stieltjes(sk, z);
    const Matrix& S = sk.sketch.matrix;
    const Vector sv = S.col(v_index);
    bil[trial] = S.col(u_index).dot(Vector(shifted_cholesky_solve(sk.gram, -z, sv)));
  });

  DeterministicEquivalentReport r;
  double a = 0.0;
  double b = 0.0;
  for (int t = 0; t < trials; ++t) {
    a += stiel[t];
    b += bil[t];
  }
  r.stieltjes_empirical_mean = a / trials;
  r.bilinear_empirical_mean = b / trials;
  const double s = mp_stieltjes_oracle(spec, m, z);
  r.stieltjes_oracle = s;
  r.bilinear_deterministic = (u_index == v_index) ? 1.0 / (spec.eigenvalues()[u_index] + 1.0 / s) : 0.0;
  r.stieltjes_deviation = std::abs(r.stieltjes_empirical_mean - r.stieltjes_oracle);
  r.bilinear_deviation = std::abs(r.bilinear_empirical_mean - r.bilinear_deterministic);
  r.budget = 5.0 / std::sqrt(static_cast<double>(m));
  return r;
}

struct WishartReport {
  std::vector<double> norms;  ///< |W_bar - I| per trial
  double median = 0.0;
  double reference = 0.0;  ///< max(d/(mq), sqrt(d/(mq)))
};

/// H = 0: every worker's estimator is S^T S / lambda, so the error matrix is
/// a sample-covariance deviation with m q samples.
inline WishartReport wishart_error_norm(Eigen::Index d, Eigen::Index m, int q, double lambda, int trials,
                                        std::uint64_t seed, SketchDistribution dist = SketchDistribution::gaussian(),
                                        unsigned threads = 0) {
  detail::require_dense_size(d, "wishart_error_norm");
  const HessianView h = HessianView::diagonal(Vector::Zero(d));
  const SymmetricMatrix zero = SymmetricMatrix::zero(d);
  WishartReport r;
  r.norms.assign(static_cast<std::size_t>(trials), 0.0);
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t trial) {
    Matrix w = Matrix::Zero(d, d);
    for (int k = 1; k <= q; ++k) {
      const WorkerEstimate est = worker_estimate(h, lambda, m, dist, mix_seed(seed, trial, k), false);
      w += densify_estimator(est.sketched, est.lambda.lambda_hat).dense();
    }
    w /= static_cast<double>(q);
    r.norms[trial] = error_matrix_norm(zero, lambda, SymmetricMatrix(std::move(w)));
  });
  r.median = median(r.norms);
  const double ratio = static_cast<double>(d) / (static_cast<double>(m) * q);
  r.reference = std::max(ratio, std::sqrt(ratio));
  return r;
}

/// Averaged dense estimator for one round; diagnostics only.
inline SymmetricMatrix averaged_estimator(const RoundSpec& spec, bool uncorrected = false) {
  detail::require_dense_size(spec.hessian->dim(), "averaged_estimator");
  const Eigen::Index d = spec.hessian->dim();
  Matrix w = Matrix::Zero(d, d);
  for (int k = 1; k <= spec.q; ++k) {
    const WorkerEstimate est =
        worker_estimate(*spec.hessian, spec.lambda, spec.m, spec.dist, worker_seed(spec, k), uncorrected);
    w += densify_estimator(est.sketched, est.lambda.lambda_hat).dense();
  }
  return SymmetricMatrix(w / static_cast<double>(spec.q));
}

}  // namespace dsnewton
