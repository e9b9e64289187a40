#pragma once

// Marchenko-Pastur calibration of the sketch size m and of the debiasing
// regularizer lambda_hat, using only eigenvalues of the sketched Gram matrix.
//
// For a sketch with i.i.d. entries of variance 1/m the Stieltjes transform of
// S H S^T concentrates around s(z), the solution of
//     1/s = -z + (1/m) sum_i tau_i / (1 + s tau_i),
// and S^T (S H S^T + t I)^{-1} S is close in expectation to (H + lambda I)^{-1}
// once s(-t) = 1/lambda. The root exists iff m > d_lambda, with the closed form
// t = lambda (1 - d_lambda / m).

#include "dsnewton/matrix_kernel.hpp"
#include "dsnewton/random.hpp"
#include "dsnewton/sketching.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace dsnewton {

/// Eigenvalues of H, all non-negative.
class Spectrum {
 public:
  explicit Spectrum(Vector eigenvalues) : ev_(std::move(eigenvalues)) {
    if (!ev_.allFinite()) throw std::invalid_argument("Spectrum: non-finite eigenvalue");
    if (ev_.size() > 0 && ev_.minCoeff() < 0.0) throw std::invalid_argument("Spectrum: negative eigenvalue");
  }

  /// tau_k = k^{-alpha}, k = 1..d.
  static Spectrum power_law(Eigen::Index d, double alpha) {
    Vector v(d);
    for (Eigen::Index k = 0; k < d; ++k) v[k] = std::pow(static_cast<double>(k + 1), -alpha);
    return Spectrum(std::move(v));
  }

  static Spectrum of(const HessianView& h) {
    if (const auto* diag = std::get_if<DiagonalHessian>(&h.variant())) return Spectrum(diag->diag.cwiseMax(0.0));
    return Spectrum(clamp_nonnegative(sym_eigenvalues(h.densify())));
  }

  Eigen::Index dim() const noexcept { return ev_.size(); }
  const Vector& eigenvalues() const noexcept { return ev_; }

 private:
  Vector ev_;
};

/// d_mu = sum tau / (tau + mu) = tr H (H + mu I)^{-1}.
inline double effective_dimension(const Spectrum& spec, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("effective_dimension: mu must be positive");
  return (spec.eigenvalues().array() / (spec.eigenvalues().array() + mu)).sum();
}

struct OracleLambda {
  double value = 0.0;
  bool valid = false;  ///< false when m <= d_lambda: no positive root exists
};

inline OracleLambda oracle_lambda_tilde(const Spectrum& spec, double lambda, Eigen::Index m) {
  if (!(lambda > 0.0)) throw std::invalid_argument("oracle_lambda_tilde: lambda must be positive");
  if (m < 1) throw std::invalid_argument("oracle_lambda_tilde: m must be positive");
  const double deff = effective_dimension(spec, lambda);
  const double mm = static_cast<double>(m);
  return {lambda * (1.0 - deff / mm), mm > deff};
}

/// Eigenvalues at or below this are treated as exact zeros when z = 0.
inline double eig_zero_tol(const SketchedHessian& sk) {
  const double top = sk.decomp.dim() > 0 ? sk.decomp.eigenvalues[0] : 0.0;
  return 1e-12 * std::max(1.0, top);
}

/// (1/m) sum 1/(lambda_i(S H S^T) - z) for z <= 0.
inline double empirical_stieltjes(const SketchedHessian& sk, double z) {
  if (z > 0.0) throw std::invalid_argument("empirical_stieltjes: z must be non-positive");
  const Vector& ev = sk.decomp.eigenvalues;
  if (z == 0.0 && ev.size() > 0 && ev.minCoeff() <= eig_zero_tol(sk))
    return std::numeric_limits<double>::infinity();
  return (ev.array() - z).inverse().sum() / static_cast<double>(ev.size());
}

namespace detail {
inline double mp_trace_term(const Spectrum& spec, double m, double s) {
  return (spec.eigenvalues().array() / (1.0 + s * spec.eigenvalues().array())).sum() / m;
}
}  // namespace detail

/// Inverse of z -> s(z): Psi(s) = (1/m) tr H (I + s H)^{-1} - 1/s.
inline double mp_psi(const Spectrum& spec, Eigen::Index m, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("mp_psi: s must be positive");
  return detail::mp_trace_term(spec, static_cast<double>(m), s) - 1.0 / s;
}

class BracketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic Marchenko-Pastur Stieltjes transform at z < 0, by bisection on
/// the increasing function  s -> -z s + (s/m) sum tau/(1+s tau) - 1.
inline double mp_stieltjes_oracle(const Spectrum& spec, Eigen::Index m, double z) {
  if (!(z < 0.0)) throw std::invalid_argument("mp_stieltjes_oracle: z must be negative");
  if (m < 1) throw std::invalid_argument("mp_stieltjes_oracle: m must be positive");
  const double mm = static_cast<double>(m);
  auto h = [&](double s) { return -z * s + s * detail::mp_trace_term(spec, mm, s) - 1.0; };

  double lo = 0.0;
  double hi = 1.0;
  int expansions = 0;
  while (h(hi) <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++expansions > 2000 || !std::isfinite(hi)) throw BracketError("mp_stieltjes_oracle: bracket expansion failed");
  }
  for (int it = 0; it < 300 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Accept m when s_emp(-5 lambda / 12) > 1 / lambda.
inline double acceptance_point(double lambda) { return -5.0 * lambda / 12.0; }

inline bool test_sketch_dim(const SketchedHessian& sk, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("test_sketch_dim: lambda must be positive");
  return empirical_stieltjes(sk, acceptance_point(lambda)) > 1.0 / lambda;
}

struct TraceEntry {
  Eigen::Index m = 0;
  double stieltjes = 0.0;  ///< s_emp(-5 lambda / 12)
  bool accepted = false;
};

struct ChooseMResult {
  Eigen::Index m_hat = 0;
  std::optional<SketchedHessian> accepted;  ///< empty when the doubling hit d
  std::vector<TraceEntry> trace;
  bool capped = false;
};

/// Seed of the i-th doubling step within one calibration.
constexpr std::uint64_t doubling_seed(std::uint64_t seed, std::uint64_t step) noexcept {
  return mix64(seed ^ mix64(step + 0x243f6a8885a308d3ULL));
}

/// Doubling search: fresh sketch at every m = m0, 2 m0, ... while m < d; the
/// first accepted m is returned. If no m < d passes, returns d with capped set.
inline ChooseMResult choose_m(const HessianView& h, double lambda, Eigen::Index m0, SketchDistribution dist,
                              std::uint64_t seed) {
  if (m0 < 1) throw std::invalid_argument("choose_m: m0 must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("choose_m: lambda must be positive");
  const Eigen::Index d = h.dim();
  ChooseMResult out;
  Eigen::Index m = m0;
  std::uint64_t step = 0;
  while (m < d) {
    SketchedHessian sk = sketch_hessian(sample_sketch(dist, m, d, doubling_seed(seed, step++)), h);
    const double s = empirical_stieltjes(sk, acceptance_point(lambda));
    const bool ok = s > 1.0 / lambda;
    out.trace.push_back({m, s, ok});
    if (ok) {
      out.m_hat = m;
      out.accepted = std::move(sk);
      return out;
    }
    m *= 2;
  }
  out.m_hat = std::min(m, d);
  out.capped = true;
  return out;
}

struct LambdaHatResult {
  double lambda_hat = 0.0;
  bool degenerate = false;
};

/// Root of s_emp(-t) = 1/lambda on [5 lambda/12, lambda] by bisection.
/// Roots outside the bracket are clamped; a root below it (or none at all)
/// sets the degenerate flag.
inline LambdaHatResult choose_lambda_hat(const SketchedHessian& sk, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("choose_lambda_hat: lambda must be positive");
  const double target = 1.0 / lambda;
  const double lo_bound = 5.0 * lambda / 12.0;

  if (empirical_stieltjes(sk, 0.0) <= target) return {lo_bound, true};

  auto f = [&](double t) { return empirical_stieltjes(sk, -t) - target; };
  if (f(lambda) >= 0.0) return {lambda, false};
  if (f(lo_bound) < 0.0) return {lo_bound, true};

  // f decreasing in t: f(lo) >= 0 > f(hi).
  double lo = lo_bound;
  double hi = lambda;
  for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) >= 0.0 ? lo : hi) = mid;
  }
  return {0.5 * (lo + hi), false};
}

struct CalibrationResult {
  Eigen::Index m_hat = 0;
  double lambda_hat = 0.0;
  SketchedHessian sketched;
  std::vector<TraceEntry> trace;
  bool degenerate = false;
  bool capped = false;
};

/// choose_m followed by choose_lambda_hat on the accepted sketch (or on a
/// fresh sketch of size d when the doubling was capped).
inline CalibrationResult calibrate(const HessianView& h, double lambda, Eigen::Index m0, SketchDistribution dist,
                                   std::uint64_t seed) {
  ChooseMResult cm = choose_m(h, lambda, m0, dist, seed);
  SketchedHessian sk = cm.accepted
                           ? std::move(*cm.accepted)
                           : sketch_hessian(sample_sketch(dist, cm.m_hat, h.dim(), doubling_seed(seed, ~0ULL)), h);
  const LambdaHatResult lh = choose_lambda_hat(sk, lambda);
  return {cm.m_hat, lh.lambda_hat, std::move(sk), std::move(cm.trace), lh.degenerate || cm.capped, cm.capped};
}

}  // namespace dsnewton
