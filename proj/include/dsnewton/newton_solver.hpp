#pragma once

// Newton iterations theta_t = theta_{t-1} - alpha_t W_t g_t where W_t is either
// the exact inverse (H_t + lambda I)^{-1} or the server average of the workers'
// debiased sketched inverses, with alpha_t from backtracking line search.

#include "dsnewton/calibration.hpp"
#include "dsnewton/objectives.hpp"
#include "dsnewton/worker_pool.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dsnewton {

enum class CalibrationPolicy {
  Auto,        ///< Once for constant-Hessian objectives, EveryRound otherwise
  Once,        ///< choose m at the first iteration only
  EveryRound,  ///< rerun the doubling search each iteration, starting from the previous m
};

struct SolverConfig {
  double a = 0.1;  ///< sufficient-decrease fraction
  double b = 0.5;  ///< backtracking factor
  int max_iters = 100;
  double grad_tol = 1e-10;
  double decrement_tol = 1e-16;  ///< stop when the squared decrement is <= 2 * decrement_tol
  int max_linesearch_steps = 60;
  CalibrationPolicy calibration_policy = CalibrationPolicy::Auto;
  int q = 10;
  SketchDistribution dist = SketchDistribution::gaussian();
  Eigen::Index m0 = 10;
  std::uint64_t master_seed = 0;
  unsigned threads = 0;
  bool uncorrected = false;  ///< lambda_hat := lambda on every worker
  bool drop_degenerate = false;

  void validate() const {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("SolverConfig.a must lie in (0,1)");
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("SolverConfig.b must lie in (0,1)");
    if (max_iters < 1) throw std::invalid_argument("SolverConfig.max_iters must be positive");
    if (!(grad_tol >= 0.0)) throw std::invalid_argument("SolverConfig.grad_tol must be non-negative");
    if (!(decrement_tol >= 0.0)) throw std::invalid_argument("SolverConfig.decrement_tol must be non-negative");
    if (max_linesearch_steps < 1) throw std::invalid_argument("SolverConfig.max_linesearch_steps must be positive");
    if (q < 1) throw std::invalid_argument("SolverConfig.q must be positive");
    if (m0 < 1) throw std::invalid_argument("SolverConfig.m0 must be positive");
  }
};

struct LineSearchResult {
  double alpha = 1.0;
  int probes = 0;
  bool exhausted = false;  ///< no probe satisfied the sufficient-decrease test
};

class LineSearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Backtracking: largest alpha in {1, b, b^2, ...} with
/// G(theta - alpha p) <= G(theta) - a alpha g^T p.
inline LineSearchResult line_search(const Objective& G, const Vector& theta, const Vector& g, const Vector& p,
                                    const SolverConfig& cfg) {
  const double g0 = G.value(theta);
  const double slope = g.dot(p);
  LineSearchResult r;
  bool any_finite = false;
  for (r.probes = 1; r.probes <= cfg.max_linesearch_steps; ++r.probes) {
    const double trial = G.value(theta - r.alpha * p);
    if (std::isfinite(trial)) {
      any_finite = true;
      if (!(trial > g0 - cfg.a * r.alpha * slope)) return r;
    }
    if (r.probes == cfg.max_linesearch_steps) break;
    r.alpha *= cfg.b;
  }
  if (!any_finite) throw LineSearchError("line_search: objective non-finite at every probe");
  r.exhausted = true;
  return r;
}

struct ExactStep {
  Vector theta_next;
  Vector direction;  ///< (H + lambda I)^{-1} g
  double decrement = 0.0;  ///< sqrt(g^T (H + lambda I)^{-1} g)
  LineSearchResult line;
};

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Vector exact_newton_direction(const Objective& G, const Vector& theta, const Vector& g) {
  Matrix k = G.hessian(theta).densify().dense();
  k.diagonal().array() += G.ridge_lambda();
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) throw FactorizationError("exact_newton_step: Cholesky factorization failed");
  return llt.solve(g);
}

inline ExactStep exact_newton_step(const Objective& G, const Vector& theta, const SolverConfig& cfg = {}) {
  const Vector g = G.gradient(theta);
  ExactStep s;
  s.direction = exact_newton_direction(G, theta, g);
  s.decrement = std::sqrt(std::max(0.0, g.dot(s.direction)));
  s.line = line_search(G, theta, g, s.direction, cfg);
  s.theta_next = theta - s.line.alpha * s.direction;
  return s;
}

/// Spectral norm of (H + lambda I)^{1/2} W (H + lambda I)^{1/2} - I.
inline double error_matrix_norm(const SymmetricMatrix& h, double lambda, const SymmetricMatrix& w) {
  detail::require_dims(h.dim() == w.dim(), "error_matrix_norm");
  Matrix k = h.dense();
  k.diagonal().array() += lambda;
  const Matrix r = psd_sqrt(SymmetricMatrix(k));
  Matrix e = r * w.dense() * r;
  e.diagonal().array() -= 1.0;
  return spectral_norm(SymmetricMatrix(e));
}

inline constexpr Eigen::Index kMaxDenseDim = 2000;

inline double eta_accuracy(const Objective& G, const Vector& theta, const SymmetricMatrix& w_bar) {
  if (G.dim() > kMaxDenseDim) throw std::invalid_argument("eta_accuracy: dimension too large to densify");
  return error_matrix_norm(G.hessian(theta).densify(), G.ridge_lambda(), w_bar);
}

struct IterationRecord {
  int t = 0;
  double value = 0.0;       ///< G(theta_t)
  double grad_norm = 0.0;   ///< |g| at theta_{t-1}, the gradient used for this step
  double alpha = 0.0;
  double decrement = 0.0;   ///< sqrt(g^T W g)
  Eigen::Index m_hat = 0;   ///< 0 for exact Newton
  double mean_lambda_hat = 0.0;
  int degenerate_workers = 0;
  double seconds = 0.0;
  double server_seconds = 0.0;  ///< calibration time spent on the server
};

struct NewtonTrace {
  double initial_value = 0.0;
  std::vector<IterationRecord> records;
};

struct SolveResult {
  Vector theta;
  NewtonTrace trace;
  bool converged = false;
  bool iteration_cap = false;
  bool linesearch_stalled = false;
  bool roundoff_limited = false;  ///< stopped because N^2 fell below the resolution of G
  Vector final_gradient;
};

/// N^2 below this many ulps of G(theta) counts as converged.
inline constexpr double kRoundoffDecrementUlps = 16.0;

namespace detail {
inline bool every_round(const Objective& G, CalibrationPolicy p) {
  if (p == CalibrationPolicy::Auto) return !G.constant_hessian();
  return p == CalibrationPolicy::EveryRound;
}

template <typename StepFn>
SolveResult newton_loop(const Objective& G, Vector theta, const SolverConfig& cfg, StepFn&& step) {
  cfg.validate();
  detail::require_dims(theta.size() == G.dim(), "newton solve");
  SolveResult res;
  res.trace.initial_value = G.value(theta);
  Vector best = theta;
  double best_value = res.trace.initial_value;
  double value = res.trace.initial_value;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Vector g = G.gradient(theta);
    if (g.norm() <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    IterationRecord rec;
    rec.t = t;
    rec.grad_norm = g.norm();
    const Vector p = step(t, theta, g, rec);
    const double dec2 = g.dot(p);
    rec.decrement = std::sqrt(std::max(0.0, dec2));
    if (dec2 <= 2.0 * cfg.decrement_tol) {
      res.converged = true;
      break;
    }
    // G - G* <= N^2, so past this point Armijo compares rounding noise.
    if (dec2 <= kRoundoffDecrementUlps * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value))) {
      res.converged = true;
      res.roundoff_limited = true;
      break;
    }
    const LineSearchResult ls = line_search(G, theta, g, p, cfg);
    if (ls.exhausted) {
      res.linesearch_stalled = true;
      break;
    }
    rec.alpha = ls.alpha;
    theta -= ls.alpha * p;
    rec.value = G.value(theta);
    value = rec.value;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.trace.records.push_back(rec);
    if (rec.value < best_value) {
      best_value = rec.value;
      best = theta;
    }
    if (t == cfg.max_iters) res.iteration_cap = true;
  }
  if (res.iteration_cap) theta = best;
  res.final_gradient = G.gradient(theta);
  if (res.final_gradient.norm() <= cfg.grad_tol) res.converged = true;
  res.theta = std::move(theta);
  return res;
}
}  // namespace detail

inline SolveResult exact_newton_solve(const Objective& G, Vector theta0, const SolverConfig& cfg = {}) {
  return detail::newton_loop(G, std::move(theta0), cfg,
                             [&](int, const Vector& theta, const Vector& g, IterationRecord&) {
                               return exact_newton_direction(G, theta, g);
                             });
}

/// The parallel sketched Newton method. The server chooses m by doubling
/// (seed stream worker 0); workers 1..q calibrate lambda_hat privately.
inline SolveResult sketched_newton_solve(const Objective& G, Vector theta0, const SolverConfig& cfg = {}) {
  const bool recalibrate = detail::every_round(G, cfg.calibration_policy);
  Eigen::Index m = 0;
  Eigen::Index m_start = cfg.m0;
  RoundOptions opts{cfg.threads, cfg.uncorrected, cfg.drop_degenerate};
  return detail::newton_loop(
      G, std::move(theta0), cfg, [&](int t, const Vector& theta, const Vector& g, IterationRecord& rec) {
        auto h = std::make_shared<const HessianView>(G.hessian(theta));
        if (m == 0 || recalibrate) {
          const auto start = std::chrono::steady_clock::now();
          const ChooseMResult cm =
              choose_m(*h, G.ridge_lambda(), m_start, cfg.dist, mix_seed(cfg.master_seed, t, 0));
          m = cm.m_hat;
          m_start = m;
          rec.server_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        RoundSpec spec{static_cast<std::uint64_t>(t), g, h, G.ridge_lambda(), m, cfg.dist, cfg.q, cfg.master_seed};
        RoundResult round = run_round(spec, opts);
        rec.m_hat = m;
        rec.mean_lambda_hat = round.mean_lambda_hat();
        rec.degenerate_workers = round.degenerate_count;
        return std::move(round.direction);
      });
}

}  // namespace dsnewton
