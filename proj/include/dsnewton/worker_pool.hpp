#pragma once

// In-process simulation of a star topology: q stateless workers each sketch
// the Hessian, pick their own lambda_hat and send back W_hat^(k) g; the
// server averages the q vectors in worker-index order.

#include "dsnewton/calibration.hpp"
#include "dsnewton/parallel.hpp"
#include "dsnewton/sketching.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dsnewton {

struct RoundSpec {
  std::uint64_t round_index = 0;
  Vector gradient;
  std::shared_ptr<const HessianView> hessian;
  double lambda = 1.0;
  Eigen::Index m = 1;  ///< broadcast sketch size
  SketchDistribution dist;
  int q = 1;
  std::uint64_t master_seed = 0;
};

struct RoundOptions {
  unsigned threads = 0;           ///< 0 = hardware concurrency
  bool uncorrected = false;       ///< use lambda_hat = lambda (no debiasing)
  bool drop_degenerate = false;   ///< discard workers whose calibration hit the error branch
};

struct RoundResult {
  Vector direction;  ///< average of surviving W_hat^(k) g
  std::vector<double> per_worker_lambda_hat;
  std::vector<double> wall_time;  ///< seconds, per worker
  std::vector<bool> survived;
  int degenerate_count = 0;
  int dropped_count = 0;

  double mean_lambda_hat() const {
    double s = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < per_worker_lambda_hat.size(); ++k)
      if (survived[k]) {
        s += per_worker_lambda_hat[k];
        ++n;
      }
    return n > 0 ? s / n : 0.0;
  }
};

class AllWorkersDroppedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker k in 1..q uses this seed in round t.
inline std::uint64_t worker_seed(const RoundSpec& spec, int k) {
  return mix_seed(spec.master_seed, spec.round_index, static_cast<std::uint64_t>(k));
}

/// One worker's sketch and calibrated regularizer.
struct WorkerEstimate {
  SketchedHessian sketched;
  LambdaHatResult lambda;
};

inline WorkerEstimate worker_estimate(const HessianView& h, double lambda, Eigen::Index m, SketchDistribution dist,
                                      std::uint64_t seed, bool uncorrected) {
  SketchedHessian sk = sketch_hessian(sample_sketch(dist, m, h.dim(), seed), h);
  LambdaHatResult lh = uncorrected ? LambdaHatResult{lambda, false} : choose_lambda_hat(sk, lambda);
  return {std::move(sk), lh};
}

struct WorkerOutput {
  Vector vec;
  double lambda_hat = 0.0;
  bool degenerate = false;
  bool finite = true;
  double seconds = 0.0;
};

namespace detail {

inline void validate(const RoundSpec& spec) {
  if (!spec.hessian) throw std::invalid_argument("RoundSpec: missing hessian");
  if (spec.q < 1) throw std::invalid_argument("RoundSpec: q must be >= 1");
  if (spec.m < 1) throw std::invalid_argument("RoundSpec: m must be >= 1");
  require_dims(spec.gradient.size() == spec.hessian->dim(), "RoundSpec");
}

inline std::vector<WorkerOutput> run_workers(const RoundSpec& spec, const RoundOptions& opts) {
  validate(spec);
  std::vector<WorkerOutput> out(static_cast<std::size_t>(spec.q));
  parallel_for(out.size(), opts.threads, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const int k = static_cast<int>(i) + 1;
    WorkerEstimate est =
        worker_estimate(*spec.hessian, spec.lambda, spec.m, spec.dist, worker_seed(spec, k), opts.uncorrected);
    WorkerOutput& w = out[i];
    w.vec = apply_debiased_inverse(est.sketched, est.lambda.lambda_hat, spec.gradient);
    w.lambda_hat = est.lambda.lambda_hat;
    w.degenerate = est.lambda.degenerate;
    w.finite = w.vec.allFinite() && std::isfinite(w.lambda_hat);
    w.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  return out;
}

inline RoundResult reduce(const std::vector<WorkerOutput>& outs, const std::vector<bool>& keep, Eigen::Index d) {
  RoundResult r;
  r.direction = Vector::Zero(d);
  int survivors = 0;
  for (std::size_t k = 0; k < outs.size(); ++k) {
    r.per_worker_lambda_hat.push_back(outs[k].lambda_hat);
    r.wall_time.push_back(outs[k].seconds);
    r.survived.push_back(keep[k]);
    if (outs[k].degenerate) ++r.degenerate_count;
    if (!keep[k]) {
      ++r.dropped_count;
      continue;
    }
    r.direction += outs[k].vec;
    ++survivors;
  }
  if (survivors == 0) throw AllWorkersDroppedError("run_round: every worker was dropped");
  r.direction /= static_cast<double>(survivors);
  return r;
}

}  // namespace detail

inline RoundResult run_round(const RoundSpec& spec, const RoundOptions& opts = {}) {
  const auto outs = detail::run_workers(spec, opts);
  std::vector<bool> keep(outs.size());
  for (std::size_t k = 0; k < outs.size(); ++k)
    keep[k] = outs[k].finite && !(opts.drop_degenerate && outs[k].degenerate);
  return detail::reduce(outs, keep, spec.hessian->dim());
}

/// Latency assigned to worker k (1-based) given its measured wall time.
using LatencyModel = std::function<double(int k, double measured_seconds)>;

/// Averages only workers whose latency is within the timeout; the mean is
/// renormalized by the survivor count.
inline RoundResult straggler_policy(const RoundSpec& spec, double timeout, const RoundOptions& opts = {},
                                    const LatencyModel& latency = {}) {
  if (!(timeout > 0.0)) throw std::invalid_argument("straggler_policy: timeout must be positive");
  const auto outs = detail::run_workers(spec, opts);
  std::vector<bool> keep(outs.size());
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const double t = latency ? latency(static_cast<int>(k) + 1, outs[k].seconds) : outs[k].seconds;
    keep[k] = outs[k].finite && !(opts.drop_degenerate && outs[k].degenerate) && t <= timeout;
  }
  return detail::reduce(outs, keep, spec.hessian->dim());
}

}  // namespace dsnewton
