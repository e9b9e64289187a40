#include "dsnewton/diagnostics.hpp"
#include "dsnewton/worker_pool.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

using namespace dsnewton;

namespace {

RoundSpec make_spec(Eigen::Index d, Eigen::Index m, int q, std::uint64_t seed, bool zero_hessian = false) {
  Rng rng(seed);
  RoundSpec s;
  s.round_index = 3;
  s.gradient = gaussian_matrix(d, 1, rng);
  s.hessian = std::make_shared<const HessianView>(
      zero_hessian ? HessianView::diagonal(Vector::Zero(d))
                   : HessianView::factored(gaussian_matrix(2 * d, d, rng, 1.0 / std::sqrt(2.0 * d))));
  s.lambda = 0.5;
  s.m = m;
  s.q = q;
  s.master_seed = seed * 31 + 1;
  return s;
}

bool bit_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

}  // namespace

TEST(RunRound, SingleWorkerEqualsItsEstimate) {
  const RoundSpec spec = make_spec(40, 15, 1, 2);
  const RoundResult r = run_round(spec);
  const WorkerEstimate est = worker_estimate(*spec.hessian, spec.lambda, spec.m, spec.dist, worker_seed(spec, 1), false);
  EXPECT_TRUE(bit_equal(r.direction, apply_debiased_inverse(est.sketched, est.lambda.lambda_hat, spec.gradient)));
  ASSERT_EQ(r.per_worker_lambda_hat.size(), 1u);
  EXPECT_EQ(r.per_worker_lambda_hat[0], est.lambda.lambda_hat);
  EXPECT_EQ(r.wall_time.size(), 1u);
}

TEST(RunRound, ZeroHessianApproachesGradient) {
  const Eigen::Index d = 100;
  double prev = std::numeric_limits<double>::infinity();
  for (int q : {4, 16, 64}) {
    RoundSpec spec = make_spec(d, 50, q, 5, true);
    spec.lambda = 1.0;
    const RoundResult r = run_round(spec);
    for (double lh : r.per_worker_lambda_hat) EXPECT_DOUBLE_EQ(lh, 1.0);
    const double err = (r.direction - spec.gradient).norm() / spec.gradient.norm();
    const double ratio = static_cast<double>(d) / (50.0 * q);
    EXPECT_LE(err, 3.0 * std::max(ratio, std::sqrt(ratio))) << "q=" << q;
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(RunRound, BitExactAcrossThreadCounts) {
  const RoundSpec spec = make_spec(80, 20, 12, 9);
  const RoundResult base = run_round(spec, {1});
  for (unsigned threads : {2u, 4u, 0u}) {
    const RoundResult r = run_round(spec, {threads});
    EXPECT_TRUE(bit_equal(r.direction, base.direction)) << threads;
    EXPECT_EQ(r.per_worker_lambda_hat, base.per_worker_lambda_hat);
    EXPECT_EQ(r.degenerate_count, base.degenerate_count);
  }
}

TEST(RunRound, LinearInGradient) {
  RoundSpec a = make_spec(50, 20, 6, 4);
  RoundSpec b = a;
  Rng rng(77);
  b.gradient = gaussian_matrix(50, 1, rng);
  RoundSpec sum = a;
  sum.gradient = a.gradient + b.gradient;
  const Vector lhs = run_round(sum).direction;
  const Vector rhs = run_round(a).direction + run_round(b).direction;
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
}

TEST(RunRound, WorkersUseDistinctSeeds) {
  const RoundSpec spec = make_spec(30, 60, 4, 1);
  EXPECT_NE(worker_seed(spec, 1), worker_seed(spec, 2));
  EXPECT_NE(worker_seed(spec, 1), mix_seed(spec.master_seed, spec.round_index, 0));
  const RoundResult r = run_round(spec);
  EXPECT_EQ(r.degenerate_count, 0);
  EXPECT_NE(r.per_worker_lambda_hat[0], r.per_worker_lambda_hat[1]);
}

TEST(RunRound, Validation) {
  RoundSpec spec = make_spec(10, 4, 2, 1);
  spec.q = 0;
  EXPECT_THROW(run_round(spec), std::invalid_argument);
  spec.q = 2;
  spec.m = 0;
  EXPECT_THROW(run_round(spec), std::invalid_argument);
  spec.m = 4;
  spec.gradient = Vector::Ones(3);
  EXPECT_THROW(run_round(spec), DimensionError);
  spec.hessian.reset();
  EXPECT_THROW(run_round(spec), std::invalid_argument);
}

TEST(RunRound, DropDegenerateWorkers) {
  // Sketch size far below d_lambda puts every worker on the error branch.
  RoundSpec spec = make_spec(60, 2, 3, 8);
  spec.hessian = std::make_shared<const HessianView>(HessianView::diagonal(Vector::Constant(60, 50.0)));
  const RoundResult kept = run_round(spec);
  EXPECT_EQ(kept.degenerate_count, 3);
  EXPECT_EQ(kept.dropped_count, 0);
  EXPECT_THROW(run_round(spec, {0, false, true}), AllWorkersDroppedError);
}

TEST(Straggler, InfiniteTimeoutMatchesRunRound) {
  const RoundSpec spec = make_spec(40, 12, 5, 3);
  const RoundResult r = straggler_policy(spec, std::numeric_limits<double>::infinity());
  EXPECT_TRUE(bit_equal(r.direction, run_round(spec).direction));
  EXPECT_EQ(r.dropped_count, 0);
  EXPECT_THROW(straggler_policy(spec, 0.0), std::invalid_argument);
}

TEST(Straggler, DroppedWorkerLeavesSurvivor) {
  RoundSpec spec = make_spec(40, 12, 2, 6);
  const RoundResult r = straggler_policy(spec, 1.0, {}, [](int k, double) { return k == 1 ? 10.0 : 0.0; });
  EXPECT_EQ(r.dropped_count, 1);
  EXPECT_FALSE(r.survived[0]);
  spec.q = 1;
  // worker 2's vector alone
  const WorkerEstimate est = worker_estimate(*spec.hessian, spec.lambda, spec.m, spec.dist, worker_seed(spec, 2), false);
  EXPECT_TRUE(bit_equal(r.direction, apply_debiased_inverse(est.sketched, est.lambda.lambda_hat, spec.gradient)));
}

TEST(Straggler, AllDroppedIsAnError) {
  const RoundSpec spec = make_spec(20, 5, 3, 1);
  EXPECT_THROW(straggler_policy(spec, 1.0, {}, [](int, double) { return 2.0; }), AllWorkersDroppedError);
}

TEST(Straggler, RandomDropsKeepTheMean) {
  const Eigen::Index d = 30;
  const int trials = 200;
  Vector full = Vector::Zero(d), dropped = Vector::Zero(d);
  for (int t = 0; t < trials; ++t) {
    RoundSpec spec = make_spec(d, 10, 4, 1);
    spec.round_index = static_cast<std::uint64_t>(t);
    full += run_round(spec).direction;
    Rng coin(mix_seed(99, t, 0));
    std::vector<double> lat(4);
    for (auto& x : lat) x = std::uniform_real_distribution<double>(0.0, 1.0)(coin);
    lat[static_cast<std::size_t>(t % 4)] = 0.0;  // at least one survivor
    dropped += straggler_policy(spec, 0.5, {}, [&](int k, double) { return lat[k - 1]; }).direction;
  }
  full /= trials;
  dropped /= trials;
  // Both estimate the same expectation; the gap is Monte-Carlo noise.
  EXPECT_LE((full - dropped).norm(), 0.1 * full.norm());
}

TEST(ErrorMatrix, NonIncreasingInQ) {
  const Eigen::Index d = 400;
  const Spectrum s = Spectrum::power_law(d, 2.0 / 3.0);
  const auto m = static_cast<Eigen::Index>(std::ceil(4.0 * effective_dimension(s, 1.0)));
  const SymmetricMatrix h = SymmetricMatrix::diagonal(s.eigenvalues());
  double prev = std::numeric_limits<double>::infinity();
  for (int q : {1, 4, 16, 64}) {
    std::vector<double> norms;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      RoundSpec spec;
      spec.gradient = Vector::Zero(d);
      spec.hessian = std::make_shared<const HessianView>(HessianView::diagonal(s.eigenvalues()));
      spec.lambda = 1.0;
      spec.m = m;
      spec.q = q;
      spec.master_seed = seed;
      norms.push_back(error_matrix_norm(h, 1.0, averaged_estimator(spec)));
    }
    const double med = median(norms);
    EXPECT_LE(med, prev) << "q=" << q;
    prev = med;
  }
}
