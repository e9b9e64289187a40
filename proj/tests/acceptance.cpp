// Acceptance suite: one PASS/FAIL line per criterion, details after the colon.
// Exit status is the number of failed criteria.

#include "dsnewton/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace dsnewton;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

template <typename Fn>
void criterion(int id, const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  o.detail << std::setprecision(4);
  try {
    fn(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ":" << o.detail.str() << " ("
            << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
}

double median_of(std::vector<double> v) { return median(std::move(v)); }

}  // namespace

int main() {
  std::ostringstream sink;

  criterion(1, "Sketch-size search success rate (d=1e4, 20 trials, Gaussian)", [&](Outcome& o) {
    Table1Options opt;
    const auto rows = cmd_table1(opt, sink);
    const Eigen::Index expected[] = {20, 160, 640};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      int hits = 0;
      for (Eigen::Index m : r.m_hat) hits += m == expected[i];
      const double frac = static_cast<double>(hits) / static_cast<double>(r.m_hat.size());
      o.detail << " alpha=" << r.alpha << " d_lambda=" << r.d_lambda << " success=" << r.success_rate << " m_hat="
               << expected[i] << " in " << frac * 100 << "%;";
      o.require(r.success_rate >= 0.95, "success rate < 0.95");
      o.require(frac >= 0.9, "modal dimension frequency < 0.9");
    }
  });

  criterion(2, "Calibration accuracy at m = ceil(4 d_lambda), alpha=1, 50 trials, plus m->4m rate", [&](Outcome& o) {
    const Spectrum s = Spectrum::power_law(10000, 1.0);
    const HessianView h = HessianView::diagonal(s.eigenvalues());
    const auto m = static_cast<Eigen::Index>(std::ceil(4.0 * effective_dimension(s, 1.0)));
    std::vector<double> med;
    for (Eigen::Index mm : {m, 4 * m}) {
      const double tilde = oracle_lambda_tilde(s, 1.0, mm).value;
      std::vector<double> err;
      int ok = 0;
      for (std::uint64_t t = 0; t < 50; ++t) {
        const auto sk = sketch_hessian(sample_sketch(SketchDistribution::gaussian(), mm, 10000, mix_seed(2, mm, t)), h);
        err.push_back(std::abs(choose_lambda_hat(sk, 1.0).lambda_hat - tilde) / tilde);
        ok += err.back() <= 0.15;
      }
      med.push_back(median_of(err));
      o.detail << " m=" << mm << " lambda_tilde=" << tilde << " within 0.15: " << ok << "/50, median rel err "
               << med.back() << ";";
      if (mm == m) o.require(ok >= 45, "fewer than 90% within 0.15");
    }
    const double ratio = med[0] / med[1];
    o.detail << " median ratio m/4m=" << ratio;
    o.require(ratio >= 1.3 && ratio <= 3.5, "rate ratio outside [1.3, 3.5]");
  });

  criterion(3, "Bias-correction dominance, ensembles L and R (d=500, q=50, 10 trials)", [&](Outcome& o) {
    for (EnsembleKind k : {EnsembleKind::L, EnsembleKind::R}) {
      BiasCurveOptions opt;
      opt.ensemble = k;
      const auto rep = cmd_bias_curve(opt, sink);
      o.detail << (k == EnsembleKind::L ? " L" : " R") << " (d_lambda=" << rep.curve.effective_dim << "):";
      o.require(!rep.curve.rows.empty(), "empty sweep");
      for (const auto& row : rep.curve.rows) {
        o.detail << " m=" << row.m << " " << row.corrected.median << "<" << row.uncorrected.median;
        if (static_cast<double>(row.m) >= 1.5 * rep.curve.effective_dim)
          o.require(row.corrected.median < row.uncorrected.median, "corrected >= uncorrected");
      }
      o.detail << ";";
    }
  });

  criterion(4, "End-to-end convergence (n=2000, d=200, lambda=1e-3, q=10)", [&](Outcome& o) {
    std::vector<double> deb, unc;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const RunConfig c = run_config_from({{"task", "ridge"}, {"seed", std::to_string(seed)}, {"exact", "false"}});
      const SolveReport rep = cmd_solve(c, sink);
      const auto its = [](const MethodReport& m) { return m.iterations_to_target ? *m.iterations_to_target : 1e9; };
      deb.push_back(its(rep.method("debiased")));
      unc.push_back(its(rep.method("uncorrected")));
    }
    const double md = median_of(deb), mu = median_of(unc);
    o.detail << " ridge median iterations to gap 1e-8: debiased " << md << ", uncorrected " << mu << ";";
    o.require(md <= 25, "debiased median > 25");
    o.require(md <= mu, "debiased median exceeds uncorrected");
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const RunConfig c = run_config_from({{"task", "logistic"},
                                           {"seed", std::to_string(seed)},
                                           {"max_iters", "50"},
                                           {"uncorrected", "false"},
                                           {"exact", "false"}});
      const SolveReport rep = cmd_solve(c, sink);
      const auto& m = rep.method("debiased");
      int first = -1;
      for (const auto& r : m.result.trace.records)
        if (first < 0 && r.grad_norm <= 1e-6) first = r.t - 1;
      if (first < 0 && m.final_grad_norm <= 1e-6) first = m.iterations;
      o.detail << " logistic seed " << seed << ": |g|<=1e-6 at iteration " << first << ", monotone "
               << (m.monotone ? "yes" : "no") << ";";
      o.require(first >= 0 && first <= 50, "logistic gradient above 1e-6 after 50 iterations");
      o.require(m.monotone, "logistic objective not monotone");
    }
  });

  criterion(5, "Wishart scaling (H=0, d=200, m=50)", [&](Outcome& o) {
    WishartOptions opt;
    opt.qs = {2, 8, 16, 32};
    for (const auto& [q, r] : cmd_wishart(opt, sink)) {
      o.detail << " q=" << q << " median=" << r.median << " ref=" << r.reference << ";";
      if (q * opt.m < opt.d) {
        double lo = r.norms.front();
        for (double n : r.norms) lo = std::min(lo, n);
        o.require(lo >= 1.0 - 1e-12, "norm below 1 with qm < d");
      } else {
        o.require(r.median <= 3.0 * r.reference && r.median >= r.reference / 3.0, "median not within factor 3");
      }
    }
  });

  criterion(6, "Deterministic-equivalent agreement (H=I, m=400, d=800, z=-1, 100 seeds)", [&](Outcome& o) {
    DetEquivOptions opt;
    const auto r = cmd_det_equiv(opt, sink);
    o.detail << " stieltjes " << r.stieltjes_empirical_mean << " vs " << r.stieltjes_oracle << " (dev "
             << r.stieltjes_deviation << "); bilinear " << r.bilinear_empirical_mean << " vs "
             << r.bilinear_deterministic << " (dev " << r.bilinear_deviation << "); budget " << r.budget;
    o.require(r.stieltjes_deviation <= r.budget, "stieltjes deviation over budget");
    o.require(r.bilinear_deviation <= r.budget, "bilinear deviation over budget");
  });

  criterion(7, "Property suites", [&](Outcome& o) {
    int checks = 0;
    auto check = [&](bool ok, const std::string& what) {
      ++checks;
      o.require(ok, what);
    };
    Rng rng(7);

    // finite differences
    for (Task task : {Task::Ridge, Task::Logistic}) {
      const auto data = task == Task::Ridge ? synth_ridge(200, 15, 3).data : synth_logistic(200, 15, 3, 1.0).data;
      const auto G = task == Task::Ridge ? ridge_objective(data, 1e-2) : logistic_objective(data, 1e-2);
      const Vector theta = gaussian_matrix(15, 1, rng);
      const Vector v = gaussian_matrix(15, 1, rng);
      const Vector g = G->gradient(theta);
      Vector fd(15);
      for (Eigen::Index i = 0; i < 15; ++i) {
        const double h = 1e-6;
        fd[i] = (G->value(theta + h * Vector::Unit(15, i)) - G->value(theta - h * Vector::Unit(15, i))) / (2 * h);
      }
      check((fd - g).norm() <= 1e-4 * g.norm(), "finite-difference gradient");
      const double h = 1e-6;
      const Vector hv_fd = (G->gradient(theta + h * v) - G->gradient(theta - h * v)) / (2 * h);
      const Vector hv = hessian_matvec(G->hessian(theta), v) + G->ridge_lambda() * v;
      check((hv_fd - hv).norm() <= 1e-4 * hv.norm(), "finite-difference Hessian");
    }

    // s_emp monotone and bounded, lambda_hat bracket, Psi round trip, contraction
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Spectrum s = Spectrum::power_law(300, 0.5 + 0.1 * static_cast<double>(seed));
      const auto sk =
          sketch_hessian(sample_sketch(SketchDistribution::gaussian(), 40, 300, seed), HessianView::diagonal(s.eigenvalues()));
      double prev = 0.0;
      for (double z : {-10.0, -1.0, -0.1, -0.01}) {
        const double v = empirical_stieltjes(sk, z);
        check(v > prev && v <= -1.0 / z, "s_emp monotone and <= -1/z");
        prev = v;
        const double st = mp_stieltjes_oracle(s, 40, z);
        check(std::abs(mp_psi(s, 40, st) - z) <= 1e-10 * std::abs(z), "Psi round trip");
      }
      for (double lambda : {0.01, 0.1, 1.0}) {
        const double lh = choose_lambda_hat(sk, lambda).lambda_hat;
        check(lh >= 5.0 * lambda / 12.0 && lh <= lambda, "lambda_hat in bracket");
        for (double gamma : {1.5, 2.0, 4.0}) {
          const double d0 = effective_dimension(s, lambda), dg = effective_dimension(s, gamma * lambda);
          check(dg <= d0 && d0 <= gamma * dg * (1 + 1e-14), "effective-dimension contraction");
        }
      }
    }

    // exact Newton one step on a quadratic
    {
      const Matrix a = gaussian_matrix(30, 20, rng);
      const Vector b = gaussian_matrix(20, 1, rng);
      const auto G = quadratic_objective(SymmetricMatrix(Matrix(a.transpose() * a)), b, 0.1);
      const auto step = exact_newton_step(*G, gaussian_matrix(20, 1, rng));
      check(G->gradient(step.theta_next).norm() <= 1e-10 * b.norm(), "exact Newton one-step");
    }

    // Armijo re-verification over a sketched logistic solve
    {
      const auto G = logistic_objective(synth_logistic(500, 40, 2).data, 1e-3);
      SolverConfig cfg;
      cfg.max_iters = 30;
      const auto r = sketched_newton_solve(*G, Vector::Zero(40), cfg);
      double prev = r.trace.initial_value;
      for (const auto& rec : r.trace.records) {
        check(rec.value <= prev - cfg.a * rec.alpha * rec.decrement * rec.decrement, "Armijo condition");
        prev = rec.value;
      }
    }

    // run_round bit-exact across thread counts
    {
      RoundSpec spec;
      spec.gradient = gaussian_matrix(100, 1, rng);
      spec.hessian = std::make_shared<const HessianView>(HessianView::factored(gaussian_matrix(150, 100, rng, 0.1)));
      spec.lambda = 0.1;
      spec.m = 40;
      spec.q = 16;
      spec.master_seed = 3;
      const Vector base = run_round(spec, {1}).direction;
      for (unsigned t : {2u, 3u, 8u}) {
        const Vector d = run_round(spec, {t}).direction;
        check(std::memcmp(d.data(), base.data(), sizeof(double) * static_cast<std::size_t>(d.size())) == 0,
              "run_round thread determinism");
      }
    }
    o.detail << " " << checks << " checks";
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures;
}
