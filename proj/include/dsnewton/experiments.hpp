#pragma once

// Experiment drivers behind the command-line tool. Each driver writes CSV to a
// caller-supplied stream and returns a summary for programmatic checks.
//
// CSV schemas (header row is fixed per command):
//   table1      alpha,sketch,d,d_lambda,m0,trial,m_hat,success
//   solve       method,iteration,value,gap,grad_norm,alpha,decrement,m_hat,mean_lambda_hat,seconds
//   bias-curve, det-equiv, wishart
//               experiment,m,q,trial,metric,value   (trial = -1 marks aggregate rows)

#include "dsnewton/calibration.hpp"
#include "dsnewton/diagnostics.hpp"
#include "dsnewton/io.hpp"
#include "dsnewton/newton_solver.hpp"
#include "dsnewton/objectives.hpp"
#include "dsnewton/parallel.hpp"
#include "dsnewton/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsnewton {

inline const std::vector<std::string> kDiagnosticsHeader{"experiment", "m", "q", "trial", "metric", "value"};

// ---------------------------------------------------------------- table1

struct Table1Options {
  Eigen::Index d = 10000;
  std::vector<double> alphas{1.0, 2.0 / 3.0, 0.5};
  std::vector<SketchDistribution> sketches{SketchDistribution::gaussian()};
  int trials = 20;
  Eigen::Index m0 = 10;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct Table1Row {
  double alpha = 0.0;
  std::string sketch;
  double d_lambda = 0.0;
  std::vector<Eigen::Index> m_hat;
  double success_rate = 0.0;
  double mean_m_hat = 0.0;
  Eigen::Index modal_m_hat = 0;
  double modal_fraction = 0.0;
};

/// Success means 1.5 d_lambda <= m_hat <= max(m0, 4 d_lambda).
inline bool table1_success(Eigen::Index m_hat, double d_lambda, Eigen::Index m0) {
  const double m = static_cast<double>(m_hat);
  return m >= 1.5 * d_lambda && m <= std::max(static_cast<double>(m0), 4.0 * d_lambda);
}

inline std::vector<Table1Row> cmd_table1(const Table1Options& opt, std::ostream& out) {
  CsvWriter csv(out, {"alpha", "sketch", "d", "d_lambda", "m0", "trial", "m_hat", "success"});
  std::vector<Table1Row> rows;
  for (std::size_t ai = 0; ai < opt.alphas.size(); ++ai) {
    const Spectrum spec = Spectrum::power_law(opt.d, opt.alphas[ai]);
    const HessianView h = HessianView::diagonal(spec.eigenvalues());
    const double deff = effective_dimension(spec, opt.lambda);
    for (std::size_t si = 0; si < opt.sketches.size(); ++si) {
      Table1Row row{opt.alphas[ai], opt.sketches[si].name(), deff, {}, 0.0, 0.0, 0, 0.0};
      row.m_hat.assign(static_cast<std::size_t>(opt.trials), 0);
      parallel_for(row.m_hat.size(), opt.threads, [&](std::size_t trial) {
        const std::uint64_t s = mix_seed(opt.seed, ai * 64 + si, trial);
        row.m_hat[trial] = choose_m(h, opt.lambda, opt.m0, opt.sketches[si], s).m_hat;
      });
      std::map<Eigen::Index, int> counts;
      int ok = 0;
      double sum = 0.0;
      for (int t = 0; t < opt.trials; ++t) {
        const Eigen::Index m = row.m_hat[static_cast<std::size_t>(t)];
        const bool success = table1_success(m, deff, opt.m0);
        ok += success;
        sum += static_cast<double>(m);
        ++counts[m];
        csv.write(row.alpha, row.sketch, static_cast<long long>(opt.d), deff, static_cast<long long>(opt.m0), t,
                  static_cast<long long>(m), success ? 1 : 0);
      }
      row.success_rate = static_cast<double>(ok) / opt.trials;
      row.mean_m_hat = sum / opt.trials;
      for (const auto& [m, c] : counts)
        if (c > row.modal_fraction * opt.trials) {
          row.modal_m_hat = m;
          row.modal_fraction = static_cast<double>(c) / opt.trials;
        }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------- solve

enum class Task { Ridge, Logistic, Quadratic };

inline Task parse_task(const std::string& s) {
  if (s == "ridge") return Task::Ridge;
  if (s == "logistic") return Task::Logistic;
  if (s == "quadratic") return Task::Quadratic;
  throw std::invalid_argument("task: expected ridge|logistic|quadratic, got '" + s + "'");
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::Ridge: return "ridge";
    case Task::Logistic: return "logistic";
    case Task::Quadratic: return "quadratic";
  }
  return "?";
}

inline CalibrationPolicy parse_policy(const std::string& s) {
  if (s == "auto") return CalibrationPolicy::Auto;
  if (s == "once") return CalibrationPolicy::Once;
  if (s == "every-round") return CalibrationPolicy::EveryRound;
  throw std::invalid_argument("policy: expected auto|once|every-round, got '" + s + "'");
}

struct RunConfig {
  Task task = Task::Ridge;
  std::string data_path;  ///< libsvm file; empty selects the synthetic generator
  Eigen::Index n = 2000;
  Eigen::Index d = 200;
  std::optional<double> noise_variance;  ///< generator default when unset
  double lambda = 1e-3;
  SolverConfig solver;
  std::uint64_t seed = 0;
  bool run_uncorrected = true;
  bool run_exact = true;
  double gap_target = 1e-8;

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (data_path.empty()) {
      if (n < 1) throw std::invalid_argument("n must be positive");
      if (d < 1) throw std::invalid_argument("d must be positive");
      if (n < d) throw std::invalid_argument("n must be >= d for the synthetic generator");
    }
    if (noise_variance && !(*noise_variance >= 0.0)) throw std::invalid_argument("noise must be non-negative");
    if (!(gap_target > 0.0)) throw std::invalid_argument("gap_target must be positive");
    solver.validate();
  }
};

namespace detail {
inline double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected a number, got '" + it->second + "'");
  }
}

inline long long kv_int(const KeyValues& kv, const std::string& key, long long fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected an integer, got '" + it->second + "'");
  }
}

inline bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + it->second + "'");
}
}  // namespace detail

inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys{
      "task", "data",   "n",        "d",        "noise",         "lambda", "a",    "b",
      "max_iters", "grad_tol", "decrement_tol", "max_linesearch_steps", "q", "m0", "sketch", "policy",
      "seed", "threads", "uncorrected", "exact", "gap_target"};
  return keys;
}

/// Applies key/value overrides on top of `base`, then validates.
inline RunConfig run_config_from(const KeyValues& kv, RunConfig base = {}) {
  for (const auto& [k, v] : kv) {
    const auto& keys = run_config_keys();
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw std::invalid_argument("unknown config key '" + k + "'");
  }
  using namespace detail;
  RunConfig c = std::move(base);
  if (auto it = kv.find("task"); it != kv.end()) c.task = parse_task(it->second);
  if (auto it = kv.find("data"); it != kv.end()) c.data_path = it->second;
  c.n = kv_int(kv, "n", c.n);
  c.d = kv_int(kv, "d", c.d);
  if (kv.count("noise")) c.noise_variance = kv_double(kv, "noise", 0.0);
  c.lambda = kv_double(kv, "lambda", c.lambda);
  c.solver.a = kv_double(kv, "a", c.solver.a);
  c.solver.b = kv_double(kv, "b", c.solver.b);
  c.solver.max_iters = static_cast<int>(kv_int(kv, "max_iters", c.solver.max_iters));
  c.solver.grad_tol = kv_double(kv, "grad_tol", c.solver.grad_tol);
  c.solver.decrement_tol = kv_double(kv, "decrement_tol", c.solver.decrement_tol);
  c.solver.max_linesearch_steps = static_cast<int>(kv_int(kv, "max_linesearch_steps", c.solver.max_linesearch_steps));
  c.solver.q = static_cast<int>(kv_int(kv, "q", c.solver.q));
  c.solver.m0 = kv_int(kv, "m0", c.solver.m0);
  if (auto it = kv.find("sketch"); it != kv.end()) c.solver.dist = parse_sketch_distribution(it->second);
  if (auto it = kv.find("policy"); it != kv.end()) c.solver.calibration_policy = parse_policy(it->second);
  const long long seed = kv_int(kv, "seed", static_cast<long long>(c.seed));
  if (seed < 0) throw std::invalid_argument("seed: must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const long long threads = kv_int(kv, "threads", c.solver.threads);
  if (threads < 0) throw std::invalid_argument("threads: must be non-negative");
  c.solver.threads = static_cast<unsigned>(threads);
  c.run_uncorrected = kv_bool(kv, "uncorrected", c.run_uncorrected);
  c.run_exact = kv_bool(kv, "exact", c.run_exact);
  c.gap_target = kv_double(kv, "gap_target", c.gap_target);
  c.solver.master_seed = c.seed;
  c.validate();
  return c;
}

inline std::unique_ptr<Objective> build_objective(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) {
    if (cfg.task == Task::Quadratic) throw std::invalid_argument("quadratic task takes no data file");
    const LabelMode mode = cfg.task == Task::Logistic ? LabelMode::Binary : LabelMode::Raw;
    Dataset data = parse_libsvm(cfg.data_path, mode);
    if (cfg.task == Task::Logistic) return logistic_objective(std::move(data), cfg.lambda);
    return ridge_objective(std::move(data), cfg.lambda);
  }
  switch (cfg.task) {
    case Task::Ridge:
      return ridge_objective(synth_ridge(cfg.n, cfg.d, cfg.seed, cfg.noise_variance.value_or(0.01)).data, cfg.lambda);
    case Task::Logistic:
      return logistic_objective(synth_logistic(cfg.n, cfg.d, cfg.seed, cfg.noise_variance.value_or(1e4)).data,
                                cfg.lambda);
    case Task::Quadratic: {
      Rng rng(cfg.seed);
      const Matrix x = synth_design(cfg.n, cfg.d, rng);
      const Vector b = gaussian_matrix(cfg.d, 1, rng);
      return quadratic_objective(SymmetricMatrix(x.transpose() * x), b, cfg.lambda);
    }
  }
  throw std::logic_error("unreachable");
}

struct MethodReport {
  std::string method;
  int iterations = 0;
  std::optional<int> iterations_to_target;  ///< first t with gap <= gap_target
  double final_gap = 0.0;
  double final_grad_norm = 0.0;
  bool converged = false;
  bool monotone = true;
  double seconds = 0.0;
  SolveResult result;
};

struct SolveReport {
  double optimum = 0.0;
  std::vector<MethodReport> methods;

  const MethodReport& method(const std::string& name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    throw std::out_of_range("no method '" + name + "'");
  }
};

/// Reference optimum from exact Newton run to |g| <= 1e-12.
inline double reference_optimum(const Objective& G) {
  SolverConfig ref;
  ref.grad_tol = 1e-12;
  ref.decrement_tol = 0.0;
  ref.max_iters = 200;
  return G.value(exact_newton_solve(G, Vector::Zero(G.dim()), ref).theta);
}

inline SolveReport cmd_solve(const RunConfig& cfg, std::ostream& csv_out, std::ostream* summary_out = nullptr) {
  cfg.validate();
  const auto G = build_objective(cfg);
  SolveReport rep;
  rep.optimum = reference_optimum(*G);

  CsvWriter csv(csv_out, {"method", "iteration", "value", "gap", "grad_norm", "alpha", "decrement", "m_hat",
                          "mean_lambda_hat", "seconds"});
  auto run = [&](const std::string& name, auto&& solve) {
    const auto start = std::chrono::steady_clock::now();
    MethodReport mr;
    mr.method = name;
    mr.result = solve();
    mr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& tr = mr.result.trace;
    double prev = tr.initial_value;
    const double gap0 = prev - rep.optimum;
    // grad_norm column is |g(theta_t)|; records carry the gradient of the step's starting point
    const auto grad_at = [&](std::size_t i) {
      return i < tr.records.size() ? tr.records[i].grad_norm : mr.result.final_gradient.norm();
    };
    csv.write(name, 0, prev, gap0, grad_at(0), 0.0, 0.0, 0, 0.0, 0.0);
    if (gap0 <= cfg.gap_target) mr.iterations_to_target = 0;
    for (std::size_t i = 0; i < tr.records.size(); ++i) {
      const auto& r = tr.records[i];
      const double gap = r.value - rep.optimum;
      csv.write(name, r.t, r.value, gap, grad_at(i + 1), r.alpha, r.decrement, static_cast<long long>(r.m_hat),
                r.mean_lambda_hat, r.seconds);
      if (!mr.iterations_to_target && gap <= cfg.gap_target) mr.iterations_to_target = r.t;
      if (r.value > prev) mr.monotone = false;
      prev = r.value;
    }
    mr.iterations = static_cast<int>(tr.records.size());
    mr.final_gap = G->value(mr.result.theta) - rep.optimum;
    mr.final_grad_norm = mr.result.final_gradient.norm();
    mr.converged = mr.result.converged;
    rep.methods.push_back(std::move(mr));
  };

  const Vector theta0 = Vector::Zero(G->dim());
  run("debiased", [&] { return sketched_newton_solve(*G, theta0, cfg.solver); });
  if (cfg.run_uncorrected) {
    SolverConfig u = cfg.solver;
    u.uncorrected = true;
    run("uncorrected", [&] { return sketched_newton_solve(*G, theta0, u); });
  }
  if (cfg.run_exact) run("exact", [&] { return exact_newton_solve(*G, theta0, cfg.solver); });

  if (summary_out) {
    nlohmann::json j;
    j["task"] = task_name(cfg.task);
    j["dim"] = G->dim();
    j["lambda"] = cfg.lambda;
    j["q"] = cfg.solver.q;
    j["sketch"] = cfg.solver.dist.name();
    j["seed"] = cfg.seed;
    j["optimum"] = rep.optimum;
    j["gap_target"] = cfg.gap_target;
    for (const auto& m : rep.methods) {
      nlohmann::json mj;
      mj["iterations"] = m.iterations;
      mj["iterations_to_target"] = m.iterations_to_target ? nlohmann::json(*m.iterations_to_target) : nlohmann::json();
      mj["final_gap"] = m.final_gap;
      mj["final_grad_norm"] = m.final_grad_norm;
      mj["converged"] = m.converged;
      mj["roundoff_limited"] = m.result.roundoff_limited;
      mj["monotone"] = m.monotone;
      mj["seconds"] = m.seconds;
      j["methods"][m.method] = mj;
    }
    *summary_out << j.dump(2) << '\n';
  }
  return rep;
}

// ---------------------------------------------------------------- bias-curve

enum class EnsembleKind { L, R, Zero };

inline EnsembleKind parse_ensemble(const std::string& s) {
  if (s == "L" || s == "l") return EnsembleKind::L;
  if (s == "R" || s == "r") return EnsembleKind::R;
  if (s == "zero") return EnsembleKind::Zero;
  throw std::invalid_argument("ensemble: expected L|R|zero, got '" + s + "'");
}

struct BiasCurveOptions {
  EnsembleKind ensemble = EnsembleKind::L;
  Eigen::Index d = 500;
  int q = 50;
  int trials = 10;
  std::uint64_t seed = 0;
  SketchDistribution dist = SketchDistribution::gaussian();
  std::vector<Eigen::Index> ms;  ///< explicit grid; empty selects the default sweep
  Eigen::Index m0 = 10;
  unsigned threads = 0;
};

struct BiasCurveReport {
  BiasCurve curve;
  Eigen::Index alg1_m_hat = 0;
  double lambda = 0.0;
};

inline BiasCurveReport cmd_bias_curve(const BiasCurveOptions& opt, std::ostream& out) {
  if (opt.d > kMaxDenseDim) throw std::invalid_argument("bias-curve: d must be <= 2000");
  const std::string name = opt.ensemble == EnsembleKind::L ? "bias-L" : opt.ensemble == EnsembleKind::R ? "bias-R" : "bias-zero";
  const Ensemble ens = opt.ensemble == EnsembleKind::L   ? ensemble_l(opt.d, opt.seed)
                       : opt.ensemble == EnsembleKind::R ? ensemble_r(opt.d, opt.seed)
                                                         : Ensemble{HessianView::diagonal(Vector::Zero(opt.d)), 1.0};
  BiasCurveReport rep;
  rep.lambda = ens.lambda;
  rep.curve.effective_dim = effective_dimension(Spectrum::of(ens.hessian), ens.lambda);
  std::vector<Eigen::Index> ms = opt.ms;
  if (ms.empty()) {
    ms = opt.ensemble == EnsembleKind::Zero ? std::vector<Eigen::Index>{opt.m0, 2 * opt.m0, 4 * opt.m0}
                                            : bias_curve_grid(rep.curve.effective_dim, opt.d);
  }
  CsvWriter csv(out, kDiagnosticsHeader);
  csv.write(name, 0, opt.q, -1, "d_lambda", rep.curve.effective_dim);
  rep.alg1_m_hat = choose_m(ens.hessian, ens.lambda, opt.m0, opt.dist, mix_seed(opt.seed, 0, 0)).m_hat;
  csv.write(name, static_cast<long long>(rep.alg1_m_hat), opt.q, -1, "alg1_m_hat", static_cast<double>(rep.alg1_m_hat));
  for (Eigen::Index m : ms) {
    const BiasPoint p = bias_proxy(ens.hessian, ens.lambda, m, opt.q, opt.dist, opt.trials, opt.seed, opt.threads);
    for (int t = 0; t < opt.trials; ++t) {
      csv.write(name, static_cast<long long>(m), opt.q, t, "corrected", p.corrected[t]);
      csv.write(name, static_cast<long long>(m), opt.q, t, "uncorrected", p.uncorrected[t]);
      csv.write(name, static_cast<long long>(m), opt.q, t, "mean_lambda_hat", p.mean_lambda_hat[t]);
    }
    BiasCurveRow row{m, SummaryStats::of(p.corrected), SummaryStats::of(p.uncorrected)};
    for (const auto& [label, s] : {std::pair{"corrected", row.corrected}, std::pair{"uncorrected", row.uncorrected}}) {
      csv.write(name, static_cast<long long>(m), opt.q, -1, std::string(label) + "_p20", s.p20);
      csv.write(name, static_cast<long long>(m), opt.q, -1, std::string(label) + "_median", s.median);
      csv.write(name, static_cast<long long>(m), opt.q, -1, std::string(label) + "_p80", s.p80);
    }
    rep.curve.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------- det-equiv

struct DetEquivOptions {
  Eigen::Index d = 800;
  Eigen::Index m = 400;
  double z = -1.0;
  int trials = 100;
  double alpha = 0.0;  ///< spectrum k^{-alpha}; 0 gives H = I
  Eigen::Index u_index = 0;
  Eigen::Index v_index = 0;
  std::uint64_t seed = 0;
  SketchDistribution dist = SketchDistribution::gaussian();
  unsigned threads = 0;
};

inline DeterministicEquivalentReport cmd_det_equiv(const DetEquivOptions& opt, std::ostream& out) {
  const Spectrum spec = Spectrum::power_law(opt.d, opt.alpha);
  const auto r = deterministic_equivalent_check(spec, opt.m, opt.z, opt.trials, opt.seed, opt.u_index, opt.v_index,
                                                opt.dist, opt.threads);
  CsvWriter csv(out, kDiagnosticsHeader);
  const auto m = static_cast<long long>(opt.m);
  csv.write("det-equiv", m, 1, -1, "z", opt.z);
  csv.write("det-equiv", m, 1, -1, "stieltjes_empirical_mean", r.stieltjes_empirical_mean);
  csv.write("det-equiv", m, 1, -1, "stieltjes_oracle", r.stieltjes_oracle);
  csv.write("det-equiv", m, 1, -1, "stieltjes_deviation", r.stieltjes_deviation);
  csv.write("det-equiv", m, 1, -1, "bilinear_empirical_mean", r.bilinear_empirical_mean);
  csv.write("det-equiv", m, 1, -1, "bilinear_deterministic", r.bilinear_deterministic);
  csv.write("det-equiv", m, 1, -1, "bilinear_deviation", r.bilinear_deviation);
  csv.write("det-equiv", m, 1, -1, "budget", r.budget);
  return r;
}

// ---------------------------------------------------------------- wishart

struct WishartOptions {
  Eigen::Index d = 200;
  Eigen::Index m = 50;
  std::vector<int> qs{8, 16, 32};
  double lambda = 1.0;
  int trials = 20;
  std::uint64_t seed = 0;
  SketchDistribution dist = SketchDistribution::gaussian();
  unsigned threads = 0;
};

inline std::vector<std::pair<int, WishartReport>> cmd_wishart(const WishartOptions& opt, std::ostream& out) {
  CsvWriter csv(out, kDiagnosticsHeader);
  std::vector<std::pair<int, WishartReport>> reps;
  const auto m = static_cast<long long>(opt.m);
  for (int q : opt.qs) {
    WishartReport r =
        wishart_error_norm(opt.d, opt.m, q, opt.lambda, opt.trials, mix_seed(opt.seed, static_cast<std::uint64_t>(q), 0),
                           opt.dist, opt.threads);
    for (int t = 0; t < opt.trials; ++t) csv.write("wishart", m, q, t, "error_norm", r.norms[t]);
    csv.write("wishart", m, q, -1, "median", r.median);
    csv.write("wishart", m, q, -1, "reference", r.reference);
    reps.emplace_back(q, std::move(r));
  }
  return reps;
}

}  // namespace dsnewton
