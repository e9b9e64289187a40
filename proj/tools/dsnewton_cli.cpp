// dsnewton: command-line driver for the sketched Newton experiments.

#include "dsnewton/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace {

using namespace dsnewton;

constexpr const char* kCsvHelp = R"(CSV output (header row fixed per command):
  table1       alpha,sketch,d,d_lambda,m0,trial,m_hat,success
  solve        method,iteration,value,gap,grad_norm,alpha,decrement,m_hat,mean_lambda_hat,seconds
                 iteration 0 is the starting point; grad_norm is |g| at that iterate; gap = value - G*, with G* from exact Newton at |g| <= 1e-12
  bias-curve   experiment,m,q,trial,metric,value
  det-equiv    experiment,m,q,trial,metric,value
  wishart      experiment,m,q,trial,metric,value
                 trial = -1 marks aggregate rows (medians, percentiles, references)

Configuration precedence: built-in defaults < --config file < command-line flags.
The config file holds "key = value" lines; '#' starts a comment. Keys for solve:
  task data n d noise lambda a b max_iters grad_tol decrement_tol max_linesearch_steps
  q m0 sketch policy seed threads uncorrected exact gap_target
Other commands read only seed, sketch, q, m0, lambda, threads.)";

/// Flags shared by every subcommand, stored as strings so they overlay the config file.
struct Globals {
  std::string config;
  std::string output = "-";
  bool scale = false;
  KeyValues flags;
};

void add_value(CLI::App* app, Globals& g, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(flag, [&g, key](const std::string& v) { g.flags[key] = v; }, help);
}

KeyValues merged_config(const Globals& g) {
  KeyValues kv = g.config.empty() ? KeyValues{} : parse_key_values_file(g.config);
  for (const auto& [k, v] : g.flags) kv[k] = v;
  return kv;
}

/// Keys outside `allowed` are rejected so that typos in a config file are not silently ignored.
void require_keys(const KeyValues& kv, const std::vector<std::string>& allowed, const std::string& cmd) {
  for (const auto& [k, v] : kv)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw std::invalid_argument(cmd + ": key '" + k + "' is not used by this command");
}

std::uint64_t kv_seed(const KeyValues& kv) {
  const long long s = detail::kv_int(kv, "seed", 0);
  if (s < 0) throw std::invalid_argument("seed: must be non-negative");
  return static_cast<std::uint64_t>(s);
}

unsigned kv_threads(const KeyValues& kv) {
  const long long t = detail::kv_int(kv, "threads", 0);
  if (t < 0) throw std::invalid_argument("threads: must be non-negative");
  return static_cast<unsigned>(t);
}

long long kv_positive(const KeyValues& kv, const std::string& key, long long fallback) {
  const long long v = detail::kv_int(kv, key, fallback);
  if (v < 1) throw std::invalid_argument(key + ": must be positive");
  return v;
}

SketchDistribution kv_sketch(const KeyValues& kv) {
  const auto it = kv.find("sketch");
  return it == kv.end() ? SketchDistribution::gaussian() : parse_sketch_distribution(it->second);
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw std::runtime_error("cannot open output '" + path + "'");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed sketched Newton with debiased inverse-Hessian estimates"};
  app.footer(kCsvHelp);
  app.require_subcommand(1);
  app.fallthrough();  // subcommands inherit this, so global flags may follow the subcommand name

  Globals g;
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--output,-o", g.output, "CSV output path ('-' for stdout)");
  app.add_flag("--scale", g.scale, "CI scale: table1 runs at d = 2000 instead of 10^4");
  add_value(&app, g, "--seed", "seed", "master seed (default 0)");
  add_value(&app, g, "--sketch", "sketch", "gaussian | rademacher | sparse-rademacher");
  add_value(&app, g, "--q", "q", "number of workers");
  add_value(&app, g, "--m0", "m0", "initial sketch size for the doubling search");
  add_value(&app, g, "--lambda", "lambda", "ridge regularizer");
  add_value(&app, g, "--threads", "threads", "worker threads (0 = hardware concurrency)");

  // table1
  auto* t1 = app.add_subcommand("table1", "success rate of the sketch-size search on power-law spectra");
  Eigen::Index t1_d = 0;
  int t1_trials = 20;
  bool t1_all = false;
  t1->add_option("--d", t1_d, "dimension (default 10000, or 2000 with --scale)")->check(CLI::PositiveNumber);
  t1->add_option("--trials", t1_trials, "trials per row")->check(CLI::PositiveNumber);
  t1->add_flag("--all-sketches", t1_all, "run Gaussian, Rademacher and sparse Rademacher");

  // solve
  auto* sv = app.add_subcommand("solve", "debiased sketched Newton vs uncorrected and exact Newton");
  std::string summary_path;
  add_value(sv, g, "--task", "task", "ridge | logistic | quadratic");
  add_value(sv, g, "--data", "data", "libsvm file (synthetic data when omitted)");
  add_value(sv, g, "--n", "n", "synthetic sample count");
  add_value(sv, g, "--d", "d", "synthetic dimension");
  add_value(sv, g, "--noise", "noise", "synthetic noise variance");
  add_value(sv, g, "--policy", "policy", "auto | once | every-round");
  add_value(sv, g, "--max-iters", "max_iters", "iteration cap");
  add_value(sv, g, "--grad-tol", "grad_tol", "stop when |g| <= grad-tol");
  add_value(sv, g, "--gap-target", "gap_target", "gap reported as iterations_to_target");
  add_value(sv, g, "--uncorrected", "uncorrected", "also run the uncorrected baseline (true/false)");
  add_value(sv, g, "--exact", "exact", "also run exact Newton (true/false)");
  sv->add_option("--summary", summary_path, "JSON summary path, - for stdout (default: stderr)");

  // bias-curve
  auto* bc = app.add_subcommand("bias-curve", "bias proxy |W_bar - W|_F^2 / d^2 against m");
  std::string bc_ens = "L";
  Eigen::Index bc_d = 500;
  int bc_trials = 10;
  std::vector<Eigen::Index> bc_ms;
  bc->add_option("--ensemble", bc_ens, "L | R | zero")->check(CLI::IsMember({"L", "R", "zero", "l", "r"}));
  bc->add_option("--d", bc_d, "dimension (<= 2000)")->check(CLI::Range(1, 2000));
  bc->add_option("--trials", bc_trials, "trials per m")->check(CLI::PositiveNumber);
  bc->add_option("--m", bc_ms, "explicit sketch sizes (default: 1.5 d_lambda doubling to min(d, 16 d_lambda))")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);

  // det-equiv
  auto* de = app.add_subcommand("det-equiv", "sketched resolvent vs Marchenko-Pastur deterministic equivalent");
  DetEquivOptions de_opt;
  de->add_option("--d", de_opt.d, "dimension")->check(CLI::PositiveNumber);
  de->add_option("--m", de_opt.m, "sketch size")->check(CLI::PositiveNumber);
  de->add_option("--z", de_opt.z, "negative spectral argument");
  de->add_option("--trials", de_opt.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  de->add_option("--alpha", de_opt.alpha, "spectrum k^-alpha (0 gives H = I)")->check(CLI::NonNegativeNumber);
  de->add_option("--u", de_opt.u_index, "0-based coordinate of u")->check(CLI::NonNegativeNumber);
  de->add_option("--v", de_opt.v_index, "0-based coordinate of v")->check(CLI::NonNegativeNumber);

  // wishart
  auto* wi = app.add_subcommand("wishart", "|W_bar - I| for H = 0 against max(r, sqrt r), r = d/(mq)");
  WishartOptions wi_opt;
  wi->add_option("--d", wi_opt.d, "dimension")->check(CLI::PositiveNumber);
  wi->add_option("--m", wi_opt.m, "sketch size")->check(CLI::PositiveNumber);
  wi->add_option("--qs", wi_opt.qs, "worker counts (overridden by --q)")->delimiter(',')->check(CLI::PositiveNumber);
  wi->add_option("--trials", wi_opt.trials, "trials per q")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    const KeyValues kv = merged_config(g);
    const std::vector<std::string> generic{"seed", "sketch", "q", "m0", "lambda", "threads"};
    Output out(g.output);

    if (t1->parsed()) {
      require_keys(kv, generic, "table1");
      if (kv.count("q")) throw std::invalid_argument("table1: --q is not used by this command");
      Table1Options o;
      o.d = t1_d > 0 ? t1_d : (g.scale ? 2000 : 10000);
      o.trials = t1_trials;
      o.m0 = kv_positive(kv, "m0", o.m0);
      o.lambda = detail::kv_double(kv, "lambda", o.lambda);
      if (!(o.lambda > 0.0)) throw std::invalid_argument("lambda: must be positive");
      o.seed = kv_seed(kv);
      o.threads = kv_threads(kv);
      if (t1_all) {
        o.sketches = {SketchDistribution::gaussian(), SketchDistribution::rademacher(),
                      SketchDistribution::sparse_rademacher()};
      } else {
        o.sketches = {kv_sketch(kv)};
      }
      for (const auto& r : cmd_table1(o, out.stream()))
        std::cerr << "alpha=" << r.alpha << " sketch=" << r.sketch << " d_lambda=" << r.d_lambda
                  << " success=" << r.success_rate << " modal_m_hat=" << r.modal_m_hat << " ("
                  << r.modal_fraction << ")\n";
    } else if (sv->parsed()) {
      const RunConfig cfg = run_config_from(kv);
      if (summary_path.empty()) {
        cmd_solve(cfg, out.stream(), &std::cerr);
      } else if (summary_path == "-") {
        cmd_solve(cfg, out.stream(), &std::cout);
      } else {
        std::ofstream js(summary_path);
        if (!js) throw std::runtime_error("cannot open summary '" + summary_path + "'");
        cmd_solve(cfg, out.stream(), &js);
      }
    } else if (bc->parsed()) {
      require_keys(kv, generic, "bias-curve");
      if (kv.count("lambda")) throw std::invalid_argument("bias-curve: lambda is fixed by the ensemble");
      BiasCurveOptions o;
      o.ensemble = parse_ensemble(bc_ens);
      o.d = bc_d;
      o.trials = bc_trials;
      o.ms = bc_ms;
      o.q = static_cast<int>(kv_positive(kv, "q", o.q));
      o.m0 = kv_positive(kv, "m0", o.m0);
      o.seed = kv_seed(kv);
      o.dist = kv_sketch(kv);
      o.threads = kv_threads(kv);
      const auto rep = cmd_bias_curve(o, out.stream());
      std::cerr << "d_lambda=" << rep.curve.effective_dim << " alg1_m_hat=" << rep.alg1_m_hat << '\n';
      for (const auto& r : rep.curve.rows)
        std::cerr << "m=" << r.m << " corrected_median=" << r.corrected.median
                  << " uncorrected_median=" << r.uncorrected.median << '\n';
    } else if (de->parsed()) {
      require_keys(kv, {"seed", "sketch", "threads"}, "det-equiv");
      if (!(de_opt.z < 0.0)) throw std::invalid_argument("det-equiv: --z must be negative");
      if (de_opt.u_index >= de_opt.d || de_opt.v_index >= de_opt.d)
        throw std::invalid_argument("det-equiv: --u and --v must be below --d");
      de_opt.seed = kv_seed(kv);
      de_opt.dist = kv_sketch(kv);
      de_opt.threads = kv_threads(kv);
      const auto r = cmd_det_equiv(de_opt, out.stream());
      std::cerr << "stieltjes_deviation=" << r.stieltjes_deviation << " bilinear_deviation=" << r.bilinear_deviation
                << " budget=" << r.budget << '\n';
    } else if (wi->parsed()) {
      require_keys(kv, {"seed", "sketch", "q", "lambda", "threads"}, "wishart");
      if (kv.count("q")) wi_opt.qs = {static_cast<int>(kv_positive(kv, "q", 1))};
      wi_opt.lambda = detail::kv_double(kv, "lambda", wi_opt.lambda);
      if (!(wi_opt.lambda > 0.0)) throw std::invalid_argument("lambda: must be positive");
      wi_opt.seed = kv_seed(kv);
      wi_opt.dist = kv_sketch(kv);
      wi_opt.threads = kv_threads(kv);
      for (const auto& [q, r] : cmd_wishart(wi_opt, out.stream()))
        std::cerr << "q=" << q << " median=" << r.median << " reference=" << r.reference << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
