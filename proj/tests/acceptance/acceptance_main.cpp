// End-to-end acceptance checks. Each criterion prints one PASS or FAIL line followed by the
// measurements it was judged on, and the process exits non-zero on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "blo/blo_file.hpp"
#include "blo/distillation.hpp"
#include "blo/estimators.hpp"
#include "blo/harness.hpp"
#include "blo/meta_opt.hpp"
#include "blo/pde.hpp"
#include "blo/quadratic.hpp"
#include "blo/rng.hpp"
#include "blo/unroll.hpp"

namespace fs = std::filesystem;
using namespace blo;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

fs::path scratch_dir(int criterion) {
  const fs::path dir = fs::temp_directory_path() / ("blo_acceptance_" + std::to_string(criterion));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the blo executable named by BLO_CLI with stdout captured to a file. Returns the exit
/// code and fills `stdout_text`.
int run_cli(const std::string& args, const fs::path& dir, std::string& stdout_text) {
  const char* cli = std::getenv("BLO_CLI");
  if (!cli) throw std::runtime_error("BLO_CLI is not set; point it at the blo executable");
  const fs::path out = dir / "cli_stdout.txt";
  const std::string cmd =
      "\"" + std::string(cli) + "\" " + args + " > \"" + out.string() + "\"";
  const int status = std::system(cmd.c_str());
  stdout_text = slurp(out);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1. Variance identity at N = 50.
Outcome criterion_variance() {
  const fs::path dir = scratch_dir(1);
  std::string text;
  const int code = run_cli("variance --n 50 --b 1,7,49 --samples 10000 --out \"" +
                               (dir / "variance.csv").string() + "\"",
                           dir, text);
  std::ifstream csv(dir / "variance.csv");
  const auto rows = read_variance_csv(csv);
  bool pass = code == kExitOk && rows.size() == 3;
  std::string s = "exit " + std::to_string(code);
  for (const auto& r : rows) {
    const double rel = std::abs(r.empirical_ratio / r.predicted_ratio - 1.0);
    pass = pass && rel <= 0.05 && r.status == "ok";
    s += "; b=" + std::to_string(r.b) + " predicted " + fmt(r.predicted_ratio) + " empirical " +
         fmt(r.empirical_ratio) + " (" + fmt(100 * rel) + "% off)";
  }
  return {pass, s};
}

// 2. Exact gradients agree on the small quadratic.
Outcome criterion_gradcheck() {
  const fs::path dir = scratch_dir(2);
  std::string text;
  const int code = run_cli("gradcheck --problem quadratic --T 5", dir, text);
  const GradcheckReport report = gradcheck("quadratic", 5, 0);
  bool pass = code == kExitOk && report.ok();
  std::string s = "exit " + std::to_string(code);
  bool saw_fg2u = false;
  for (const auto& p : report.pairs) {
    // The forward gradient over the full basis must match reverse mode to rounding level;
    // every other pair is held to the finite-difference tolerance.
    const bool exact_pair = (p.a == "rgu" && p.b == "fg2u") || (p.a == "fg2u" && p.b == "rgu");
    const double limit = exact_pair ? 1e-10 : 1e-6;
    saw_fg2u = saw_fg2u || exact_pair;
    pass = pass && p.max_relative_error <= limit;
    s += "; " + p.a + "/" + p.b + " " + fmt(p.max_relative_error);
  }
  return {pass && saw_fg2u, s};
}

std::string quadratic_bench_config(const std::string& estimator, std::size_t T) {
  return R"({"problem": {"kind": "quadratic", "inner_dim": 200, "meta_dim": 50,
             "init": "random", "phi_init_scale": 0.1},
             "estimator": {"T": )" +
         std::to_string(T) + R"(, "b": 4},
             "schedule": {"phase2": {"estimator": ")" +
         estimator + R"(", "steps": 1}},
             "optimizer": {"kind": "gd", "step_size": 0.01}})";
}

// 3. Forward-gradient memory does not grow with T; reverse mode grows linearly.
Outcome criterion_memory() {
  const fs::path dir = scratch_dir(3);
  std::map<std::pair<std::string, std::size_t>, double> peak;
  for (const std::string est : {"fg2u", "rgu"}) {
    for (std::size_t T : {100u, 200u, 400u}) {
      const fs::path cfg = dir / (est + std::to_string(T) + ".json");
      std::ofstream(cfg) << quadratic_bench_config(est, T);
      const fs::path csv_path = dir / (est + std::to_string(T) + ".csv");
      std::string text;
      const int code = run_cli("bench --config \"" + cfg.string() + "\" --threads 1 --steps 1 --out \"" +
                                   csv_path.string() + "\"",
                               dir, text);
      if (code != kExitOk) return {false, "bench exited with " + std::to_string(code)};
      std::ifstream csv(csv_path);
      peak[{est, T}] = static_cast<double>(read_bench_csv(csv).at(0).peak_resident_floats);
    }
  }
  const double fg_change = std::abs(peak[{"fg2u", 200}] / peak[{"fg2u", 100}] - 1.0);
  const double fg_change2 = std::abs(peak[{"fg2u", 400}] / peak[{"fg2u", 200}] - 1.0);
  const LineFit rgu = fit_line({100, 200, 400},
                               {peak[{"rgu", 100}], peak[{"rgu", 200}], peak[{"rgu", 400}]});
  const double rgu_ratio = peak[{"rgu", 200}] / peak[{"rgu", 100}];
  const bool pass = fg_change <= 0.01 && fg_change2 <= 0.01 && rgu.r2 >= 0.999 &&
                    rgu_ratio >= 1.8 && rgu_ratio <= 2.2;
  return {pass, "fg2u peak floats " + fmt(peak[{"fg2u", 100}]) + " / " +
                    fmt(peak[{"fg2u", 200}]) + " / " + fmt(peak[{"fg2u", 400}]) +
                    " at T=100/200/400; rgu " + fmt(peak[{"rgu", 100}]) + " / " +
                    fmt(peak[{"rgu", 200}]) + " / " + fmt(peak[{"rgu", 400}]) +
                    " (doubling ratio " + fmt(rgu_ratio) + ", linear R^2 " + fmt(rgu.r2) + ")"};
}

// 4. TRGU bias decays at the rate of the slowest inner mode.
Outcome criterion_trgu() {
  QuadraticSpec spec;
  spec.inner_dim = 5;
  spec.meta_dim = 3;
  spec.eig_min = 0.1;
  spec.eig_max = 1.0;
  spec.eta = 1.0;
  spec.init = QuadraticInit::FixedPoint;
  spec.seed = 4;
  const auto p = QuadraticBilevel::from_spec(spec);
  const std::size_t T = 50;
  const MetaVector phi{0.4, -0.7, 1.1};
  const Trajectory traj = *unroll(p, phi, T, 0, true).trajectory;
  const MetaVector exact = rgu_backward(p, traj);
  std::vector<double> s_values, log_err;
  for (std::size_t s = 1; s <= T; ++s) {
    s_values.push_back(static_cast<double>(s));
    log_err.push_back(std::log(norm(trgu(p, traj, s) - exact)));
  }
  const LineFit f = fit_line(s_values, log_err);
  const double predicted = std::log(1.0 - p.eta() * p.alpha());
  const double rel = std::abs(f.slope / predicted - 1.0);
  return {rel <= 0.10, "fitted slope " + fmt(f.slope) + ", log(1 - eta alpha) = " +
                           fmt(predicted) + " (" + fmt(100 * rel) + "% off, R^2 " + fmt(f.r2) +
                           ")"};
}

// 5. Neumann series error against a dense inverse.
Outcome criterion_neumann() {
  QuadraticSpec spec;
  spec.inner_dim = 5;
  spec.meta_dim = 3;
  spec.eig_min = 1.0;
  spec.eig_max = 10.0;
  spec.seed = 6;
  const auto p = QuadraticBilevel::from_spec(spec);
  const MetaVector phi{0.3, 0.2, -0.5};
  const InnerVector theta = unroll(p, phi, 20, 0, false).theta;
  const InnerVector d = p.partial_f_theta(theta, phi);
  InnerVector exact(5);
  matvec(spd_inverse(p.A()), d.span(), exact.span());
  const double alpha = 1.0 / (2.0 * p.lambda_max());
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  double err500 = 0.0;
  std::size_t first_below = 0;
  for (std::size_t K = 0; K <= 500; ++K) {
    const double err = norm(neumann_ihvp(p, theta, phi, d, alpha, K) - exact) / norm(exact);
    monotone = monotone && err < prev;
    if (err < 1e-8 && first_below == 0) first_below = K;
    prev = err;
    err500 = err;
  }
  return {monotone && err500 < 1e-8,
          std::string(monotone ? "monotone" : "NOT monotone") + "; relative error at K=500 " +
              fmt(err500) + ", first below 1e-8 at K=" + std::to_string(first_below)};
}

// 6. The zeroth-order estimate converges to the forward gradient at first order in mu.
Outcome criterion_zo() {
  QuadraticSpec spec;
  spec.inner_dim = 8;
  spec.meta_dim = 6;
  spec.init = QuadraticInit::Random;
  spec.seed = 12;
  const auto p = QuadraticBilevel::from_spec(spec);
  MetaVector phi(6);
  for (std::size_t i = 0; i < 6; ++i) phi[i] = 0.5 * std::cos(static_cast<double>(i));
  const auto dirs = sample_directions(Distribution::Rademacher, 6, 2, 21);
  const MetaVector exact = fg2u_estimate(p, phi, 10, 0, dirs).grad;
  std::vector<double> lx, ly;
  std::string s;
  for (double mu : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const double err = norm(fg2u_zo_estimate(p, phi, 10, 0, dirs, mu).grad - exact);
    lx.push_back(std::log10(mu));
    ly.push_back(std::log10(err));
    s += (s.empty() ? "" : ", ") + std::string("mu ") + fmt(mu) + ": " + fmt(err);
  }
  const LineFit f = fit_line(lx, ly);
  return {std::abs(f.slope - 1.0) <= 0.15, "log-log slope " + fmt(f.slope) + " (" + s + ")"};
}

/// Largest eigenvalue of the meta Hessian by power iteration on central differences of the
/// exact hypergradient.
double estimate_meta_smoothness(const QuadraticBilevel& p, const MetaVector& phi, std::size_t T) {
  const auto grad = [&](const MetaVector& x) {
    return rgu_backward(p, *unroll(p, x, T, 0, true).trajectory);
  };
  const double eps = 1e-4;
  double best = 0.0;
  for (std::uint64_t start = 0; start < 3; ++start) {
    MetaVector v = sample_direction(Distribution::Gaussian, p.meta_dim(), 77, start);
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
      v *= 1.0 / norm(v);
      MetaVector hv = grad(phi + eps * v) - grad(phi - eps * v);
      hv *= 1.0 / (2.0 * eps);
      lambda = dot(v, hv);
      v = hv;
    }
    best = std::max(best, lambda);
  }
  return best;
}

// 7. Running mean of the squared gradient norm behaves like C/K and C scales with 1/rho.
Outcome criterion_convergence() {
  QuadraticSpec spec;
  spec.inner_dim = 20;
  spec.meta_dim = 20;
  spec.eig_min = 1.0;
  spec.eig_max = 2.0;
  spec.init = QuadraticInit::Random;
  spec.seed = 31;
  const auto p = QuadraticBilevel::from_spec(spec);
  const std::size_t T = 10, K = 1000, seeds = 5, n = 20;
  const MetaVector phi0(n, 1.0);
  const double L = estimate_meta_smoothness(p, phi0, T);

  const auto fitted_constant = [&](std::size_t b, double& r2) {
    const double rho = static_cast<double>(b) / static_cast<double>(n - 1);
    const double beta = rho / ((rho + 1.0) * L);
    std::vector<double> mean_curve(K, 0.0);
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      MetaVector phi = phi0;
      double running = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        running += squared_norm(quadratic_true_hypergradient(p, phi, T));
        mean_curve[k] += running / static_cast<double>(k + 1) / static_cast<double>(seeds);
        const auto dirs = sample_directions(Distribution::Rademacher, n, b,
                                            training_directions_seed(seed, k, 0));
        phi -= beta * fg2u_estimate(p, phi, T, training_run_seed(seed, k, 0), dirs).grad;
      }
    }
    // Least squares for y = C / K through the origin in 1/K over the tail window, where the
    // running sum has built up. The first few means all equal |grad h(phi_0)|^2 whatever b is.
    const std::size_t k0 = K / 10;
    const double window = static_cast<double>(K - k0);
    double sxy = 0, sxx = 0, ss_tot = 0, mean_y = 0;
    for (std::size_t k = k0; k < K; ++k) mean_y += mean_curve[k] / window;
    for (std::size_t k = k0; k < K; ++k) {
      const double x = 1.0 / static_cast<double>(k + 1);
      sxy += x * mean_curve[k];
      sxx += x * x;
      ss_tot += (mean_curve[k] - mean_y) * (mean_curve[k] - mean_y);
    }
    const double c = sxy / sxx;
    double ss_res = 0;
    for (std::size_t k = k0; k < K; ++k) {
      const double r = mean_curve[k] - c / static_cast<double>(k + 1);
      ss_res += r * r;
    }
    r2 = 1.0 - ss_res / ss_tot;
    return c;
  };
  double r2_full = 0, r2_quarter = 0;
  const double c_full = fitted_constant(16, r2_full);
  const double c_quarter = fitted_constant(4, r2_quarter);
  const double ratio = c_quarter / c_full;
  const bool pass = r2_full >= 0.9 && r2_quarter >= 0.9 && ratio >= 2.0 && ratio <= 8.0;
  return {pass, "L_h " + fmt(L) + "; b=16: C " + fmt(c_full) + " R^2 " + fmt(r2_full) +
                    "; b=4: C " + fmt(c_quarter) + " R^2 " + fmt(r2_quarter) +
                    "; ratio " + fmt(ratio)};
}

// 8. Burgers viscosity recovery through the command-line run.
Outcome criterion_burgers() {
  const fs::path dir = scratch_dir(8);
  const fs::path cfg = fs::path(BLO_SOURCE_DIR) / "configs" / "burgers_zo.json";
  std::string text;
  const int code = run_cli("run --config \"" + cfg.string() + "\" --out \"" +
                               (dir / "run").string() + "\"",
                           dir, text);
  if (code != kExitOk) return {false, "run exited with " + std::to_string(code)};
  const ExperimentConfig resolved = load_config(dir / "run" / "resolved_config.json");
  const auto problem = make_problem(resolved.problem);
  const auto& pde = dynamic_cast<const PdeDiscoveryProblem&>(*problem);
  const BloArray phi_file = read_blo1(dir / "run" / "final_phi.bin");
  const MetaVector phi0 = initial_phi(resolved.problem, *problem, resolved.init_seed);
  const MetaVector phi{std::span<const double>(phi_file.values)};
  const double nu = pde.coefficient(phi);
  const double truth = resolved.problem.pde.nu_true > 0.0
                           ? resolved.problem.pde.nu_true
                           : pde_reference_coefficient(resolved.problem.pde.kind);
  const double rel = std::abs(nu - truth) / truth;
  return {rel <= 2e-2, "initial nu " + fmt(pde.coefficient(phi0)) + ", recovered nu " +
                           fmt(nu) + ", reference " + fmt(truth) + ", relative error " +
                           fmt(rel)};
}

// 9. Final accuracy ordering on the distillation toy.
Outcome criterion_distillation() {
  const std::size_t T = 100, seeds = 5, meta_steps = 500;
  struct Arm {
    std::string name;
    EstimatorKind kind;
  };
  const std::vector<Arm> arms{{"rgu", EstimatorKind::Rgu},
                              {"fg2u", EstimatorKind::Fg2u},
                              {"trgu", EstimatorKind::Trgu},
                              {"hessian_free", EstimatorKind::HessianFree}};
  std::map<std::string, double> accuracy;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    DistillationSpec spec;
    spec.classes = 4;
    spec.feature_dim = 8;
    spec.hidden = 8;
    spec.class_separation = 2.0;
    spec.seed = 100 + seed;
    const DistillationProblem p(spec);
    const MetaVector phi0 = p.initial_meta(seed);
    for (const auto& arm : arms) {
      TrainingSettings s;
      s.schedule.phase2 = {arm.kind, meta_steps};
      s.phase2.T = T;
      s.phase2.b = 8;
      s.phase2.trgu_steps = T / 10;
      s.phase2.alpha = 1.0;
      s.optimizer.step_size = 1e-2;
      s.master_seed = seed;
      const TrainingResult r = run_training(p, s, phi0);
      if (r.record.diverged) return {false, arm.name + " diverged: " + r.record.divergence_message};
      accuracy[arm.name] +=
          p.accuracy(unroll(p, r.phi, T, 0, false).theta) / static_cast<double>(seeds);
    }
  }
  const double rgu = accuracy["rgu"], fg = accuracy["fg2u"];
  const double baseline = std::max(accuracy["trgu"], accuracy["hessian_free"]);
  const bool pass = rgu >= fg && fg >= baseline && rgu - fg <= 0.05;
  std::string s = "mean accuracy over " + std::to_string(seeds) + " seeds:";
  for (const auto& arm : arms) s += " " + arm.name + " " + fmt(100 * accuracy[arm.name]) + "%";
  return {pass, s};
}

// 10. The variance-reduced estimator is unbiased and no noisier than plain forward gradients.
Outcome criterion_vr() {
  QuadraticSpec spec;
  spec.inner_dim = 10;
  spec.meta_dim = 12;
  spec.init = QuadraticInit::Random;
  spec.seed = 17;
  const auto p = QuadraticBilevel::from_spec(spec);
  const std::size_t T = 8, n = 12, b = 3, samples = 20000;

  // Mid-training iterates from a short forward-gradient run.
  TrainingSettings s;
  s.schedule.phase2 = {EstimatorKind::Fg2u, 50};
  s.phase2.T = T;
  s.phase2.b = b;
  s.optimizer.kind = OptimizerKind::GD;
  s.optimizer.step_size = 0.05;
  s.master_seed = 3;
  MetaVector previous(n, 1.0);
  MetaVector phi = previous;
  {
    s.schedule.phase2.steps = 49;
    previous = run_training(p, s, MetaVector(n, 1.0)).phi;
    s.schedule.phase2.steps = 50;
    phi = run_training(p, s, MetaVector(n, 1.0)).phi;
  }
  const MetaVector truth = quadratic_true_hypergradient(p, phi, T);

  MetaVector mean_vr(n), mean_fg(n);
  std::vector<MetaVector> vr_draws, fg_draws;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto dirs = sample_directions(Distribution::Rademacher, n, b, derive_seed(5, k));
    vr_draws.push_back(vr_estimate(p, phi, previous, T, 0, dirs).grad);
    fg_draws.push_back(fg2u_estimate(p, phi, T, 0, dirs).grad);
    mean_vr += vr_draws.back();
    mean_fg += fg_draws.back();
  }
  mean_vr *= 1.0 / static_cast<double>(samples);
  mean_fg *= 1.0 / static_cast<double>(samples);
  const auto total_variance = [&](const std::vector<MetaVector>& draws, const MetaVector& mean) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double vi = 0;
      for (const auto& g : draws) vi += (g[i] - mean[i]) * (g[i] - mean[i]);
      total += vi / static_cast<double>(samples - 1);
    }
    return total;
  };
  const double var_vr = total_variance(vr_draws, mean_vr);
  const double var_fg = total_variance(fg_draws, mean_fg);
  bool unbiased = true;
  double worst_z = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double vi = 0;
    for (const auto& g : vr_draws) vi += (g[i] - mean_vr[i]) * (g[i] - mean_vr[i]);
    const double se = std::sqrt(vi / static_cast<double>(samples - 1) / static_cast<double>(samples));
    const double z = std::abs(mean_vr[i] - truth[i]) / se;
    worst_z = std::max(worst_z, z);
    unbiased = unbiased && z <= 3.0;
  }
  // Truncated baseline variant must stay unbiased as well.
  MetaVector mean_trunc(n);
  for (std::size_t k = 0; k < samples; ++k) {
    const auto dirs = sample_directions(Distribution::Rademacher, n, b, derive_seed(6, k));
    mean_trunc += vr_estimate(p, phi, previous, T, 0, dirs, T / 2).grad;
  }
  mean_trunc *= 1.0 / static_cast<double>(samples);
  const double trunc_err = norm(mean_trunc - truth) / norm(truth);
  const double mc_scale = std::sqrt(var_vr / static_cast<double>(samples)) / norm(truth);
  const bool trunc_ok = trunc_err <= 3.0 * mc_scale;
  const bool pass = unbiased && trunc_ok && var_vr <= var_fg;
  return {pass, "worst |z| " + fmt(worst_z) + "; truncated-baseline relative bias " +
                    fmt(trunc_err) + " (3 sigma " + fmt(3 * mc_scale) + "); variance vr " +
                    fmt(var_vr) + " vs fg2u " + fmt(var_fg)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"variance identity", criterion_variance}},
      {2, {"exact gradient equivalence", criterion_gradcheck}},
      {3, {"constant forward memory", criterion_memory}},
      {4, {"truncated reverse bias rate", criterion_trgu}},
      {5, {"neumann convergence", criterion_neumann}},
      {6, {"zeroth-order consistency", criterion_zo}},
      {7, {"convergence trend", criterion_convergence}},
      {8, {"burgers coefficient recovery", criterion_burgers}},
      {9, {"distillation ordering", criterion_distillation}},
      {10, {"variance reduction sanity", criterion_vr}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 1;
    }
  }
  if (selected.empty())
    for (const auto& [id, _] : criteria) selected.push_back(id);

  bool all = true;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 1;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << id << " (" << it->second.first << "): "
              << (o.pass ? "PASS" : "FAIL") << " [" << fmt(secs) << " s] " << o.summary
              << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
