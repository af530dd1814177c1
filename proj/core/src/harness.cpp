#include "blo/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "blo/blo_file.hpp"
#include "blo/fd.hpp"
#include "blo/parallel.hpp"
#include "blo/rng.hpp"

namespace blo {
namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  for (;;) {
    const auto comma = line.find(',');
    fields.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return fields;
}

template <class T>
T parse_number(std::string_view s, const char* what) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidArgument(std::string(what) + ": cannot parse '" + std::string(s) + "'");
  return value;
}

/// Reads a CSV with an exact header, handing each row's fields to `row`.
template <class Row>
void read_csv(std::istream& in, std::string_view header, std::size_t columns, const char* what,
              Row&& row) {
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw InvalidArgument(std::string(what) + ": missing or unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != columns)
      throw InvalidArgument(std::string(what) + ": expected " + std::to_string(columns) +
                            " fields per row");
    row(fields);
  }
}

MetaVector gaussian_meta(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  MetaVector phi(n);
  for (double& x : phi) x = rng.normal();
  return phi;
}

bool bit_equal(const MetaVector& a, const MetaVector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                   std::ostream& out, std::ostream& err) {
  std::unique_ptr<BilevelProblem> problem;
  MetaVector phi0;
  try {
    validate_config(config);
    problem = make_problem(config.problem);
    phi0 = initial_phi(config.problem, *problem, config.init_seed);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  TrainingSettings ts;
  ts.schedule = config.schedule;
  ts.phase1 = config.estimator;
  ts.phase2 = config.estimator;
  ts.optimizer = config.optimizer;
  ts.accumulation = config.accumulation;
  ts.master_seed = config.master_seed;
  ts.record_wall_time = true;

  TrainingResult result;
  int code = kExitOk;
  try {
    result = run_training(*problem, ts, phi0);
  } catch (const NeumannDivergence& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const NotDifferentiable& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const OracleTooLarge& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (result.record.diverged) {
    err << "divergence: " << result.record.divergence_message << '\n';
    code = kExitDivergence;
  }

  std::filesystem::create_directories(out_dir);
  RunRecord deterministic = result.record;
  std::ostringstream timing;
  timing << "step,wall_seconds\n";
  for (auto& row : deterministic.rows) {
    timing << row.step << ',' << format_double(row.wall_seconds) << '\n';
    row.wall_seconds = 0.0;
  }
  std::ostringstream csv;
  write_run_csv(csv, deterministic);
  write_text_file(out_dir / "run.csv", csv.str());
  write_text_file(out_dir / "run_timing.csv", timing.str());
  const std::uint32_t extent = static_cast<std::uint32_t>(result.phi.size());
  write_blo1(out_dir / "final_phi.bin", std::span<const std::uint32_t>(&extent, 1),
             result.phi.span());
  ExperimentConfig resolved = config;
  resolved.output_directory = out_dir.string();
  write_text_file(out_dir / "resolved_config.json", config_to_json(resolved));

  out << "problem " << problem->name() << ", " << result.record.rows.size() << " steps\n";
  if (!result.record.rows.empty())
    out << "last meta loss " << format_double(result.record.rows.back().meta_loss) << '\n';
  if (config.problem.kind == ProblemKind::Pde) {
    const auto& pde = dynamic_cast<const PdeDiscoveryProblem&>(*problem);
    const double nu = pde.coefficient(result.phi);
    const double truth = config.problem.pde.nu_true > 0.0
                             ? config.problem.pde.nu_true
                             : pde_reference_coefficient(config.problem.pde.kind);
    out << "recovered nu " << format_double(nu) << " (reference " << format_double(truth)
        << ", relative error " << format_double(std::abs(nu - truth) / truth) << ")\n";
  }
  out << "wrote " << (out_dir / "run.csv").string() << '\n';
  return code;
}

int cmd_run(const std::filesystem::path& config_path,
            const std::optional<std::filesystem::path>& out_dir, std::ostream& out,
            std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return run_experiment(config, out_dir ? *out_dir : std::filesystem::path(config.output_directory), out,
                        err);
}

bool GradcheckReport::ok() const {
  for (const auto& p : pairs)
    if (!p.ok) return false;
  return true;
}

GradcheckReport gradcheck(const std::string& problem_name, std::size_t T, std::uint64_t seed) {
  ProblemConfig pc;
  pc.kind = problem_kind_from_string(problem_name);
  if (pc.kind == ProblemKind::Pde)
    throw NotDifferentiable("gradcheck: the pde problem has no derivative oracles");
  double fd_tol = 1e-6;
  if (pc.kind == ProblemKind::Distillation) {
    pc.distillation.classes = 3;
    pc.distillation.feature_dim = 4;
    pc.distillation.samples_per_class = 20;
    pc.distillation.seed = seed;
    fd_tol = 1e-5;
  } else {
    pc.quadratic.seed = seed;
  }
  const auto problem = make_problem(pc);
  const MetaVector phi = pc.kind == ProblemKind::Distillation
                             ? initial_phi(pc, *problem, seed)
                             : gaussian_meta(problem->meta_dim(), derive_seed(seed, 1));

  const UnrollResult run = unroll(*problem, phi, T, seed, true);
  const std::vector<std::pair<std::string, MetaVector>> grads{
      {"fd", fd_gradient([&](const MetaVector& p) { return problem->black_box_h(p, T, seed); },
                         phi)},
      {"fgu", fgu_full(*problem, phi, T, seed).grad},
      {"rgu", rgu_backward(*problem, *run.trajectory)},
      {"trgu", trgu(*problem, *run.trajectory, T)},
      {"fg2u", fg2u_estimate(*problem, phi, T, seed, coordinate_basis(problem->meta_dim())).grad},
  };

  GradcheckReport report{problem->name(), T, {}};
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t j = i + 1; j < grads.size(); ++j) {
      const auto& [a, ga] = grads[i];
      const auto& [b, gb] = grads[j];
      double tol = 1e-9;
      if (a == "fd" || b == "fd") tol = fd_tol;
      if ((a == "rgu" && b == "fg2u") || (a == "fg2u" && b == "rgu")) tol = 1e-10;
      const double e = max_relative_error(ga, gb);
      report.pairs.push_back({a, b, e, tol, e <= tol});
    }
  return report;
}

void print_gradcheck(std::ostream& out, const GradcheckReport& report) {
  out << "gradcheck " << report.problem << " T=" << report.T << '\n';
  out << std::left << std::setw(8) << "a" << std::setw(8) << "b" << std::setw(16)
      << "max_rel_err" << std::setw(12) << "threshold" << "status\n";
  for (const auto& p : report.pairs) {
    std::ostringstream e, t;
    e << std::scientific << std::setprecision(3) << p.max_relative_error;
    t << std::scientific << std::setprecision(0) << p.threshold;
    out << std::left << std::setw(8) << p.a << std::setw(8) << p.b << std::setw(16) << e.str()
        << std::setw(12) << t.str() << (p.ok ? "ok" : "FAIL") << '\n';
  }
}

int cmd_gradcheck(const std::string& problem, std::size_t T, std::uint64_t seed,
                  std::ostream& out, std::ostream& err) {
  try {
    const GradcheckReport report = gradcheck(problem, T, seed);
    print_gradcheck(out, report);
    return report.ok() ? kExitOk : kExitTolerance;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NotDifferentiable& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  }
}

QuadraticSpec variance_problem_spec(std::size_t n) {
  QuadraticSpec spec;
  spec.meta_dim = n;
  spec.inner_dim = std::min<std::size_t>(n, 20);
  spec.eig_min = 1.0;
  spec.eig_max = 2.0;
  spec.lambda = 0.1;
  spec.seed = 2024;
  return spec;
}

std::vector<VarianceRow> variance_study(std::size_t n, const std::vector<std::size_t>& bs,
                                        std::size_t samples, std::uint64_t seed,
                                        std::size_t threads) {
  if (n < 2) throw InvalidArgument("variance: N must be at least 2");
  const QuadraticBilevel problem = QuadraticBilevel::from_spec(variance_problem_spec(n));
  const MetaVector phi = gaussian_meta(n, derive_seed(seed, 0x7068));
  constexpr std::size_t kT = 5;
  std::vector<VarianceRow> rows;
  for (std::size_t b : bs) {
    const VarianceReport r =
        validate_variance(problem, phi, kT, b, samples, derive_seed(seed, b), threads);
    VarianceRow row{n, b, samples, r.predicted_ratio, r.empirical_ratio, r.ratio_std_error, ""};
    if (samples < kVarianceMinConfidentSamples)
      row.status = "low-confidence";
    else if (std::abs(r.empirical_ratio - r.predicted_ratio) <=
             kVarianceTolerance * r.predicted_ratio)
      row.status = "ok";
    else
      row.status = "out-of-tolerance";
    rows.push_back(row);
  }
  return rows;
}

void write_variance_csv(std::ostream& out, const std::vector<VarianceRow>& rows) {
  out << "N,b,samples,predicted_ratio,empirical_ratio,std_error,status\n";
  for (const auto& r : rows)
    out << r.n << ',' << r.b << ',' << r.samples << ',' << format_double(r.predicted_ratio) << ','
        << format_double(r.empirical_ratio) << ',' << format_double(r.ratio_std_error) << ','
        << r.status << '\n';
}

std::vector<VarianceRow> read_variance_csv(std::istream& in) {
  std::vector<VarianceRow> rows;
  read_csv(in, "N,b,samples,predicted_ratio,empirical_ratio,std_error,status", 7, "variance csv",
           [&](const std::vector<std::string_view>& f) {
             rows.push_back({parse_number<std::size_t>(f[0], "N"),
                             parse_number<std::size_t>(f[1], "b"),
                             parse_number<std::size_t>(f[2], "samples"),
                             parse_number<double>(f[3], "predicted_ratio"),
                             parse_number<double>(f[4], "empirical_ratio"),
                             parse_number<double>(f[5], "std_error"), std::string(f[6])});
           });
  return rows;
}

int cmd_variance(std::size_t n, const std::vector<std::size_t>& bs, std::size_t samples,
                 const std::optional<std::filesystem::path>& out_path, std::uint64_t seed,
                 std::ostream& out, std::ostream& err) {
  std::vector<VarianceRow> rows;
  try {
    if (bs.empty()) throw InvalidArgument("variance: empty b list");
    if (samples == 0) throw InvalidArgument("variance: samples must be positive");
    rows = variance_study(n, bs, samples, seed, 0);
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::ostringstream csv;
  write_variance_csv(csv, rows);
  if (out_path) {
    if (out_path->has_parent_path()) std::filesystem::create_directories(out_path->parent_path());
    write_text_file(*out_path, csv.str());
  }
  out << csv.str();
  for (const auto& r : rows)
    if (r.status == "out-of-tolerance") {
      err << "variance ratio for b=" << r.b << " is " << r.empirical_ratio << ", expected "
          << r.predicted_ratio << " within " << kVarianceTolerance * 100 << "%\n";
      return kExitTolerance;
    }
  return kExitOk;
}

std::int64_t estimate_footprint(const BilevelProblem& problem, const EstimatorSettings& settings,
                                const MetaVector& phi, std::uint64_t run_seed,
                                std::uint64_t directions_seed) {
  PeakProbe probe;
  {
    const GradientEstimate g =
        compute_estimate(problem, settings, phi, nullptr, run_seed, directions_seed);
    (void)g;
  }
  return probe.peak_above_base();
}

BenchResult bench(const ExperimentConfig& config, const std::vector<std::size_t>& threads,
                  std::size_t steps) {
  if (threads.empty()) throw InvalidArgument("bench: empty thread list");
  if (steps == 0) throw InvalidArgument("bench: steps must be positive");
  validate_config(config);
  const auto problem = make_problem(config.problem);
  const MetaVector phi0 = initial_phi(config.problem, *problem, config.init_seed);
  EstimatorSettings est = config.estimator;
  const auto& sched = config.schedule;
  est.kind = sched.phase2.estimator   ? *sched.phase2.estimator
             : sched.phase1.estimator ? *sched.phase1.estimator
                                      : EstimatorKind::Fg2u;

  BenchResult result;
  std::vector<MetaVector> reference;
  for (std::size_t th : threads) {
    est.threads = th;
    MetaOptimizer opt(config.optimizer, problem->meta_dim());
    MetaVector phi = phi0;
    std::vector<MetaVector> grads;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < steps; ++k) {
      const GradientEstimate g =
          compute_estimate(*problem, est, phi, nullptr, training_run_seed(config.master_seed, k, 0),
                           training_directions_seed(config.master_seed, k, 0));
      phi = opt.step(phi, g.grad);
      grads.push_back(g.grad);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (reference.empty()) {
      reference = grads;
    } else {
      for (std::size_t k = 0; k < steps; ++k)
        if (!bit_equal(reference[k], grads[k])) result.bit_identical = false;
    }
    const std::int64_t peak =
        estimate_footprint(*problem, est, phi0, training_run_seed(config.master_seed, 0, 0),
                           training_directions_seed(config.master_seed, 0, 0));
    result.rows.push_back({effective_threads(th), est.b,
                           seconds / static_cast<double>(steps), peak});
  }
  return result;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "threads,b,seconds_per_meta_step,peak_resident_floats\n";
  for (const auto& r : rows)
    out << r.threads << ',' << r.b << ',' << format_double(r.seconds_per_meta_step) << ','
        << r.peak_resident_floats << '\n';
}

std::vector<BenchRow> read_bench_csv(std::istream& in) {
  std::vector<BenchRow> rows;
  read_csv(in, "threads,b,seconds_per_meta_step,peak_resident_floats", 4, "bench csv",
           [&](const std::vector<std::string_view>& f) {
             rows.push_back({parse_number<std::size_t>(f[0], "threads"),
                             parse_number<std::size_t>(f[1], "b"),
                             parse_number<double>(f[2], "seconds_per_meta_step"),
                             parse_number<std::int64_t>(f[3], "peak_resident_floats")});
           });
  return rows;
}

int cmd_bench(const std::filesystem::path& config_path, const std::vector<std::size_t>& threads,
              std::size_t steps, const std::optional<std::filesystem::path>& out_path,
              std::ostream& out, std::ostream& err) {
  BenchResult result;
  try {
    result = bench(load_config(config_path), threads, steps);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NotDifferentiable& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const NeumannDivergence& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  }
  std::ostringstream csv;
  write_bench_csv(csv, result.rows);
  if (out_path) write_text_file(*out_path, csv.str());
  out << csv.str();
  if (!result.bit_identical) {
    err << "gradient estimates differ across thread counts\n";
    return kExitTolerance;
  }
  return kExitOk;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (std::string_view field : split_csv_line(text)) {
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    out.push_back(parse_number<std::size_t>(field, "list entry"));
  }
  return out;
}

}  // namespace blo
