#include "blo/meta_opt.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <system_error>

#include "blo/rng.hpp"

namespace blo {
namespace {

constexpr std::string_view kCsvHeader = "step,phase,meta_loss,grad_norm,wall_seconds,seed";

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_field(std::string_view field, std::size_t line) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw InvalidArgument("run.csv line " + std::to_string(line) + ": cannot parse '" +
                          std::string(field) + "'");
  return value;
}

double parse_double_field(std::string_view field, std::size_t line) {
  // from_chars accepts "nan" and "inf", which a diverged terminator row may contain.
  return parse_field<double>(field, line);
}

}  // namespace

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::GD ? "gd" : "adam"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "gd") return OptimizerKind::GD;
  if (s == "adam") return OptimizerKind::Adam;
  throw InvalidArgument("unknown optimizer '" + std::string(s) + "'");
}

MetaOptimizer::MetaOptimizer(const OptimizerSettings& settings, std::size_t meta_dim)
    : settings_(settings), m_(meta_dim), v_(meta_dim) {
  if (!(settings.step_size > 0.0) || !std::isfinite(settings.step_size))
    throw InvalidArgument("optimizer step size must be positive and finite");
  if (settings.kind == OptimizerKind::Adam &&
      !(settings.beta1 >= 0.0 && settings.beta1 < 1.0 && settings.beta2 >= 0.0 &&
        settings.beta2 < 1.0 && settings.epsilon > 0.0))
    throw InvalidArgument("adam requires beta1, beta2 in [0, 1) and epsilon > 0");
  if (meta_dim == 0) throw InvalidArgument("optimizer meta dimension must be positive");
}

MetaVector MetaOptimizer::step(const MetaVector& phi, const MetaVector& grad) {
  if (phi.size() != m_.size() || grad.size() != m_.size())
    throw InvalidArgument("meta_step: dimension mismatch");
  if (!grad.all_finite()) throw DivergenceError("meta_step: non-finite gradient", -1, norm(grad));
  MetaVector next = phi;
  if (settings_.kind == OptimizerKind::GD) {
    next.axpy(-settings_.step_size, grad);
    if (!next.all_finite()) throw DivergenceError("meta_step: non-finite update", -1, norm(next));
    ++t_;
    return next;
  }
  const auto& s = settings_;
  MetaVector m = m_;
  MetaVector v = v_;
  const std::size_t t = t_ + 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < next.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    next[i] -= s.step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.epsilon);
  }
  if (!next.all_finite()) throw DivergenceError("meta_step: non-finite update", -1, norm(next));
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
  return next;
}

void write_run_csv(std::ostream& out, const RunRecord& record) {
  out << kCsvHeader << '\n';
  for (const auto& r : record.rows)
    out << r.step << ',' << r.phase << ',' << format_double(r.meta_loss) << ','
        << format_double(r.grad_norm) << ',' << format_double(r.wall_seconds) << ',' << r.seed
        << '\n';
}

RunRecord read_run_csv(std::istream& in) {
  RunRecord record;
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw InvalidArgument("run.csv: missing or unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 6)
      throw InvalidArgument("run.csv line " + std::to_string(lineno) + ": expected 6 fields");
    RunRow row;
    row.step = parse_field<std::size_t>(fields[0], lineno);
    row.phase = parse_field<int>(fields[1], lineno);
    row.meta_loss = parse_double_field(fields[2], lineno);
    row.grad_norm = parse_double_field(fields[3], lineno);
    row.wall_seconds = parse_double_field(fields[4], lineno);
    row.seed = parse_field<std::uint64_t>(fields[5], lineno);
    if (!record.rows.empty() && row.step <= record.rows.back().step)
      throw InvalidArgument("run.csv line " + std::to_string(lineno) +
                            ": steps must be strictly increasing");
    record.rows.push_back(row);
  }
  return record;
}

std::uint64_t training_run_seed(std::uint64_t master_seed, std::size_t k, std::size_t a) {
  return derive_seed(derive_seed(derive_seed(master_seed, 0), k), a);
}

std::uint64_t training_directions_seed(std::uint64_t master_seed, std::size_t k, std::size_t a) {
  return derive_seed(derive_seed(derive_seed(master_seed, 1), k), a);
}

TrainingResult run_training(const BilevelProblem& problem, const TrainingSettings& settings,
                            const MetaVector& phi0) {
  if (settings.accumulation == 0) throw InvalidArgument("accumulation must be at least 1");
  if (phi0.size() != problem.meta_dim())
    throw InvalidArgument("initial meta parameter has the wrong dimension");
  if (!phi0.all_finite()) throw InvalidArgument("initial meta parameter is not finite");

  MetaOptimizer opt(settings.optimizer, problem.meta_dim());
  TrainingResult result{phi0, {}};
  MetaVector previous = phi0;
  std::size_t k = 0;
  int current_phase = 0;

  const auto run_phase = [&](const Phase& phase, EstimatorSettings est, int phase_id) {
    if (!phase.estimator) return;
    est.kind = *phase.estimator;
    current_phase = phase_id;
    for (std::size_t i = 0; i < phase.steps; ++i, ++k) {
      const auto start = std::chrono::steady_clock::now();
      const std::uint64_t row_seed = training_run_seed(settings.master_seed, k, 0);
      MetaVector grad(problem.meta_dim());
      double loss = 0.0;
      for (std::size_t a = 0; a < settings.accumulation; ++a) {
        const GradientEstimate g = compute_estimate(
            problem, est, result.phi, &previous, training_run_seed(settings.master_seed, k, a),
            training_directions_seed(settings.master_seed, k, a));
        grad += g.grad;
        loss += g.meta_loss;
      }
      grad *= 1.0 / static_cast<double>(settings.accumulation);
      loss /= static_cast<double>(settings.accumulation);
      if (!std::isfinite(loss) || !grad.all_finite())
        throw DivergenceError("meta step " + std::to_string(k) +
                                  ": non-finite meta loss or gradient estimate",
                              static_cast<long>(k));
      const MetaVector next = opt.step(result.phi, grad);
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.record.rows.push_back({k, phase_id, loss, norm(grad),
                                    settings.record_wall_time ? elapsed : 0.0, row_seed});
      previous = result.phi;
      result.phi = next;
    }
  };

  try {
    run_phase(settings.schedule.phase1, settings.phase1, 1);
    run_phase(settings.schedule.phase2, settings.phase2, 2);
  } catch (const DivergenceError& e) {
    result.record.diverged = true;
    result.record.divergence_message = e.what();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    result.record.rows.push_back(
        {k, current_phase, nan, nan, 0.0, training_run_seed(settings.master_seed, k, 0)});
  }
  return result;
}

}  // namespace blo
