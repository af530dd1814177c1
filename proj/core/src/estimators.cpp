#include "blo/estimators.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "blo/parallel.hpp"
#include "blo/rng.hpp"

namespace blo {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::array<std::pair<EstimatorKind, std::string_view>, 8> kNames{{
    {EstimatorKind::Fg2u, "fg2u"},
    {EstimatorKind::Fg2uZo, "fg2u_zo"},
    {EstimatorKind::Fgu, "fgu"},
    {EstimatorKind::Rgu, "rgu"},
    {EstimatorKind::Trgu, "trgu"},
    {EstimatorKind::NeumannIf, "neumann"},
    {EstimatorKind::HessianFree, "hessian_free"},
    {EstimatorKind::Vr, "vr"},
}};

void require_directions(const BilevelProblem& problem, const DirectionBatch& dirs) {
  if (dirs.size() == 0) throw InvalidArgument("empty direction batch");
  for (const auto& v : dirs.directions)
    if (v.size() != problem.meta_dim())
      throw InvalidArgument("direction length " + std::to_string(v.size()) +
                            " does not match meta dimension " +
                            std::to_string(problem.meta_dim()));
}

void require_finite(const MetaVector& g, std::string_view who) {
  if (!g.all_finite())
    throw DivergenceError(std::string(who) + ": non-finite gradient estimate", -1, norm(g));
}

/// Per-direction weights w_i = <d, y_i> + <c, v_i> for a tangent bundle.
std::vector<double> forward_weights(const BilevelProblem& problem, const MetaVector& phi,
                                    const TangentBundle& bundle) {
  const InnerVector d = problem.partial_f_theta(bundle.theta, phi);
  const MetaVector c = problem.partial_f_phi(bundle.theta, phi);
  std::vector<double> w(bundle.tangents.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = dot(d, bundle.tangents[i]) + dot(c, bundle.directions[i]);
  return w;
}

/// (1/b) sum_i w_i v_i, reduced in index order.
MetaVector weighted_mean(const std::vector<double>& w, const DirectionBatch& dirs) {
  MetaVector g(dirs[0].size());
  for (std::size_t i = 0; i < w.size(); ++i) g.axpy(w[i], dirs[i]);
  g *= 1.0 / static_cast<double>(w.size());
  return g;
}

}  // namespace

std::string_view to_string(EstimatorKind k) {
  for (const auto& [kind, name] : kNames)
    if (kind == k) return name;
  return "unknown";
}

EstimatorKind estimator_from_string(std::string_view s) {
  for (const auto& [kind, name] : kNames)
    if (name == s) return kind;
  throw InvalidArgument("unknown estimator '" + std::string(s) + "'");
}

bool is_stochastic(EstimatorKind k) {
  return k == EstimatorKind::Fg2u || k == EstimatorKind::Fg2uZo || k == EstimatorKind::Vr;
}

GradientEstimate fg2u_estimate(const BilevelProblem& problem, const MetaVector& phi,
                               std::size_t T, std::uint64_t run_seed, const DirectionBatch& dirs,
                               std::size_t threads) {
  const auto start = Clock::now();
  if (!problem.differentiable())
    throw NotDifferentiable("fg2u: problem '" + problem.name() +
                            "' is black-box only; use fg2u_zo instead");
  require_directions(problem, dirs);
  const TangentBundle bundle =
      unroll_with_tangents(problem, phi, T, run_seed, dirs, {.first_step = 0, .threads = threads});
  GradientEstimate out;
  out.grad = weighted_mean(forward_weights(problem, phi, bundle), dirs);
  require_finite(out.grad, "fg2u");
  out.estimator = EstimatorKind::Fg2u;
  out.b = dirs.size();
  out.T = T;
  out.directions_seed = dirs.base_seed;
  out.meta_loss = problem.meta_loss(bundle.theta, phi);
  out.wall_seconds = seconds_since(start);
  return out;
}

GradientEstimate fg2u_zo_estimate(const BilevelProblem& problem, const MetaVector& phi,
                                  std::size_t T, std::uint64_t run_seed,
                                  const DirectionBatch& dirs, double mu, std::size_t threads) {
  const auto start = Clock::now();
  if (!(mu > 0.0) || !std::isfinite(mu))
    throw InvalidArgument("fg2u_zo: mu must be positive and finite");
  require_directions(problem, dirs);
  const double base = problem.black_box_h(phi, T, run_seed);
  if (!std::isfinite(base))
    throw DivergenceError("fg2u_zo: non-finite h at the base point", -1, base);
  std::vector<double> w(dirs.size());
  parallel_for(dirs.size(), threads, [&](std::size_t i) {
    MetaVector shifted = phi;
    shifted.axpy(mu, dirs[i]);
    const double h = problem.black_box_h(shifted, T, run_seed);
    if (!std::isfinite(h))
      throw DivergenceError("fg2u_zo: non-finite h along direction " + std::to_string(i), -1, h);
    w[i] = (h - base) / mu;
  });
  GradientEstimate out;
  out.grad = weighted_mean(w, dirs);
  require_finite(out.grad, "fg2u_zo");
  out.estimator = EstimatorKind::Fg2uZo;
  out.b = dirs.size();
  out.T = T;
  out.mu = mu;
  out.directions_seed = dirs.base_seed;
  out.meta_loss = base;
  out.wall_seconds = seconds_since(start);
  return out;
}

InnerVector neumann_ihvp(const BilevelProblem& problem, const InnerVector& theta,
                         const MetaVector& phi, const InnerVector& d, double alpha,
                         std::size_t K) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw InvalidArgument("neumann: alpha must be positive and finite");
  const double limit = 1e6 * norm(d);
  InnerVector r = d;
  InnerVector sum = d;
  for (std::size_t k = 1; k <= K; ++k) {
    r.axpy(-alpha, problem.g_hvp(theta, phi, r));
    const double rn = norm(r);
    if (!std::isfinite(rn) || rn > limit)
      throw NeumannDivergence("neumann: iterate " + std::to_string(k) + " has norm " +
                              std::to_string(rn) + ", beyond 1e6 x the initial norm; reduce alpha");
    sum += r;
  }
  sum *= alpha;
  return sum;
}

GradientEstimate neumann_if_estimate(const BilevelProblem& problem, const InnerVector& theta_T,
                                     const MetaVector& phi, double alpha, std::size_t K) {
  const auto start = Clock::now();
  if (!problem.differentiable())
    throw NotDifferentiable("neumann: problem '" + problem.name() + "' is black-box only");
  const InnerVector d = problem.partial_f_theta(theta_T, phi);
  const InnerVector s = neumann_ihvp(problem, theta_T, phi, d, alpha, K);
  GradientEstimate out;
  out.grad = problem.partial_f_phi(theta_T, phi) - problem.g_cross_vjp(theta_T, phi, s);
  require_finite(out.grad, "neumann");
  out.estimator = EstimatorKind::NeumannIf;
  out.meta_loss = problem.meta_loss(theta_T, phi);
  out.wall_seconds = seconds_since(start);
  return out;
}

GradientEstimate hessian_free_estimate(const BilevelProblem& problem, const InnerVector& theta_T,
                                       const MetaVector& phi, double alpha) {
  const auto start = Clock::now();
  if (!problem.differentiable())
    throw NotDifferentiable("hessian_free: problem '" + problem.name() + "' is black-box only");
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw InvalidArgument("hessian_free: alpha must be positive and finite");
  InnerVector d = problem.partial_f_theta(theta_T, phi);
  d *= alpha;
  GradientEstimate out;
  out.grad = problem.partial_f_phi(theta_T, phi) - problem.g_cross_vjp(theta_T, phi, d);
  require_finite(out.grad, "hessian_free");
  out.estimator = EstimatorKind::HessianFree;
  out.meta_loss = problem.meta_loss(theta_T, phi);
  out.wall_seconds = seconds_since(start);
  return out;
}

GradientEstimate vr_estimate(const BilevelProblem& problem, const MetaVector& phi,
                             const MetaVector& phi_ref, std::size_t T, std::uint64_t run_seed,
                             const DirectionBatch& dirs, std::optional<std::size_t> truncated_steps,
                             std::size_t threads) {
  const auto start = Clock::now();
  if (!problem.differentiable())
    throw NotDifferentiable("vr: problem '" + problem.name() +
                            "' is black-box only; use fg2u_zo instead");
  require_directions(problem, dirs);
  if (phi_ref.size() != phi.size())
    throw InvalidArgument("vr: reference point has the wrong dimension");
  if (truncated_steps && *truncated_steps > T)
    throw InvalidArgument("vr: truncation " + std::to_string(*truncated_steps) +
                          " exceeds the unroll depth " + std::to_string(T));

  const TangentBundle here =
      unroll_with_tangents(problem, phi, T, run_seed, dirs, {.first_step = 0, .threads = threads});
  const std::vector<double> w = forward_weights(problem, phi, here);

  // Dropping steps 1..K means tangents start accumulating at step K + 1 (and Z_0 is dropped).
  const std::size_t first =
      truncated_steps && *truncated_steps > 0 ? *truncated_steps + 1 : 0;
  const TangentBundle ref = unroll_with_tangents(problem, phi_ref, T, run_seed, dirs,
                                                 {.first_step = first, .threads = threads});
  const std::vector<double> w_ref = forward_weights(problem, phi_ref, ref);

  // mean_i (g_i - g~_i + mean_j g~_j) = mean(g) - [mean(g~) - mean_j(g~_j)].
  // The bracket is the batch mean of the control variate; it is evaluated with the same
  // reduction as its subtrahend so it is exactly zero in floating point too.
  const MetaVector ref_mean = weighted_mean(w_ref, dirs);
  const MetaVector baseline_mean = weighted_mean(w_ref, dirs);
  GradientEstimate out;
  out.grad = weighted_mean(w, dirs) - (ref_mean - baseline_mean);
  require_finite(out.grad, "vr");
  out.estimator = EstimatorKind::Vr;
  out.b = dirs.size();
  out.T = T;
  out.directions_seed = dirs.base_seed;
  out.meta_loss = problem.meta_loss(here.theta, phi);
  out.wall_seconds = seconds_since(start);
  return out;
}

VarianceReport validate_variance(const BilevelProblem& problem, const MetaVector& phi,
                                 std::size_t T, std::size_t b, std::size_t n_samples,
                                 std::uint64_t seed, std::size_t threads) {
  if (b == 0) throw InvalidArgument("validate_variance: b must be positive");
  if (n_samples == 0) throw InvalidArgument("validate_variance: n_samples must be positive");
  const std::size_t n = problem.meta_dim();
  const UnrollResult run = unroll(problem, phi, T, seed, true);
  const MetaVector truth = rgu_backward(problem, *run.trajectory);

  std::vector<double> sq_err(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t s) {
    const DirectionBatch dirs =
        sample_directions(Distribution::Rademacher, n, b, derive_seed(seed, s));
    const GradientEstimate g = fg2u_estimate(problem, phi, T, seed, dirs, 1);
    sq_err[s] = squared_norm(g.grad - truth);
  });

  VarianceReport report;
  report.n_samples = n_samples;
  report.true_grad_norm_sq = squared_norm(truth);
  report.predicted_ratio = static_cast<double>(n - 1) / static_cast<double>(b);
  double mean = 0.0;
  for (double e : sq_err) mean += e;
  mean /= static_cast<double>(n_samples);
  double var = 0.0;
  for (double e : sq_err) var += (e - mean) * (e - mean);
  var /= static_cast<double>(n_samples > 1 ? n_samples - 1 : 1);
  report.empirical_mse = mean;
  if (report.true_grad_norm_sq > 0.0) {
    report.empirical_ratio = mean / report.true_grad_norm_sq;
    report.ratio_std_error =
        std::sqrt(var / static_cast<double>(n_samples)) / report.true_grad_norm_sq;
  }
  return report;
}

GradientEstimate compute_estimate(const BilevelProblem& problem, const EstimatorSettings& s,
                                  const MetaVector& phi, const MetaVector* phi_ref,
                                  std::uint64_t run_seed, std::uint64_t directions_seed) {
  const auto start = Clock::now();
  const auto dirs = [&] {
    return sample_directions(s.distribution, problem.meta_dim(), s.b, directions_seed);
  };
  auto deterministic = [&](MetaVector grad, const InnerVector& theta_T) {
    GradientEstimate out;
    out.grad = std::move(grad);
    out.estimator = s.kind;
    out.T = s.T;
    out.meta_loss = problem.meta_loss(theta_T, phi);
    out.wall_seconds = seconds_since(start);
    return out;
  };

  switch (s.kind) {
    case EstimatorKind::Fg2u:
      return fg2u_estimate(problem, phi, s.T, run_seed, dirs(), s.threads);
    case EstimatorKind::Fg2uZo:
      return fg2u_zo_estimate(problem, phi, s.T, run_seed, dirs(), s.mu, s.threads);
    case EstimatorKind::Vr:
      return vr_estimate(problem, phi, phi_ref ? *phi_ref : phi, s.T, run_seed, dirs(),
                         s.vr_truncation, s.threads);
    case EstimatorKind::Fgu: {
      FguResult r = fgu_full(problem, phi, s.T, run_seed);
      return deterministic(std::move(r.grad), unroll(problem, phi, s.T, run_seed, false).theta);
    }
    case EstimatorKind::Rgu:
    case EstimatorKind::Trgu: {
      const UnrollResult run = unroll(problem, phi, s.T, run_seed, true);
      MetaVector g = s.kind == EstimatorKind::Rgu
                         ? rgu_backward(problem, *run.trajectory)
                         : trgu(problem, *run.trajectory, s.trgu_steps);
      return deterministic(std::move(g), run.theta);
    }
    case EstimatorKind::NeumannIf:
    case EstimatorKind::HessianFree: {
      const UnrollResult run = unroll(problem, phi, s.T, run_seed, false);
      GradientEstimate out = s.kind == EstimatorKind::NeumannIf
                                 ? neumann_if_estimate(problem, run.theta, phi, s.alpha, s.K)
                                 : hessian_free_estimate(problem, run.theta, phi, s.alpha);
      out.T = s.T;
      out.wall_seconds = seconds_since(start);
      return out;
    }
  }
  throw InvalidArgument("compute_estimate: unhandled estimator");
}

}  // namespace blo
