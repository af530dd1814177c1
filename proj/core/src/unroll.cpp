#include "blo/unroll.hpp"

#include <string>

#include "blo/parallel.hpp"

namespace blo {
namespace {

void check_iterate(const BilevelProblem& problem, const InnerVector& theta, std::size_t t) {
  if (!theta.all_finite())
    throw DivergenceError(problem.name() + ": non-finite inner iterate at step " +
                              std::to_string(t) + " (|theta| = " + std::to_string(norm(theta)) +
                              ")",
                          static_cast<long>(t), norm(theta));
}

void require_differentiable(const BilevelProblem& problem, const char* who) {
  if (!problem.differentiable())
    throw NotDifferentiable(std::string(who) + ": problem '" + problem.name() +
                            "' has no derivative oracles; use the zeroth-order estimator");
}

void check_trajectory_shape(const BilevelProblem& problem, const Trajectory& traj) {
  if (traj.states.size() != traj.step_seeds.size() + 1)
    throw ReplayMismatch("trajectory has " + std::to_string(traj.states.size()) +
                         " states for " + std::to_string(traj.step_seeds.size()) + " steps");
  if (traj.phi_snapshot.size() != problem.meta_dim())
    throw ReplayMismatch("trajectory meta snapshot has the wrong dimension");
  for (const auto& s : traj.states)
    if (s.size() != problem.inner_dim())
      throw ReplayMismatch("trajectory state has the wrong dimension");
}

void check_replay(const BilevelProblem& problem, const Trajectory& traj, std::size_t t) {
  const InnerVector replay =
      problem.transition(traj.states[t - 1], traj.phi_snapshot, t, traj.step_seeds[t - 1]);
  if (!(replay == traj.states[t]))
    throw ReplayMismatch("trajectory state " + std::to_string(t) +
                         " does not match a replay of its transition");
}

}  // namespace

UnrollResult unroll(const BilevelProblem& problem, const MetaVector& phi, std::size_t T,
                    std::uint64_t run_seed, bool keep_trajectory) {
  UnrollResult result;
  result.theta = problem.inner_init(phi);
  check_iterate(problem, result.theta, 0);
  if (keep_trajectory) {
    result.trajectory.emplace();
    result.trajectory->phi_snapshot = phi;
    result.trajectory->states.reserve(T + 1);
    result.trajectory->step_seeds.reserve(T);
    result.trajectory->states.push_back(result.theta);
  }
  for (std::size_t t = 1; t <= T; ++t) {
    const std::uint64_t seed = step_seed(run_seed, t);
    result.theta = problem.transition(result.theta, phi, t, seed);
    check_iterate(problem, result.theta, t);
    if (keep_trajectory) {
      result.trajectory->states.push_back(result.theta);
      result.trajectory->step_seeds.push_back(seed);
    }
  }
  return result;
}

TangentBundle unroll_with_tangents(const BilevelProblem& problem, const MetaVector& phi,
                                   std::size_t T, std::uint64_t run_seed,
                                   const DirectionBatch& dirs, const TangentOptions& options) {
  require_differentiable(problem, "unroll_with_tangents");
  const std::size_t b = dirs.size();
  if (b == 0) throw InvalidArgument("unroll_with_tangents: empty direction batch");
  if (options.first_step > T + 1)
    throw InvalidArgument("unroll_with_tangents: first_step beyond the unroll");

  TangentBundle bundle;
  bundle.directions = dirs;
  bundle.tangents.resize(b);
  bundle.theta = problem.inner_init(phi);
  check_iterate(problem, bundle.theta, 0);
  parallel_for(b, options.threads, [&](std::size_t i) {
    bundle.tangents[i] = options.first_step == 0 ? problem.init_jvp(phi, dirs[i])
                                                 : InnerVector(problem.inner_dim());
  });

  const MetaVector zero_direction(problem.meta_dim());
  for (std::size_t t = 1; t <= T; ++t) {
    const std::uint64_t seed = step_seed(run_seed, t);
    const bool drive = t >= options.first_step;
    // Jacobians are taken at theta_{t-1}, so tangents advance before theta does.
    parallel_for(b, options.threads, [&](std::size_t i) {
      bundle.tangents[i] = problem.transition_jvp(bundle.theta, phi, t, seed, bundle.tangents[i],
                                                  drive ? dirs[i] : zero_direction);
    });
    bundle.theta = problem.transition(bundle.theta, phi, t, seed);
    check_iterate(problem, bundle.theta, t);
  }
  for (std::size_t i = 0; i < b; ++i) check_iterate(problem, bundle.tangents[i], T);
  return bundle;
}

FguResult fgu_full(const BilevelProblem& problem, const MetaVector& phi, std::size_t T,
                   std::uint64_t run_seed, std::size_t cap) {
  require_differentiable(problem, "fgu_full");
  const std::size_t m = problem.inner_dim();
  const std::size_t n = problem.meta_dim();
  if (m * n > cap)
    throw OracleTooLarge("fgu_full: M*N = " + std::to_string(m * n) + " exceeds the cap of " +
                         std::to_string(cap) + " (FGU needs O(MN) memory)");

  // Column j of Z_t is Z_t e_j and follows the same recursion as a tangent.
  std::vector<InnerVector> columns(n);
  std::vector<MetaVector> basis(n, MetaVector(n));
  for (std::size_t j = 0; j < n; ++j) {
    basis[j][j] = 1.0;
    columns[j] = problem.init_jvp(phi, basis[j]);
  }
  InnerVector theta = problem.inner_init(phi);
  check_iterate(problem, theta, 0);
  for (std::size_t t = 1; t <= T; ++t) {
    const std::uint64_t seed = step_seed(run_seed, t);
    for (std::size_t j = 0; j < n; ++j)
      columns[j] = problem.transition_jvp(theta, phi, t, seed, columns[j], basis[j]);
    theta = problem.transition(theta, phi, t, seed);
    check_iterate(problem, theta, t);
  }

  FguResult out{problem.partial_f_phi(theta, phi), Matrix(m, n)};
  const InnerVector d = problem.partial_f_theta(theta, phi);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) out.jacobian(i, j) = columns[j][i];
    out.grad[j] += dot(d, columns[j]);
  }
  return out;
}

MetaVector rgu_backward(const BilevelProblem& problem, const Trajectory& traj) {
  require_differentiable(problem, "rgu_backward");
  check_trajectory_shape(problem, traj);
  const std::size_t T = traj.steps();
  const MetaVector& phi = traj.phi_snapshot;
  if (!(problem.inner_init(phi) == traj.states[0]))
    throw ReplayMismatch("trajectory state 0 does not match inner_init(phi)");
  InnerVector d = problem.partial_f_theta(traj.states[T], phi);
  MetaVector c = problem.partial_f_phi(traj.states[T], phi);
  for (std::size_t t = T; t >= 1; --t) {
    check_replay(problem, traj, t);
    TransitionCotangent ct =
        problem.transition_vjp(traj.states[t - 1], phi, t, traj.step_seeds[t - 1], d);
    c += ct.d_phi;
    d = std::move(ct.d_theta);
  }
  c += problem.init_vjp(phi, d);
  return c;
}

MetaVector trgu(const BilevelProblem& problem, const Trajectory& traj, std::size_t kept_steps) {
  require_differentiable(problem, "trgu");
  check_trajectory_shape(problem, traj);
  const std::size_t T = traj.steps();
  if (kept_steps > T)
    throw InvalidArgument("trgu: kept steps " + std::to_string(kept_steps) +
                          " exceed the unroll depth " + std::to_string(T));
  const MetaVector& phi = traj.phi_snapshot;
  InnerVector d = problem.partial_f_theta(traj.states[T], phi);
  MetaVector c = problem.partial_f_phi(traj.states[T], phi);
  for (std::size_t t = T; t > T - kept_steps; --t) {
    check_replay(problem, traj, t);
    TransitionCotangent ct =
        problem.transition_vjp(traj.states[t - 1], phi, t, traj.step_seeds[t - 1], d);
    c += ct.d_phi;
    d = std::move(ct.d_theta);
  }
  return c;
}

}  // namespace blo
