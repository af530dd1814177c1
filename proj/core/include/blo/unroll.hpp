#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "blo/directions.hpp"
#include "blo/problem.hpp"

namespace blo {

/// Stored inner iterates theta_0..theta_T with the step seeds that produced them.
/// Invariant: states[t] == transition(states[t-1], phi_snapshot, t, step_seeds[t-1]).
struct Trajectory {
  std::vector<InnerVector> states;
  std::vector<std::uint64_t> step_seeds;
  MetaVector phi_snapshot;

  std::size_t steps() const noexcept { return step_seeds.size(); }
};

struct UnrollResult {
  InnerVector theta;
  std::optional<Trajectory> trajectory;
};

/// Runs T seeded transitions from inner_init(phi). Throws DivergenceError with the failing
/// step index on a non-finite iterate.
UnrollResult unroll(const BilevelProblem& problem, const MetaVector& phi, std::size_t T,
                    std::uint64_t run_seed, bool keep_trajectory);

/// Final inner state together with tangents y_i = Z_T v_i for a batch of directions.
struct TangentBundle {
  InnerVector theta;
  std::vector<InnerVector> tangents;
  DirectionBatch directions;
};

struct TangentOptions {
  /// Steps t < first_step contribute no B_t v term and Z_0 v is dropped when first_step > 0;
  /// yields Z~_T v = sum_{t >= first_step} A_T...A_{t+1} B_t v. 0 means the exact Z_T v.
  std::size_t first_step = 0;
  std::size_t threads = 1;
};

/// Forward propagation of the tangents alongside theta:
///   y_i <- Z_0 v_i,  then for t = 1..T:  y_i <- A_t y_i + B_t v_i,  theta <- Omega_t(theta).
/// Storage is O((b+1) M + b N) and independent of T. The b tangent updates within a step are
/// independent and may run in parallel; each tangent's arithmetic is identical whatever the
/// thread count.
TangentBundle unroll_with_tangents(const BilevelProblem& problem, const MetaVector& phi,
                                   std::size_t T, std::uint64_t run_seed,
                                   const DirectionBatch& dirs, const TangentOptions& options = {});

inline constexpr std::size_t kDefaultJacobianCap = 4'000'000;

struct FguResult {
  MetaVector grad;
  Matrix jacobian;  // Z_T, M x N
};

/// Forward gradient unrolling with the full Jacobian: Z_0 = dOmega_0/dphi,
/// Z_t = A_t Z_{t-1} + B_t, grad = d_T Z_T + c_T. Costs O(M N) memory; refuses
/// (OracleTooLarge) when M * N exceeds `cap`.
FguResult fgu_full(const BilevelProblem& problem, const MetaVector& phi, std::size_t T,
                   std::uint64_t run_seed, std::size_t cap = kDefaultJacobianCap);

/// Reverse gradient unrolling over a stored trajectory:
///   c_{t-1} = c_t + d_t B_t,  d_{t-1} = d_t A_t,  grad = d_0 Z_0 + c_0.
/// Each backward step re-applies the transition and checks it reproduces the stored state
/// bit-exactly; a mismatch throws ReplayMismatch.
MetaVector rgu_backward(const BilevelProblem& problem, const Trajectory& traj);

/// Truncated RGU: runs the reverse recursion for the last `kept_steps` steps only and returns
/// c_{T-s}; the remaining implicit term (including d_0 Z_0) is dropped. s > T throws.
MetaVector trgu(const BilevelProblem& problem, const Trajectory& traj, std::size_t kept_steps);

}  // namespace blo
