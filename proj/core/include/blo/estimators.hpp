#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>

#include "blo/directions.hpp"
#include "blo/problem.hpp"
#include "blo/unroll.hpp"

namespace blo {

enum class EstimatorKind {
  Fg2u,         // forward gradient through the unrolled tangents
  Fg2uZo,       // forward gradient from finite-difference quotients of the black-box h
  Fgu,          // full forward Jacobian
  Rgu,          // reverse-mode unrolling
  Trgu,         // reverse-mode unrolling truncated to the last s steps
  NeumannIf,    // implicit function with a truncated Neumann inverse
  HessianFree,  // implicit function with the Hessian replaced by alpha^{-1} I
  Vr,           // forward gradient with a reference-point control variate
};

std::string_view to_string(EstimatorKind k);
EstimatorKind estimator_from_string(std::string_view s);
bool is_stochastic(EstimatorKind k);

struct GradientEstimate {
  MetaVector grad;
  EstimatorKind estimator = EstimatorKind::Fg2u;
  std::size_t b = 0;  // directions used; 0 for deterministic estimators
  std::size_t T = 0;
  std::optional<double> mu;  // set only for the zeroth-order estimator
  double wall_seconds = 0.0;
  std::uint64_t directions_seed = 0;
  /// h(phi) as observed by the estimator, NaN when it was not computed.
  double meta_loss = std::numeric_limits<double>::quiet_NaN();
};

/// (1/b) sum_i w_i v_i with w_i = <df/dtheta_T, Z_T v_i> + <df/dphi, v_i>.
/// Throws NotDifferentiable for black-box problems.
GradientEstimate fg2u_estimate(const BilevelProblem& problem, const MetaVector& phi,
                               std::size_t T, std::uint64_t run_seed, const DirectionBatch& dirs,
                               std::size_t threads = 1);

/// (1/b) sum_i [(h(phi + mu v_i) - h(phi)) / mu] v_i with one shared base evaluation; every
/// evaluation uses the same run_seed so the inner batches match.
GradientEstimate fg2u_zo_estimate(const BilevelProblem& problem, const MetaVector& phi,
                                  std::size_t T, std::uint64_t run_seed,
                                  const DirectionBatch& dirs, double mu,
                                  std::size_t threads = 1);

/// Approximates d H^{-1} by alpha * sum_{k=0}^{K} r_k with r_0 = d, r_{k+1} = r_k - alpha H r_k.
/// Throws NeumannDivergence once an iterate grows beyond 1e6 times |d|.
InnerVector neumann_ihvp(const BilevelProblem& problem, const InnerVector& theta,
                         const MetaVector& phi, const InnerVector& d, double alpha, std::size_t K);

/// -(d H^{-1}) Y + c, with the inverse replaced by the truncated Neumann sum.
GradientEstimate neumann_if_estimate(const BilevelProblem& problem, const InnerVector& theta_T,
                                     const MetaVector& phi, double alpha, std::size_t K);

inline constexpr double kDefaultHessianFreeAlpha = 1.0;

/// -alpha d Y + c.
GradientEstimate hessian_free_estimate(const BilevelProblem& problem, const InnerVector& theta_T,
                                       const MetaVector& phi,
                                       double alpha = kDefaultHessianFreeAlpha);

/// Averages g_i(phi) - [g~_i(phi_ref) - (1/b) sum_j g~_j(phi_ref)] over the batch, where g_i is
/// the per-direction forward gradient and g~_i is the forward gradient at phi_ref, computed
/// with every step (no truncation) or with the tangent contributions of the first
/// `truncated_steps` steps dropped. Both use the same directions and inner seeds.
GradientEstimate vr_estimate(const BilevelProblem& problem, const MetaVector& phi,
                             const MetaVector& phi_ref, std::size_t T, std::uint64_t run_seed,
                             const DirectionBatch& dirs,
                             std::optional<std::size_t> truncated_steps = std::nullopt,
                             std::size_t threads = 1);

struct VarianceReport {
  std::size_t n_samples = 0;
  double empirical_mse = 0.0;
  double true_grad_norm_sq = 0.0;
  double predicted_ratio = 0.0;  // (N - 1) / b
  double empirical_ratio = 0.0;  // empirical_mse / true_grad_norm_sq, 0 when the gradient is 0
  /// Standard error of empirical_ratio across the samples.
  double ratio_std_error = 0.0;
};

/// Draws n_samples independent Rademacher batches of size b, runs fg2u on each and compares
/// against the exact hypergradient from reverse-mode unrolling.
VarianceReport validate_variance(const BilevelProblem& problem, const MetaVector& phi,
                                 std::size_t T, std::size_t b, std::size_t n_samples,
                                 std::uint64_t seed, std::size_t threads = 1);

/// Everything needed to produce one estimate of a given kind.
struct EstimatorSettings {
  EstimatorKind kind = EstimatorKind::Fg2u;
  std::size_t b = 1;
  std::size_t T = 10;
  double mu = 1e-4;
  double alpha = kDefaultHessianFreeAlpha;
  std::size_t K = 20;               // Neumann terms
  std::size_t trgu_steps = 1;       // s for TRGU
  std::optional<std::size_t> vr_truncation;
  Distribution distribution = Distribution::Rademacher;
  std::size_t threads = 1;
};

/// Dispatches to the estimator named in `settings`. phi_ref is only read by Vr and falls back
/// to phi when absent.
GradientEstimate compute_estimate(const BilevelProblem& problem, const EstimatorSettings& settings,
                                  const MetaVector& phi, const MetaVector* phi_ref,
                                  std::uint64_t run_seed, std::uint64_t directions_seed);

}  // namespace blo
