#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "blo/linalg.hpp"

namespace blo {

/// Seed handed to inner step t of a run. Every step's randomness (minibatches, noise) is a
/// pure function of (run_seed, t) so perturbed runs see common random numbers.
std::uint64_t step_seed(std::uint64_t run_seed, std::size_t t);

/// Cotangent pulled back through one inner transition: (d A_t, d B_t).
struct TransitionCotangent {
  InnerVector d_theta;
  MetaVector d_phi;
};

/// Bi-level problem contract. The inner solution is the T-step unrolled dynamics
///   theta_0 = Omega_0(phi),  theta_t = Omega_t(theta_{t-1}, phi),
/// and the outer objective is h(phi) = f(theta_T, phi).
///
/// All methods are const and deterministic given their seed arguments, so instances can be
/// shared across threads. Problems that only expose black-box evaluation override
/// `differentiable()` to return false and throw NotDifferentiable from the oracles.
class BilevelProblem {
 public:
  virtual ~BilevelProblem() = default;

  virtual std::string name() const = 0;
  virtual std::size_t meta_dim() const = 0;
  virtual std::size_t inner_dim() const = 0;
  virtual bool differentiable() const { return true; }

  /// f(theta, phi)
  virtual double meta_loss(const InnerVector& theta, const MetaVector& phi) const = 0;
  /// Omega_0(phi)
  virtual InnerVector inner_init(const MetaVector& phi) const = 0;
  /// Omega_t(theta, phi); t runs from 1 to T.
  virtual InnerVector transition(const InnerVector& theta, const MetaVector& phi, std::size_t t,
                                 std::uint64_t seed) const = 0;

  /// d_T = df/dtheta
  virtual InnerVector partial_f_theta(const InnerVector& theta, const MetaVector& phi) const = 0;
  /// c_T = df/dphi
  virtual MetaVector partial_f_phi(const InnerVector& theta, const MetaVector& phi) const = 0;

  /// Z_0 v = (dOmega_0/dphi) v
  virtual InnerVector init_jvp(const MetaVector& phi, const MetaVector& v) const = 0;
  /// d Z_0, the adjoint of init_jvp.
  virtual MetaVector init_vjp(const MetaVector& phi, const InnerVector& d) const = 0;
  /// A_t y + B_t v, with the Jacobians taken at (theta, phi).
  virtual InnerVector transition_jvp(const InnerVector& theta, const MetaVector& phi,
                                     std::size_t t, std::uint64_t seed, const InnerVector& y,
                                     const MetaVector& v) const = 0;
  /// (d A_t, d B_t)
  virtual TransitionCotangent transition_vjp(const InnerVector& theta, const MetaVector& phi,
                                             std::size_t t, std::uint64_t seed,
                                             const InnerVector& d) const = 0;

  /// (d^2 g / dtheta^2) u for the inner objective g.
  virtual InnerVector g_hvp(const InnerVector& theta, const MetaVector& phi,
                            const InnerVector& u) const = 0;
  /// r (d^2 g / dtheta dphi), an N-vector.
  virtual MetaVector g_cross_vjp(const InnerVector& theta, const MetaVector& phi,
                                 const InnerVector& r) const = 0;

  /// h(phi) evaluated end to end. The default unrolls T seeded transitions and returns
  /// meta_loss(theta_T, phi); throws DivergenceError on a non-finite iterate.
  virtual double black_box_h(const MetaVector& phi, std::size_t T, std::uint64_t run_seed) const;

 protected:
  void check_meta(const MetaVector& phi) const;
  void check_inner(const InnerVector& theta) const;
};

}  // namespace blo
