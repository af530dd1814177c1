#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "blo/problem.hpp"

namespace blo {

enum class PdeKind {
  Burgers,    // u_t + u u_x - nu u_xx = 0, u(0,x) = -sin(pi x), u(t,+-1) = 0
  AllenCahn,  // u_t - nu u_xx = 5 (u - u^3), u(0,x) = x^2 cos(pi x), u(t,+-1) = -1
  KdV,        // u_t + u u_x + nu u_xxx = 0, u(0,x) = cos(pi x), periodic on [-1, 1)
};

std::string_view to_string(PdeKind k);
PdeKind pde_kind_from_string(std::string_view s);

/// Reference coefficient used to generate observations for each equation.
double pde_reference_coefficient(PdeKind k);

struct PdeGrid {
  std::size_t nx = 256;  // spatial nodes on x in [-1, 1]
  std::size_t nt = 512;  // stored time slices on t in [0, 1], including t = 0
};

/// Space-time solution, row-major in time: value(k, j) = u(t_k, x_j).
struct PdeField {
  std::size_t nx = 0;
  std::size_t nt = 0;
  std::vector<double> x;
  std::vector<double> t;
  std::vector<double> u;

  double value(std::size_t k, std::size_t j) const { return u[k * nx + j]; }
};

/// Solves the equation with coefficient nu on the grid.
///
/// Burgers and Allen-Cahn: second-order central differences on nx nodes including the
/// Dirichlet boundaries; each substep advances the explicit part (advection or reaction) with
/// SSP-RK3 and then applies backward-Euler diffusion (tridiagonal solve). Advection uses the
/// skew-symmetric form (u^2)_x/3 + u u_x/3, which keeps the semi-discrete energy bounded.
/// KdV: Fourier pseudo-spectral on nx periodic nodes with an integrating-factor RK4 step and
/// 2/3 dealiasing.
///
/// The substep count depends only on the grid and initial data, never on nu, so the map
/// nu -> u is smooth for a fixed grid. Throws DivergenceError on a non-finite field and
/// InvalidArgument for nu outside the admissible range.
PdeField pde_solve(PdeKind kind, double nu, const PdeGrid& grid);

struct PdeDiscoverySpec {
  PdeKind kind = PdeKind::Burgers;
  double nu_true = 0.0;   // 0 selects pde_reference_coefficient(kind)
  PdeGrid grid{};
  std::size_t obs_x = 8;  // observations form an obs_x by obs_t space-time lattice
  std::size_t obs_t = 8;
  bool log_parameter = true;  // phi = log(nu) when true, phi = nu otherwise
};

/// Coefficient discovery posed as a bi-level problem whose inner problem is the numerical
/// solver. Only black_box_h is available; the derivative oracles throw NotDifferentiable.
/// Observations are produced by the same solver at nu_true.
class PdeDiscoveryProblem : public BilevelProblem {
 public:
  explicit PdeDiscoveryProblem(const PdeDiscoverySpec& spec);

  std::string name() const override;
  std::size_t meta_dim() const override { return 1; }
  std::size_t inner_dim() const override { return spec_.grid.nx; }
  bool differentiable() const override { return false; }

  double meta_loss(const InnerVector& theta, const MetaVector& phi) const override;
  InnerVector inner_init(const MetaVector& phi) const override;
  InnerVector transition(const InnerVector& theta, const MetaVector& phi, std::size_t t,
                         std::uint64_t seed) const override;
  InnerVector partial_f_theta(const InnerVector& theta, const MetaVector& phi) const override;
  MetaVector partial_f_phi(const InnerVector& theta, const MetaVector& phi) const override;
  InnerVector init_jvp(const MetaVector& phi, const MetaVector& v) const override;
  MetaVector init_vjp(const MetaVector& phi, const InnerVector& d) const override;
  InnerVector transition_jvp(const InnerVector& theta, const MetaVector& phi, std::size_t t,
                             std::uint64_t seed, const InnerVector& y,
                             const MetaVector& v) const override;
  TransitionCotangent transition_vjp(const InnerVector& theta, const MetaVector& phi,
                                     std::size_t t, std::uint64_t seed,
                                     const InnerVector& d) const override;
  InnerVector g_hvp(const InnerVector& theta, const MetaVector& phi,
                    const InnerVector& u) const override;
  MetaVector g_cross_vjp(const InnerVector& theta, const MetaVector& phi,
                         const InnerVector& r) const override;

  /// Mean squared misfit between the solve at coefficient(phi) and the observations.
  /// T and run_seed are ignored: the solver is deterministic.
  double black_box_h(const MetaVector& phi, std::size_t T, std::uint64_t run_seed) const override;

  double coefficient(const MetaVector& phi) const;
  MetaVector encode(double nu) const;

  const PdeDiscoverySpec& spec() const noexcept { return spec_; }
  const std::vector<double>& observations() const noexcept { return observed_; }
  /// (time index, space index) of each observation.
  const std::vector<std::pair<std::size_t, std::size_t>>& observation_sites() const noexcept {
    return sites_;
  }

 private:
  [[noreturn]] void no_oracle(const char* what) const;

  PdeDiscoverySpec spec_;
  std::vector<std::pair<std::size_t, std::size_t>> sites_;
  std::vector<double> observed_;
};

}  // namespace blo
