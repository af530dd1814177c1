#include "blo/pde.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>

namespace blo {
namespace {

using std::numbers::pi;

constexpr double kAdvectionCfl = 0.8;  // SSP-RK3 with central differences is stable to sqrt(3)
constexpr double kReactionStep = 0.05;
constexpr double kMaxCoefficient = 1e3;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void check_finite(const CountedVector<double>& u, std::size_t slice) {
  for (double v : u)
    if (!std::isfinite(v))
      throw DivergenceError("pde_solve: non-finite field at time slice " + std::to_string(slice),
                            static_cast<long>(slice));
}

// Constant-coefficient tridiagonal system (1 + 2r) u_j - r (u_{j-1} + u_{j+1}) = rhs_j on the
// interior nodes, LU-factorised once per solve.
class BackwardEulerDiffusion {
 public:
  BackwardEulerDiffusion(std::size_t interior, double r) : r_(r), c_(interior), inv_(interior) {
    const double diag = 1.0 + 2.0 * r;
    double prev_c = 0.0;
    for (std::size_t j = 0; j < interior; ++j) {
      const double denom = diag - (j == 0 ? 0.0 : -r * prev_c);
      inv_[j] = 1.0 / denom;
      c_[j] = -r * inv_[j];
      prev_c = c_[j];
    }
  }

  // In place on the full grid u[0..n-1] with Dirichlet values left/right.
  void apply(CountedVector<double>& u, double left, double right, CountedVector<double>& work) const {
    const std::size_t n = u.size();
    const std::size_t m = n - 2;
    u[0] = left;
    u[n - 1] = right;
    // forward sweep
    for (std::size_t j = 0; j < m; ++j) {
      double rhs = u[j + 1];
      if (j == 0) rhs += r_ * left;
      if (j == m - 1) rhs += r_ * right;
      const double prev = j == 0 ? 0.0 : work[j - 1];
      work[j] = (rhs + r_ * prev) * inv_[j];
    }
    // back substitution
    for (std::size_t j = m; j-- > 0;) {
      const double next = j + 1 < m ? u[j + 2] : 0.0;
      u[j + 1] = work[j] - c_[j] * next;
    }
  }

 private:
  double r_;
  std::vector<double> c_;
  std::vector<double> inv_;
};

PdeField make_field(std::size_t nx, std::size_t nt, bool periodic) {
  PdeField f;
  f.nx = nx;
  f.nt = nt;
  f.x.resize(nx);
  f.t.resize(nt);
  for (std::size_t j = 0; j < nx; ++j)
    f.x[j] = periodic ? -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(nx)
                      : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(nx - 1);
  for (std::size_t k = 0; k < nt; ++k)
    f.t[k] = static_cast<double>(k) / static_cast<double>(nt - 1);
  f.u.resize(nx * nt);
  return f;
}

PdeField solve_dirichlet(PdeKind kind, double nu, const PdeGrid& grid) {
  const std::size_t nx = grid.nx;
  const std::size_t nt = grid.nt;
  PdeField field = make_field(nx, nt, false);
  const double dx = 2.0 / static_cast<double>(nx - 1);
  const double interval = 1.0 / static_cast<double>(nt - 1);

  CountedVector<double> u(nx), stage(nx), rhs(nx), work(nx);
  double boundary = 0.0;
  for (std::size_t j = 0; j < nx; ++j) {
    const double x = field.x[j];
    u[j] = kind == PdeKind::Burgers ? -std::sin(pi * x) : x * x * std::cos(pi * x);
  }
  if (kind == PdeKind::Burgers) {
    u[0] = u[nx - 1] = 0.0;  // sin(+-pi) is not exactly zero in floating point
  } else {
    boundary = -1.0;
    u[0] = u[nx - 1] = boundary;
  }
  std::copy(u.begin(), u.end(), field.u.begin());

  double amplitude = 0.0;
  for (double v : u) amplitude = std::max(amplitude, std::abs(v));
  std::size_t substeps = 1;
  if (kind == PdeKind::Burgers) {
    // max principle: |u| never exceeds its initial bound
    substeps = static_cast<std::size_t>(std::ceil(interval * amplitude / (kAdvectionCfl * dx)));
  } else {
    substeps = static_cast<std::size_t>(std::ceil(interval / kReactionStep));
  }
  substeps = std::max<std::size_t>(1, substeps);
  const double dt = interval / static_cast<double>(substeps);
  const BackwardEulerDiffusion diffusion(nx - 2, nu * dt / (dx * dx));

  // explicit right-hand side on interior nodes
  auto explicit_rhs = [&](const CountedVector<double>& v, CountedVector<double>& out) {
    out[0] = out[nx - 1] = 0.0;
    if (kind == PdeKind::Burgers) {
      const double c = 1.0 / (6.0 * dx);
      for (std::size_t j = 1; j + 1 < nx; ++j) {
        const double l = v[j - 1], r = v[j + 1];
        out[j] = -c * ((r * r - l * l) + v[j] * (r - l));
      }
    } else {
      for (std::size_t j = 1; j + 1 < nx; ++j) out[j] = 5.0 * (v[j] - v[j] * v[j] * v[j]);
    }
  };

  CountedVector<double> u1(nx), u2(nx);
  for (std::size_t k = 1; k < nt; ++k) {
    for (std::size_t s = 0; s < substeps; ++s) {
      // SSP-RK3 (Shu-Osher) on the explicit part
      explicit_rhs(u, rhs);
      for (std::size_t j = 0; j < nx; ++j) u1[j] = u[j] + dt * rhs[j];
      explicit_rhs(u1, rhs);
      for (std::size_t j = 0; j < nx; ++j) u2[j] = 0.75 * u[j] + 0.25 * (u1[j] + dt * rhs[j]);
      explicit_rhs(u2, rhs);
      for (std::size_t j = 0; j < nx; ++j)
        u[j] = u[j] / 3.0 + (2.0 / 3.0) * (u2[j] + dt * rhs[j]);
      diffusion.apply(u, boundary, boundary, work);
    }
    check_finite(u, k);
    std::copy(u.begin(), u.end(), field.u.begin() + static_cast<std::ptrdiff_t>(k * nx));
  }
  return field;
}

PdeField solve_kdv(double nu, const PdeGrid& grid) {
  const std::size_t nx = grid.nx;
  const std::size_t nt = grid.nt;
  if (nx % 2 != 0) throw InvalidArgument("pde_solve: KdV needs an even number of nodes");
  PdeField field = make_field(nx, nt, true);
  const std::size_t nk = nx / 2 + 1;
  const double interval = 1.0 / static_cast<double>(nt - 1);

  using cplx = std::complex<double>;
  CountedVector<double> real_buf(nx);
  CountedVector<cplx> spec_buf(nk), uhat(nk), a(nk), b(nk), c(nk), d(nk), tmp(nk);
  std::vector<double> k(nk);
  std::vector<bool> keep(nk);
  for (std::size_t m = 0; m < nk; ++m) {
    k[m] = pi * static_cast<double>(m);  // period 2
    keep[m] = 3 * m < nx && m != nx / 2;  // 2/3 rule, drop Nyquist
  }

  fftw_plan forward, backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(nx), real_buf.data(),
                                   reinterpret_cast<fftw_complex*>(spec_buf.data()),
                                   FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(static_cast<int>(nx),
                                    reinterpret_cast<fftw_complex*>(spec_buf.data()),
                                    real_buf.data(), FFTW_ESTIMATE);
  }
  struct PlanGuard {
    fftw_plan f, b;
    ~PlanGuard() {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(f);
      fftw_destroy_plan(b);
    }
  } guard{forward, backward};

  const double inv_n = 1.0 / static_cast<double>(nx);
  double amplitude = 0.0;
  for (std::size_t j = 0; j < nx; ++j) {
    real_buf[j] = std::cos(pi * field.x[j]);
    field.u[j] = real_buf[j];
    amplitude = std::max(amplitude, std::abs(real_buf[j]));
  }
  fftw_execute(forward);
  std::copy(spec_buf.begin(), spec_buf.end(), uhat.begin());

  // Solitons of this problem stay below roughly 3x the initial amplitude; 4x leaves margin.
  const double kmax = pi * static_cast<double>(nx) / 3.0;
  std::size_t substeps = static_cast<std::size_t>(std::ceil(interval * 4.0 * amplitude * kmax / 2.0));
  substeps = std::max<std::size_t>(1, substeps);
  const double dt = interval / static_cast<double>(substeps);

  // u_t = L u + N(u), L = i nu k^3, N(u) = -(i k / 2) F[u^2]
  std::vector<cplx> E(nk), E2(nk);
  for (std::size_t m = 0; m < nk; ++m) {
    const cplx L(0.0, nu * k[m] * k[m] * k[m]);
    E[m] = std::exp(L * (dt / 2.0));
    E2[m] = E[m] * E[m];
  }
  auto nonlinear = [&](const CountedVector<cplx>& in, CountedVector<cplx>& out) {
    for (std::size_t m = 0; m < nk; ++m) spec_buf[m] = keep[m] ? in[m] : cplx(0.0);
    fftw_execute(backward);  // unnormalised inverse
    for (std::size_t j = 0; j < nx; ++j) {
      const double v = real_buf[j] * inv_n;
      real_buf[j] = v * v;
    }
    fftw_execute(forward);
    for (std::size_t m = 0; m < nk; ++m)
      out[m] = keep[m] ? cplx(0.0, -0.5 * k[m] * dt) * spec_buf[m] : cplx(0.0);
  };

  for (std::size_t step = 1; step < nt; ++step) {
    for (std::size_t s = 0; s < substeps; ++s) {
      nonlinear(uhat, a);
      for (std::size_t m = 0; m < nk; ++m) tmp[m] = E[m] * (uhat[m] + 0.5 * a[m]);
      nonlinear(tmp, b);
      for (std::size_t m = 0; m < nk; ++m) tmp[m] = E[m] * uhat[m] + 0.5 * b[m];
      nonlinear(tmp, c);
      for (std::size_t m = 0; m < nk; ++m) tmp[m] = E2[m] * uhat[m] + E[m] * c[m];
      nonlinear(tmp, d);
      for (std::size_t m = 0; m < nk; ++m)
        uhat[m] = E2[m] * uhat[m] + (E2[m] * a[m] + 2.0 * E[m] * (b[m] + c[m]) + d[m]) / 6.0;
    }
    std::copy(uhat.begin(), uhat.end(), spec_buf.begin());
    fftw_execute(backward);
    for (std::size_t j = 0; j < nx; ++j) real_buf[j] *= inv_n;
    check_finite(real_buf, step);
    std::copy(real_buf.begin(), real_buf.end(),
              field.u.begin() + static_cast<std::ptrdiff_t>(step * nx));
  }
  return field;
}

}  // namespace

std::string_view to_string(PdeKind k) {
  switch (k) {
    case PdeKind::Burgers:
      return "burgers";
    case PdeKind::AllenCahn:
      return "allen_cahn";
    case PdeKind::KdV:
      return "kdv";
  }
  return "unknown";
}

PdeKind pde_kind_from_string(std::string_view s) {
  if (s == "burgers") return PdeKind::Burgers;
  if (s == "allen_cahn") return PdeKind::AllenCahn;
  if (s == "kdv") return PdeKind::KdV;
  throw InvalidArgument("unknown pde '" + std::string(s) + "'");
}

double pde_reference_coefficient(PdeKind k) {
  switch (k) {
    case PdeKind::Burgers:
      return 0.01 / pi;
    case PdeKind::AllenCahn:
      return 0.001;
    case PdeKind::KdV:
      return 0.0025;
  }
  return 0.0;
}

PdeField pde_solve(PdeKind kind, double nu, const PdeGrid& grid) {
  if (grid.nx < 4 || grid.nt < 2) throw InvalidArgument("pde_solve: grid too small");
  if (!std::isfinite(nu) || std::abs(nu) > kMaxCoefficient)
    throw InvalidArgument("pde_solve: coefficient out of range");
  if (kind == PdeKind::KdV) {
    if (nu == 0.0) throw InvalidArgument("pde_solve: KdV dispersion must be non-zero");
    return solve_kdv(nu, grid);
  }
  if (!(nu > 0.0)) throw InvalidArgument("pde_solve: diffusion coefficient must be positive");
  return solve_dirichlet(kind, nu, grid);
}

// ---------------------------------------------------------------------------------------

PdeDiscoveryProblem::PdeDiscoveryProblem(const PdeDiscoverySpec& spec) : spec_(spec) {
  if (spec_.nu_true == 0.0) spec_.nu_true = pde_reference_coefficient(spec_.kind);
  if (spec_.obs_x == 0 || spec_.obs_t == 0) throw InvalidArgument("pde: empty observation grid");
  if (spec_.log_parameter && !(spec_.nu_true > 0.0))
    throw InvalidArgument("pde: log parameterisation needs a positive coefficient");
  const std::size_t nx = spec_.grid.nx;
  const std::size_t nt = spec_.grid.nt;
  for (std::size_t a = 0; a < spec_.obs_t; ++a) {
    const auto k = static_cast<std::size_t>(
        std::lround(static_cast<double>((a + 1) * (nt - 1)) / static_cast<double>(spec_.obs_t)));
    for (std::size_t b = 0; b < spec_.obs_x; ++b) {
      const auto j = static_cast<std::size_t>(std::lround(
          static_cast<double>((b + 1) * (nx - 1)) / static_cast<double>(spec_.obs_x + 1)));
      sites_.emplace_back(k, j);
    }
  }
  const PdeField truth = pde_solve(spec_.kind, spec_.nu_true, spec_.grid);
  for (const auto& [k, j] : sites_) observed_.push_back(truth.value(k, j));
}

std::string PdeDiscoveryProblem::name() const { return "pde_" + std::string(to_string(spec_.kind)); }

double PdeDiscoveryProblem::coefficient(const MetaVector& phi) const {
  check_meta(phi);
  return spec_.log_parameter ? std::exp(phi[0]) : phi[0];
}

MetaVector PdeDiscoveryProblem::encode(double nu) const {
  return MetaVector{spec_.log_parameter ? std::log(nu) : nu};
}

double PdeDiscoveryProblem::black_box_h(const MetaVector& phi, std::size_t, std::uint64_t) const {
  const double nu = coefficient(phi);
  if (!std::isfinite(nu)) throw DivergenceError("pde: non-finite coefficient");
  const PdeField field = pde_solve(spec_.kind, nu, spec_.grid);
  double sum = 0.0;
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const double r = field.value(sites_[i].first, sites_[i].second) - observed_[i];
    sum += r * r;
  }
  return sum / static_cast<double>(sites_.size());
}

void PdeDiscoveryProblem::no_oracle(const char* what) const {
  throw NotDifferentiable(name() + ": " + what +
                          " is unavailable; the inner solver is a black box (use a "
                          "zeroth-order estimator)");
}

double PdeDiscoveryProblem::meta_loss(const InnerVector&, const MetaVector&) const {
  no_oracle("meta_loss");
}
InnerVector PdeDiscoveryProblem::inner_init(const MetaVector&) const { no_oracle("inner_init"); }
InnerVector PdeDiscoveryProblem::transition(const InnerVector&, const MetaVector&, std::size_t,
                                            std::uint64_t) const {
  no_oracle("transition");
}
InnerVector PdeDiscoveryProblem::partial_f_theta(const InnerVector&, const MetaVector&) const {
  no_oracle("partial_f_theta");
}
MetaVector PdeDiscoveryProblem::partial_f_phi(const InnerVector&, const MetaVector&) const {
  no_oracle("partial_f_phi");
}
InnerVector PdeDiscoveryProblem::init_jvp(const MetaVector&, const MetaVector&) const {
  no_oracle("init_jvp");
}
MetaVector PdeDiscoveryProblem::init_vjp(const MetaVector&, const InnerVector&) const {
  no_oracle("init_vjp");
}
InnerVector PdeDiscoveryProblem::transition_jvp(const InnerVector&, const MetaVector&,
                                                std::size_t, std::uint64_t, const InnerVector&,
                                                const MetaVector&) const {
  no_oracle("transition_jvp");
}
TransitionCotangent PdeDiscoveryProblem::transition_vjp(const InnerVector&, const MetaVector&,
                                                        std::size_t, std::uint64_t,
                                                        const InnerVector&) const {
  no_oracle("transition_vjp");
}
InnerVector PdeDiscoveryProblem::g_hvp(const InnerVector&, const MetaVector&,
                                       const InnerVector&) const {
  no_oracle("g_hvp");
}
MetaVector PdeDiscoveryProblem::g_cross_vjp(const InnerVector&, const MetaVector&,
                                            const InnerVector&) const {
  no_oracle("g_cross_vjp");
}

}  // namespace blo
