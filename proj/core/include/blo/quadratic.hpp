#pragma once

#include <cstdint>

#include "blo/problem.hpp"

namespace blo {

/// How the quadratic problem initialises theta_0 = C phi.
enum class QuadraticInit {
  Zero,        // C = 0, so Z_0 = 0
  FixedPoint,  // C = A^{-1} B: warm start at the inner optimum
  Random,      // C Gaussian
};

struct QuadraticSpec {
  std::size_t inner_dim = 3;   // M
  std::size_t meta_dim = 2;    // N
  double eig_min = 1.0;        // spectrum of A is geometrically spaced in [eig_min, eig_max]
  double eig_max = 2.0;
  double eta = 0.0;            // 0 selects 1 / eig_max
  double lambda = 0.1;         // ridge weight on phi in the meta loss
  QuadraticInit init = QuadraticInit::Zero;
  std::uint64_t seed = 1;
};

/// g(theta, phi) = 1/2 theta^T A theta - theta^T B phi, inner steps are plain gradient
/// descent theta <- theta - eta (A theta - B phi), and
/// f(theta, phi) = 1/2 |theta - theta*|^2 + lambda/2 |phi|^2.
/// Every derivative oracle is analytic.
class QuadraticBilevel : public BilevelProblem {
 public:
  QuadraticBilevel(Matrix A, Matrix B, InnerVector theta_star, double eta, double lambda,
                   Matrix init_map);

  static QuadraticBilevel from_spec(const QuadraticSpec& spec);

  std::string name() const override { return "quadratic"; }
  std::size_t meta_dim() const override { return B_.cols(); }
  std::size_t inner_dim() const override { return B_.rows(); }

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

  const Matrix& A() const noexcept { return A_; }
  const Matrix& B() const noexcept { return B_; }
  const Matrix& init_map() const noexcept { return init_; }
  const InnerVector& theta_star() const noexcept { return theta_star_; }
  double eta() const noexcept { return eta_; }
  double lambda() const noexcept { return lambda_; }
  /// Strong-convexity modulus of g in theta: lambda_min(A).
  double alpha() const noexcept { return eig_min_; }
  double lambda_max() const noexcept { return eig_max_; }

 private:
  Matrix A_;
  Matrix B_;
  InnerVector theta_star_;
  double eta_;
  double lambda_;
  Matrix init_;
  double eig_min_ = 0.0;
  double eig_max_ = 0.0;
};

/// Explicit Jacobian Z_T = d theta_T / d phi by the matrix recursion
/// Z_0 = C, Z_t = (I - eta A) Z_{t-1} + eta B. Since theta_T = Z_T phi for this problem it
/// also gives the unrolled map.
Matrix quadratic_unrolled_jacobian(const QuadraticBilevel& p, std::size_t T);

/// Exact grad h(phi) = Z_T^T (Z_T phi - theta*) + lambda phi.
MetaVector quadratic_true_hypergradient(const QuadraticBilevel& p, const MetaVector& phi,
                                        std::size_t T);

/// Hessian of h, Z_T^T Z_T + lambda I.
Matrix quadratic_meta_hessian(const QuadraticBilevel& p, std::size_t T);

/// The unique phi with grad h(phi) = 0 (requires Z_T^T Z_T + lambda I to be SPD).
MetaVector quadratic_minimizer(const QuadraticBilevel& p, std::size_t T);

}  // namespace blo
