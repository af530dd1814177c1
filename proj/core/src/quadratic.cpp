#include "blo/quadratic.hpp"

#include <cmath>
#include <string>

#include "blo/rng.hpp"

namespace blo {

QuadraticBilevel::QuadraticBilevel(Matrix A, Matrix B, InnerVector theta_star, double eta,
                                   double lambda, Matrix init_map)
    : A_(std::move(A)),
      B_(std::move(B)),
      theta_star_(std::move(theta_star)),
      eta_(eta),
      lambda_(lambda),
      init_(std::move(init_map)) {
  const std::size_t m = B_.rows();
  const std::size_t n = B_.cols();
  if (m == 0 || n == 0) throw InvalidArgument("quadratic: dimensions must be positive");
  if (A_.rows() != m || A_.cols() != m) throw InvalidArgument("quadratic: A must be M x M");
  if (theta_star_.size() != m) throw InvalidArgument("quadratic: theta* must have length M");
  if (init_.rows() != m || init_.cols() != n) throw InvalidArgument("quadratic: C must be M x N");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(A_(i, j) - A_(j, i)) > 1e-12 * (1.0 + std::abs(A_(i, j))))
        throw InvalidArgument("quadratic: A must be symmetric");
  const auto eig = symmetric_eigenvalues(A_);
  eig_min_ = eig.front();
  eig_max_ = eig.back();
  if (!(eig_min_ > 0.0)) throw InvalidArgument("quadratic: A must be positive definite");
  if (!(eta_ > 0.0) || !(eta_ < 2.0 / eig_max_))
    throw InvalidArgument("quadratic: eta must lie in (0, 2/lambda_max(A)) = (0, " +
                          std::to_string(2.0 / eig_max_) + ")");
  if (!(lambda_ >= 0.0)) throw InvalidArgument("quadratic: lambda must be >= 0");
}

QuadraticBilevel QuadraticBilevel::from_spec(const QuadraticSpec& s) {
  if (s.inner_dim == 0 || s.meta_dim == 0)
    throw InvalidArgument("quadratic: dimensions must be positive");
  if (!(s.eig_min > 0.0) || s.eig_max < s.eig_min)
    throw InvalidArgument("quadratic: need 0 < eig_min <= eig_max");
  const std::size_t m = s.inner_dim;
  const std::size_t n = s.meta_dim;

  const Matrix q = random_orthogonal(m, derive_seed(s.seed, 0));
  Matrix diag(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    const double frac = m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1);
    diag(i, i) = s.eig_min * std::pow(s.eig_max / s.eig_min, frac);
  }
  Matrix A = q * diag * q.transposed();
  for (std::size_t i = 0; i < m; ++i)  // exact symmetry
    for (std::size_t j = 0; j < i; ++j) A(i, j) = A(j, i) = 0.5 * (A(i, j) + A(j, i));

  CounterRng rng(derive_seed(s.seed, 1));
  Matrix B(m, n);
  const double bscale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) B(i, j) = bscale * rng.normal();
  InnerVector theta_star(m);
  for (std::size_t i = 0; i < m; ++i) theta_star[i] = rng.normal();

  Matrix C(m, n);
  switch (s.init) {
    case QuadraticInit::Zero:
      break;
    case QuadraticInit::FixedPoint:
      C = spd_inverse(A) * B;
      break;
    case QuadraticInit::Random:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) C(i, j) = bscale * rng.normal();
      break;
  }
  const double eta = s.eta > 0.0 ? s.eta : 1.0 / s.eig_max;
  return QuadraticBilevel(std::move(A), std::move(B), std::move(theta_star), eta, s.lambda,
                          std::move(C));
}

double QuadraticBilevel::meta_loss(const InnerVector& theta, const MetaVector& phi) const {
  check_inner(theta);
  check_meta(phi);
  return 0.5 * squared_norm(theta - theta_star_) + 0.5 * lambda_ * squared_norm(phi);
}

InnerVector QuadraticBilevel::inner_init(const MetaVector& phi) const {
  check_meta(phi);
  InnerVector theta(inner_dim());
  matvec(init_, phi.span(), theta.span());
  return theta;
}

InnerVector QuadraticBilevel::transition(const InnerVector& theta, const MetaVector& phi,
                                         std::size_t, std::uint64_t) const {
  check_inner(theta);
  check_meta(phi);
  InnerVector grad(inner_dim());
  InnerVector bphi(inner_dim());
  matvec(A_, theta.span(), grad.span());
  matvec(B_, phi.span(), bphi.span());
  grad -= bphi;
  InnerVector next = theta;
  next.axpy(-eta_, grad);
  return next;
}

InnerVector QuadraticBilevel::partial_f_theta(const InnerVector& theta, const MetaVector&) const {
  check_inner(theta);
  return theta - theta_star_;
}

MetaVector QuadraticBilevel::partial_f_phi(const InnerVector&, const MetaVector& phi) const {
  check_meta(phi);
  return lambda_ * phi;
}

InnerVector QuadraticBilevel::init_jvp(const MetaVector&, const MetaVector& v) const {
  check_meta(v);
  InnerVector out(inner_dim());
  matvec(init_, v.span(), out.span());
  return out;
}

MetaVector QuadraticBilevel::init_vjp(const MetaVector&, const InnerVector& d) const {
  check_inner(d);
  MetaVector out(meta_dim());
  matvec_transposed(init_, d.span(), out.span());
  return out;
}

InnerVector QuadraticBilevel::transition_jvp(const InnerVector&, const MetaVector&, std::size_t,
                                             std::uint64_t, const InnerVector& y,
                                             const MetaVector& v) const {
  check_inner(y);
  check_meta(v);
  // (I - eta A) y + eta B v
  InnerVector ay(inner_dim());
  InnerVector bv(inner_dim());
  matvec(A_, y.span(), ay.span());
  matvec(B_, v.span(), bv.span());
  InnerVector out = y;
  out.axpy(-eta_, ay);
  out.axpy(eta_, bv);
  return out;
}

TransitionCotangent QuadraticBilevel::transition_vjp(const InnerVector&, const MetaVector&,
                                                     std::size_t, std::uint64_t,
                                                     const InnerVector& d) const {
  check_inner(d);
  TransitionCotangent out{InnerVector(inner_dim()), MetaVector(meta_dim())};
  InnerVector ad(inner_dim());
  matvec_transposed(A_, d.span(), ad.span());
  out.d_theta = d;
  out.d_theta.axpy(-eta_, ad);
  matvec_transposed(B_, d.span(), out.d_phi.span());
  out.d_phi *= eta_;
  return out;
}

InnerVector QuadraticBilevel::g_hvp(const InnerVector&, const MetaVector&,
                                    const InnerVector& u) const {
  check_inner(u);
  InnerVector out(inner_dim());
  matvec(A_, u.span(), out.span());
  return out;
}

MetaVector QuadraticBilevel::g_cross_vjp(const InnerVector&, const MetaVector&,
                                         const InnerVector& r) const {
  check_inner(r);
  // d^2 g / dtheta dphi = -B
  MetaVector out(meta_dim());
  matvec_transposed(B_, r.span(), out.span());
  out *= -1.0;
  return out;
}

Matrix quadratic_unrolled_jacobian(const QuadraticBilevel& p, std::size_t T) {
  const std::size_t m = p.inner_dim();
  const Matrix step = Matrix::identity(m) - p.eta() * p.A();
  const Matrix drive = p.eta() * p.B();
  Matrix Z = p.init_map();
  for (std::size_t t = 1; t <= T; ++t) Z = step * Z + drive;
  return Z;
}

MetaVector quadratic_true_hypergradient(const QuadraticBilevel& p, const MetaVector& phi,
                                        std::size_t T) {
  if (phi.size() != p.meta_dim()) throw InvalidArgument("quadratic oracle: phi length");
  const Matrix Z = quadratic_unrolled_jacobian(p, T);
  InnerVector residual(p.inner_dim());
  matvec(Z, phi.span(), residual.span());
  residual -= p.theta_star();
  MetaVector grad(p.meta_dim());
  matvec_transposed(Z, residual.span(), grad.span());
  grad.axpy(p.lambda(), phi);
  return grad;
}

Matrix quadratic_meta_hessian(const QuadraticBilevel& p, std::size_t T) {
  const Matrix Z = quadratic_unrolled_jacobian(p, T);
  return Z.transposed() * Z + p.lambda() * Matrix::identity(p.meta_dim());
}

MetaVector quadratic_minimizer(const QuadraticBilevel& p, std::size_t T) {
  const Matrix Z = quadratic_unrolled_jacobian(p, T);
  const Matrix H = Z.transposed() * Z + p.lambda() * Matrix::identity(p.meta_dim());
  MetaVector rhs(p.meta_dim());
  matvec_transposed(Z, p.theta_star().span(), rhs.span());
  MetaVector phi(p.meta_dim());
  matvec(spd_inverse(H), rhs.span(), phi.span());
  return phi;
}

}  // namespace blo
