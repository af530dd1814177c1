#include "blo/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "blo/rng.hpp"

namespace blo {
namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix out(e.rows(), e.cols());
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c) out(r, c) = e(r, c);
  return out;
}

}  // namespace

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matrix product: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("matrix sum: shape");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += b(i, j);
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) { return a + (-1.0) * b; }

Matrix operator*(double s, Matrix a) {
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double& v : a.row(i)) v *= s;
  return a;
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> y) {
  if (x.size() != m.cols() || y.size() != m.rows()) throw InvalidArgument("matvec: shape");
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
}

void matvec_transposed(const Matrix& m, std::span<const double> x, std::span<double> y) {
  if (x.size() != m.rows() || y.size() != m.cols()) throw InvalidArgument("matvec^T: shape");
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = x[r];
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) y[c] += xr * row[c];
  }
}

std::vector<double> symmetric_eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("symmetric_eigenvalues: not square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(m), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

Matrix spd_inverse(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("spd_inverse: not square");
  Eigen::LLT<Eigen::MatrixXd> llt(to_eigen(m));
  if (llt.info() != Eigen::Success) throw InvalidArgument("spd_inverse: matrix is not SPD");
  return from_eigen(llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols())));
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  Eigen::MatrixXd g(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  return from_eigen(q);
}

}  // namespace blo
