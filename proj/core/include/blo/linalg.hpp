#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "blo/errors.hpp"
#include "blo/memory.hpp"

namespace blo {

template <class T>
using CountedVector = std::vector<T, CountingAllocator<T>>;

/// Dense float64 vector tagged with the space it lives in. Arithmetic is only defined
/// between vectors of the same space; crossing spaces goes through `span()`.
template <class Space>
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  DenseVector(std::initializer_list<double> init) : values_(init.begin(), init.end()) {}
  explicit DenseVector(std::span<const double> values)
      : values_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> span() noexcept { return {values_.data(), values_.size()}; }
  std::span<const double> span() const noexcept { return {values_.data(), values_.size()}; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  DenseVector& operator+=(const DenseVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  DenseVector& operator-=(const DenseVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  DenseVector& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }
  /// this += a * x
  DenseVector& axpy(double a, const DenseVector& x) {
    check_same(x);
    for (std::size_t i = 0; i < size(); ++i) values_[i] += a * x.values_[i];
    return *this;
  }

  friend DenseVector operator+(DenseVector a, const DenseVector& b) { return a += b; }
  friend DenseVector operator-(DenseVector a, const DenseVector& b) { return a -= b; }
  friend DenseVector operator*(double s, DenseVector a) { return a *= s; }
  friend DenseVector operator-(DenseVector a) { return a *= -1.0; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseVector& a, const DenseVector& b) {
    return std::equal(a.values_.begin(), a.values_.end(), b.values_.begin(), b.values_.end());
  }

 private:
  void check_same(const DenseVector& o) const {
    if (o.size() != size()) throw InvalidArgument("vector dimension mismatch");
  }

  CountedVector<double> values_;
};

struct MetaSpace {};
struct InnerSpace {};

/// Meta parameter phi (length N) and anything living in its dual, e.g. hypergradients.
using MetaVector = DenseVector<MetaSpace>;
/// Inner parameter theta (length M) and tangent states Z_t v.
using InnerVector = DenseVector<InnerSpace>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class S>
double dot(const DenseVector<S>& a, const DenseVector<S>& b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: dimension mismatch");
  return dot(a.span(), b.span());
}

template <class S>
double squared_norm(const DenseVector<S>& a) {
  return dot(a.span(), a.span());
}

template <class S>
double norm(const DenseVector<S>& a) {
  return std::sqrt(squared_norm(a));
}

template <class S>
double max_abs(const DenseVector<S>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf); zero when both vectors vanish.
template <class S>
double max_relative_error(const DenseVector<S>& a, const DenseVector<S>& b) {
  if (a.size() != b.size()) throw InvalidArgument("relative error: dimension mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  const double scale = std::max(max_abs(a), max_abs(b));
  return scale == 0.0 ? diff : diff / scale;
}

/// Row-major dense matrix. Used for explicit Jacobians and oracle computations only.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return values_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> flat() const { return {values_.data(), values_.size()}; }

  Matrix transposed() const;

  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator+(const Matrix& a, const Matrix& b);
  friend Matrix operator-(const Matrix& a, const Matrix& b);
  friend Matrix operator*(double s, Matrix a);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  CountedVector<double> values_;
};

/// y = M x
void matvec(const Matrix& m, std::span<const double> x, std::span<double> y);
/// y = M^T x
void matvec_transposed(const Matrix& m, std::span<const double> x, std::span<double> y);

/// Eigenvalues of a symmetric matrix in ascending order.
std::vector<double> symmetric_eigenvalues(const Matrix& m);
/// Inverse of a symmetric positive-definite matrix (Cholesky based).
Matrix spd_inverse(const Matrix& m);
/// Random orthogonal matrix from the QR factorisation of a Gaussian matrix.
Matrix random_orthogonal(std::size_t n, std::uint64_t seed);

}  // namespace blo
