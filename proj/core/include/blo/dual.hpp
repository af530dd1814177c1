#pragma once

#include <cmath>
#include <type_traits>

namespace blo {

/// First-order dual number a + b eps, eps^2 = 0. Propagating Dual through a gradient
/// routine yields a directional derivative of that gradient (forward-over-reverse).
struct Dual {
  double val = 0.0;
  double eps = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double v) : val(v) {}  // NOLINT: implicit lift of constants
  constexpr Dual(double v, double e) : val(v), eps(e) {}

  constexpr Dual& operator+=(const Dual& o) {
    val += o.val;
    eps += o.eps;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    val -= o.val;
    eps -= o.eps;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    eps = eps * o.val + val * o.eps;
    val *= o.val;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.val;
    eps = (eps - val * inv * o.eps) * inv;
    val *= inv;
    return *this;
  }
};

constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
constexpr Dual operator/(Dual a, const Dual& b) { return a /= b; }
constexpr Dual operator-(const Dual& a) { return {-a.val, -a.eps}; }

constexpr bool operator<(const Dual& a, const Dual& b) { return a.val < b.val; }
constexpr bool operator>(const Dual& a, const Dual& b) { return a.val > b.val; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.val);
  return {e, e * a.eps};
}
inline Dual log(const Dual& a) { return {std::log(a.val), a.eps / a.val}; }
inline Dual tanh(const Dual& a) {
  const double t = std::tanh(a.val);
  return {t, (1.0 - t * t) * a.eps};
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.val; }
inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.eps; }

template <class T>
inline constexpr bool is_dual_v = std::is_same_v<std::remove_cvref_t<T>, Dual>;

}  // namespace blo
