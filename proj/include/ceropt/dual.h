// Forward-mode dual numbers with a fixed number of directions.
//
// Dual<double, N> carries a value and N directional derivatives. Nesting
// (Dual<Dual<double, N>, N>) yields second derivatives, which the derivative
// provider uses for Lagrangian Hessians.
//
// Only the primitives defined in this header are differentiable. There is no
// conversion from Dual to double, so calling any other math function on a
// Dual is a compile-time error.
#pragma once

#include <array>
#include <cmath>
#include <type_traits>

namespace ceropt {

template <typename T, int N>
class Dual;

template <typename T>
struct is_dual : std::false_type {};
template <typename T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};
template <typename T>
inline constexpr bool is_dual_v = is_dual<T>::value;

template <typename T, int N>
class Dual {
 public:
  using value_type = T;
  static constexpr int kDirections = N;

  T v{};
  std::array<T, N> d{};

  constexpr Dual() = default;
  // NOLINTNEXTLINE(google-explicit-constructor)
  constexpr Dual(double c) : v(c) {}
  constexpr Dual(T value, const std::array<T, N>& grad) : v(value), d(grad) {}

  // Seeds direction `dir` with unit derivative.
  static Dual variable(T value, int dir) {
    Dual r(value, {});
    r.d[dir] = T(1.0);
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const T inv = T(1.0) / o.v;
    v *= inv;
    for (int i = 0; i < N; ++i) d[i] = (d[i] - v * o.d[i]) * inv;
    return *this;
  }
  Dual& operator*=(double s) {
    v *= s;
    for (int i = 0; i < N; ++i) d[i] *= s;
    return *this;
  }
};

// Chain rule helper: f(a) with f'(a) already evaluated at a.v.
template <typename T, int N>
Dual<T, N> chain(const Dual<T, N>& a, const T& f, const T& df) {
  Dual<T, N> r;
  r.v = f;
  for (int i = 0; i < N; ++i) r.d[i] = df * a.d[i];
  return r;
}

template <typename T, int N>
Dual<T, N> operator-(const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <typename T, int N>
Dual<T, N> operator+(Dual<T, N> a, const Dual<T, N>& b) {
  return a += b;
}
template <typename T, int N>
Dual<T, N> operator-(Dual<T, N> a, const Dual<T, N>& b) {
  return a -= b;
}
template <typename T, int N>
Dual<T, N> operator*(Dual<T, N> a, const Dual<T, N>& b) {
  return a *= b;
}
template <typename T, int N>
Dual<T, N> operator/(Dual<T, N> a, const Dual<T, N>& b) {
  return a /= b;
}

template <typename T, int N>
Dual<T, N> operator+(Dual<T, N> a, double b) {
  a.v += b;
  return a;
}
template <typename T, int N>
Dual<T, N> operator+(double a, Dual<T, N> b) {
  b.v += a;
  return b;
}
template <typename T, int N>
Dual<T, N> operator-(Dual<T, N> a, double b) {
  a.v -= b;
  return a;
}
template <typename T, int N>
Dual<T, N> operator-(double a, const Dual<T, N>& b) {
  Dual<T, N> r = -b;
  r.v += a;
  return r;
}
template <typename T, int N>
Dual<T, N> operator*(Dual<T, N> a, double b) {
  return a *= b;
}
template <typename T, int N>
Dual<T, N> operator*(double a, Dual<T, N> b) {
  return b *= a;
}
template <typename T, int N>
Dual<T, N> operator/(Dual<T, N> a, double b) {
  return a *= 1.0 / b;
}
template <typename T, int N>
Dual<T, N> operator/(double a, const Dual<T, N>& b) {
  return Dual<T, N>(a) / b;
}

template <typename T, int N>
bool operator<(const Dual<T, N>& a, const Dual<T, N>& b) {
  return a.v < b.v;
}
template <typename T, int N>
bool operator>(const Dual<T, N>& a, const Dual<T, N>& b) {
  return a.v > b.v;
}
template <typename T, int N>
bool operator<(const Dual<T, N>& a, double b) {
  return a.v < b;
}
template <typename T, int N>
bool operator>(const Dual<T, N>& a, double b) {
  return a.v > b;
}

// Registered primitives.
template <typename T, int N>
Dual<T, N> sin(const Dual<T, N>& a) {
  using std::cos;
  using std::sin;
  return chain(a, T(sin(a.v)), T(cos(a.v)));
}
template <typename T, int N>
Dual<T, N> cos(const Dual<T, N>& a) {
  using std::cos;
  using std::sin;
  return chain(a, T(cos(a.v)), T(-sin(a.v)));
}
template <typename T, int N>
Dual<T, N> exp(const Dual<T, N>& a) {
  using std::exp;
  const T e = exp(a.v);
  return chain(a, e, e);
}
template <typename T, int N>
Dual<T, N> tanh(const Dual<T, N>& a) {
  using std::tanh;
  const T t = tanh(a.v);
  return chain(a, t, T(1.0 - t * t));
}
template <typename T, int N>
Dual<T, N> sqrt(const Dual<T, N>& a) {
  using std::sqrt;
  const T s = sqrt(a.v);
  return chain(a, s, T(0.5 / s));
}

// Recursively strips derivative parts.
inline double value_of(double x) { return x; }
template <typename T, int N>
double value_of(const Dual<T, N>& x) {
  return value_of(x.v);
}

}  // namespace ceropt
