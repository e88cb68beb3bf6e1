// Derivative provider: exact Jacobians and Hessians of functions written
// generically over the scalar type, evaluated with forward-mode duals.
//
// A differentiable function is any callable `f(const std::array<S, N>&)`
// returning `std::array<S, M>` for every scalar S in {double, Dual<...>}.
#pragma once

#include <array>
#include <tuple>

#include <Eigen/Core>

#include "ceropt/dual.h"

namespace ceropt {

template <typename F, int N>
concept DifferentiableFunction = requires(F f, std::array<Dual<double, N>, N> z) {
  { f(z) };
};

template <typename Array>
inline constexpr int array_size_v = static_cast<int>(std::tuple_size_v<std::remove_cvref_t<Array>>);

template <int M, int N>
struct JacobianResult {
  Eigen::Matrix<double, M, 1> value;
  Eigen::Matrix<double, M, N> jacobian;
};

template <int N, typename F>
  requires DifferentiableFunction<F, N>
auto jacobian(F&& f, const std::array<double, N>& at) {
  using D = Dual<double, N>;
  std::array<D, N> z;
  for (int i = 0; i < N; ++i) z[i] = D::variable(at[i], i);
  const auto out = f(z);
  constexpr int M = array_size_v<decltype(out)>;
  JacobianResult<M, N> r;
  for (int m = 0; m < M; ++m) {
    r.value(m) = out[m].v;
    for (int i = 0; i < N; ++i) r.jacobian(m, i) = out[m].d[i];
  }
  return r;
}

template <int M, int N>
struct SecondOrderResult {
  Eigen::Matrix<double, M, 1> value;
  Eigen::Matrix<double, M, N> jacobian;
  // Hessian of sum_m weights[m] * f_m.
  Eigen::Matrix<double, N, N> weighted_hessian;
};

// Values, Jacobian and the Hessian of the weighted sum of outputs in one
// nested forward pass.
template <int N, typename F, std::size_t M>
SecondOrderResult<static_cast<int>(M), N> second_order(F&& f, const std::array<double, N>& at,
                                                       const std::array<double, M>& weights) {
  using D1 = Dual<double, N>;
  using D2 = Dual<D1, N>;
  std::array<D2, N> z;
  for (int i = 0; i < N; ++i) {
    z[i].v = D1::variable(at[i], i);
    z[i].d[i] = D1(1.0);
  }
  const auto out = f(z);
  static_assert(array_size_v<decltype(out)> == static_cast<int>(M));
  SecondOrderResult<static_cast<int>(M), N> r;
  r.weighted_hessian.setZero();
  for (std::size_t m = 0; m < M; ++m) {
    r.value(m) = out[m].v.v;
    for (int i = 0; i < N; ++i) r.jacobian(m, i) = out[m].v.d[i];
    if (weights[m] == 0.0) continue;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) r.weighted_hessian(i, j) += weights[m] * out[m].d[i].d[j];
  }
  return r;
}

// Hessian of a scalar function (returned as a one-element array).
template <int N, typename F>
Eigen::Matrix<double, N, N> hessian(F&& f, const std::array<double, N>& at) {
  return second_order<N>(std::forward<F>(f), at, std::array<double, 1>{1.0}).weighted_hessian;
}

}  // namespace ceropt
