// Small dense NLPs for solver tests, differentiated by the derivative provider.
#pragma once

#include <array>
#include <utility>
#include <vector>

#include "ceropt/derivatives.h"
#include "ceropt/nlp_solver.h"

namespace ceropt::testing {

// F: array<S, N> -> array<S, 1>, G: array<S, N> -> array<S, M>.
template <int N, int M, typename F, typename G>
class DenseNlp final : public NlpProblem {
 public:
  DenseNlp(F f, G g, std::array<double, N> xl, std::array<double, N> xu, std::array<double, M> gl,
           std::array<double, M> gu)
      : f_(std::move(f)), g_(std::move(g)), xl_(xl), xu_(xu), gl_(gl), gu_(gu) {}

  int num_variables() const override { return N; }
  int num_constraints() const override { return M; }
  void bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& gl, Eigen::VectorXd& gu) const override {
    xl = Eigen::Map<const Eigen::Matrix<double, N, 1>>(xl_.data());
    xu = Eigen::Map<const Eigen::Matrix<double, N, 1>>(xu_.data());
    gl.resize(M);
    gu.resize(M);
    for (int i = 0; i < M; ++i) {
      gl(i) = gl_[i];
      gu(i) = gu_[i];
    }
  }
  double objective(const Eigen::VectorXd& x) const override { return f_(arr(x))[0]; }
  void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    grad = jacobian<N>(f_, arr(x)).jacobian.transpose();
  }
  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g) const override {
    g.resize(M);
    if constexpr (M > 0) {
      const auto v = g_(arr(x));
      for (int i = 0; i < M; ++i) g(i) = v[i];
    }
  }
  std::vector<std::pair<int, int>> jacobian_structure() const override {
    std::vector<std::pair<int, int>> s;
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) s.emplace_back(i, j);
    return s;
  }
  void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd& values) const override {
    values.resize(M * N);
    if constexpr (M > 0) {
      const auto r = jacobian<N>(g_, arr(x));
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) values(i * N + j) = r.jacobian(i, j);
    }
  }
  std::vector<std::pair<int, int>> hessian_structure() const override {
    std::vector<std::pair<int, int>> s;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j <= i; ++j) s.emplace_back(i, j);
    return s;
  }
  void hessian_values(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                      Eigen::VectorXd& values) const override {
    Eigen::Matrix<double, N, N> h = obj_factor * hessian<N>(f_, arr(x));
    if constexpr (M > 0) {
      std::array<double, M> w;
      for (int i = 0; i < M; ++i) w[i] = lambda(i);
      h += second_order<N>(g_, arr(x), w).weighted_hessian;
    }
    values.resize(N * (N + 1) / 2);
    int k = 0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j <= i; ++j) values(k++) = h(i, j);
  }

 private:
  static std::array<double, N> arr(const Eigen::VectorXd& x) {
    std::array<double, N> a;
    for (int i = 0; i < N; ++i) a[i] = x(i);
    return a;
  }
  F f_;
  G g_;
  std::array<double, N> xl_, xu_;
  std::array<double, M> gl_, gu_;
};

template <int N, int M, typename F, typename G>
DenseNlp<N, M, F, G> make_dense_nlp(F f, G g, std::array<double, N> xl, std::array<double, N> xu,
                                    std::array<double, M> gl, std::array<double, M> gu) {
  return DenseNlp<N, M, F, G>(std::move(f), std::move(g), xl, xu, gl, gu);
}

}  // namespace ceropt::testing
