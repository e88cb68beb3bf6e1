// Shared helpers for the unit and acceptance suites.
#pragma once

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Core>

#include "ceropt/plant.h"

namespace ceropt::testing {

// Relative error with a small absolute floor, so exact zeros compare cleanly.
inline double relative_error(double a, double b, double floor = 1e-9) {
  return std::max(0.0, std::abs(a - b) - floor) / (std::abs(a) + std::abs(b) + floor);
}

inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-9) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) m = std::max(m, relative_error(a(i, j), b(i, j), floor));
  return m;
}

inline Eigen::MatrixXd central_difference(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    jac.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

// States with moderate velocities, away from the tanh friction knee where
// finite differences lose accuracy.
inline HybridState random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> angle(-1.0, 1.0);
  std::uniform_real_distribution<double> speed(0.5, 3.0);
  std::bernoulli_distribution sign(0.5);
  auto v = [&] { return sign(rng) ? speed(rng) : -speed(rng); };
  HybridState s;
  s.theta = {angle(rng), angle(rng)};
  s.psi = {s.theta[0] + 0.2 * angle(rng), s.theta[1] + 0.2 * angle(rng)};
  s.q = {angle(rng), angle(rng)};
  s.dpsi = {v(), v()};
  s.dq = {v(), v()};
  return s;
}

}  // namespace ceropt::testing
