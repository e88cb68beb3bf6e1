#include "ceropt/transcription.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "ceropt/derivatives.h"
#include "ceropt/event_sim.h"

namespace ceropt {

namespace {

// Local variables of one defect element.
constexpr int kPrev = 0;    // x^{k-1}
constexpr int kNext = 10;   // x^k
constexpr int kU = 20;      // u^k
constexpr int kZeta = 22;   // zeta^k
constexpr int kLocal = 26;

constexpr int kRowsFree = 32;

template <typename S>
std::array<S, kStateDim> step_defect(const PlantParams& p, double inv_dt, const std::array<S, kLocal>& v) {
  std::array<S, kStateDim> r;
  for (int j = 0; j < 2; ++j) r[j] = (v[kNext + j] - v[kPrev + j]) * inv_dt - v[kU + j];
  for (int i = 0; i < 4; ++i) r[2 + i] = (v[kNext + 2 + i] - v[kPrev + 2 + i]) * inv_dt - v[kNext + 6 + i];
  const LinkMass<S> mass = link_mass_matrix(p, v[kNext + 5]);
  std::array<S, 4> dv;
  for (int i = 0; i < 4; ++i) dv[i] = (v[kNext + 6 + i] - v[kPrev + 6 + i]) * inv_dt;
  const auto inertial = mass_times(p, mass, dv);
  const auto load = generalized_load<S>(p, {v[kNext], v[kNext + 1]},
                                        {v[kNext + 2], v[kNext + 3], v[kNext + 4], v[kNext + 5]},
                                        {v[kNext + 6], v[kNext + 7], v[kNext + 8], v[kNext + 9]});
  const Eigen::Matrix4d& gamma = relative_speed_matrix();
  for (int c = 0; c < 4; ++c) {
    S t = inertial[c] + load[c];
    for (int i = 0; i < 4; ++i)
      if (gamma(i, c) != 0.0) t -= gamma(i, c) * v[kZeta + i];
    r[6 + c] = t;
  }
  return r;
}

// Structural dependence of defect row r on local variable j.
bool defect_depends(int r, int j) {
  const Eigen::Matrix4d& gamma = relative_speed_matrix();
  if (r < 2) return j == kPrev + r || j == kNext + r || j == kU + r;
  if (r < 6) return j == kPrev + r || j == kNext + r || j == kNext + r + 4;
  const int c = r - 6;
  if (j >= kZeta) return gamma(j - kZeta, c) != 0.0;
  if (c < 2) {
    return j == kNext + c || j == kNext + 2 + c || j == kNext + 6 + c || j == kPrev + 6 + c;
  }
  return j == kNext + 4 || j == kNext + 5 || j == kNext + 8 || j == kNext + 9 || j == kPrev + 8 || j == kPrev + 9;
}

// Variables entering the defect nonlinearly, as local indices.
constexpr std::array<int, 8> kCurved = {kNext + 4, kNext + 5, kNext + 8, kNext + 9,
                                        kPrev + 8, kPrev + 9, kNext + 6, kNext + 7};

template <typename S>
S speed_term(const PlantParams& p, const std::array<S, 4>& v) {
  const auto ve = ee_velocity<S>(p, v[0], v[1], v[2], v[3]);
  return -(ve[0] * ve[0] + ve[1] * ve[1]);
}

template <typename S>
S switch_pair(const S& a, const S& b, double alpha, double beta) {
  using std::tanh;
  const S sa = engagement_indicator_generic(a, alpha);
  const S sb = engagement_indicator_generic(b, alpha);
  return 0.5 * (1.0 + tanh(-beta * sa * sb));
}

double phi_of(const StateVector& x, int i) {
  return relative_speed_matrix().row(i).dot(x.segment<4>(kDxiIdx));
}

}  // namespace

void TranscriptionConfig::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("invalid transcription setting '") + field + "'");
  };
  require(steps >= 2, "steps");
  require(std::isfinite(horizon) && horizon > 0, "horizon");
  require(std::isfinite(w_speed) && w_speed > 0, "w_speed");
  require(std::isfinite(w_switch) && w_switch >= 0, "w_switch");
  require(std::isfinite(w_effort) && w_effort > 0, "w_effort");
  require(std::isfinite(w_slack) && w_slack >= 0, "w_slack");
  require(std::isfinite(alpha) && alpha > 0, "alpha");
  require(std::isfinite(beta) && beta > 0, "beta");
  require(std::isfinite(zeta_max) && zeta_max > 0, "zeta_max");
  require(std::isfinite(epsilon) && epsilon >= 0, "epsilon");
  require(x0.all_finite(), "x0");
}

Matrix4Cols Trajectory::phi() const {
  Matrix4Cols out(steps(), 4);
  for (int k = 1; k <= steps(); ++k)
    out.row(k - 1) = (relative_speed_matrix() * states[k].segment<4>(kDxiIdx)).transpose();
  return out;
}

ZeroOrderHold Trajectory::control_hold() const {
  ZeroOrderHold zoh;
  zoh.dt = dt;
  for (int k = 0; k < steps(); ++k) zoh.values.push_back(controls.row(k).transpose());
  return zoh;
}

Eigen::Matrix<double, kStateDim, 1> dynamics_defect(const PlantParams& params, const StateVector& x_prev,
                                                    const StateVector& x_next, const ControlVector& u,
                                                    const Eigen::Vector4d& zeta, double delta) {
  std::array<double, kLocal> v;
  for (int i = 0; i < kStateDim; ++i) {
    v[kPrev + i] = x_prev(i);
    v[kNext + i] = x_next(i);
  }
  v[kU] = u(0);
  v[kU + 1] = u(1);
  for (int i = 0; i < 4; ++i) v[kZeta + i] = zeta(i);
  const auto r = step_defect<double>(params, 1.0 / delta, v);
  return Eigen::Map<const Eigen::Matrix<double, kStateDim, 1>>(r.data()) * delta;
}

bool ComplementarityResiduals::feasible(double epsilon, double tol) const {
  return (pi.array() >= -tol).all() && (nu.array() >= -tol).all() && (gamma.array() >= -tol).all() &&
         (slack_pos.array() >= -tol).all() && (slack_neg.array() >= -tol).all() &&
         (product_pos.array() <= epsilon + tol).all() && (product_neg.array() <= epsilon + tol).all();
}

double ComplementarityResiduals::max_product() const {
  return std::max(product_pos.maxCoeff(), product_neg.maxCoeff());
}

ComplementarityResiduals complementarity_residuals(const Eigen::Vector4d& phi, const Eigen::Vector4d& pi,
                                                   const Eigen::Vector4d& nu, const Eigen::Vector4d& gamma) {
  ComplementarityResiduals r;
  r.slack_pos = gamma + phi;
  r.slack_neg = gamma - phi;
  r.product_pos = r.slack_pos.cwiseProduct(pi);
  r.product_neg = r.slack_neg.cwiseProduct(nu);
  r.pi = pi;
  r.nu = nu;
  r.gamma = gamma;
  return r;
}

double switch_penalty(const Matrix4Cols& zeta, double alpha, double beta) {
  double j2 = 0.0;
  for (int i = 0; i < 4; ++i)
    for (Eigen::Index k = 1; k < zeta.rows(); ++k) j2 += switch_pair(zeta(k - 1, i), zeta(k, i), alpha, beta);
  return j2;
}

ObjectiveBreakdown objective(const PlantParams& params, const TranscriptionConfig& config, const Trajectory& traj) {
  ObjectiveBreakdown o;
  const StateVector& xn = traj.states.back();
  o.speed = speed_term<double>(params, {xn(kQIdx), xn(kQIdx + 1), xn(kDqIdx), xn(kDqIdx + 1)});
  o.switching = switch_penalty(traj.zeta, config.alpha, config.beta);
  o.effort = traj.controls.squaredNorm();
  o.slack = traj.pi.sum() + traj.nu.sum() + traj.gamma.sum();
  o.total = config.w_speed * o.speed + config.w_switch * o.switching + config.w_effort * o.effort +
            config.w_slack * o.slack;
  return o;
}

// ---------------------------------------------------------------------------

TranscriptionProblem::TranscriptionProblem(const PlantParams& params, const TranscriptionConfig& config)
    : params_(params), config_(config) {
  build(nullptr);
}

TranscriptionProblem::TranscriptionProblem(const PlantParams& params, const TranscriptionConfig& config,
                                           const ModeSchedule& schedule)
    : params_(params), config_(config), fixed_(true) {
  schedule.validate();
  if (std::abs(schedule.horizon - config.horizon) > 1e-12)
    throw std::invalid_argument("schedule horizon does not match the transcription horizon");
  std::vector<ClutchPattern> patterns;
  for (int k = 1; k <= config.steps; ++k) patterns.push_back(schedule.pattern_at(k * config.delta()));
  build(&patterns);
}

void TranscriptionProblem::build(const std::vector<ClutchPattern>* patterns) {
  params_.validate();
  config_.validate();
  const HybridState& s0 = config_.x0;
  for (int j = 0; j < 2; ++j) {
    if (std::abs(s0.theta[j]) > params_.limits.joint_angle_max)
      throw std::invalid_argument("initial state violates the joint-angle bound");
    if (std::abs(s0.theta[j] - s0.psi[j]) > params_.deflection_bound(j))
      throw std::invalid_argument("initial state violates the spring-deflection bound");
  }
  const int n = config_.steps;
  layout_.assign(n, {});
  patterns_.assign(n, ClutchPattern{});
  row_offset_.assign(n, 0);
  int var = 0, row = 0;
  for (int k = 1; k <= n; ++k) {
    StepLayout& l = layout_[k - 1];
    for (int i = 0; i < kStateDim; ++i) l.x[i] = var++;
    for (int i = 0; i < kControlDim; ++i) l.u[i] = var++;
    l.zeta.fill(-1);
    l.pi.fill(-1);
    l.nu.fill(-1);
    l.gamma.fill(-1);
    row_offset_[k - 1] = row;
    if (patterns) {
      patterns_[k - 1] = (*patterns)[k - 1];
      for (int i = 0; i < 4; ++i)
        if (patterns_[k - 1].engaged[i]) l.zeta[i] = var++;
      row += kStateDim + patterns_[k - 1].num_engaged() + 2;
    } else {
      for (int i = 0; i < 4; ++i) l.zeta[i] = var++;
      for (int i = 0; i < 4; ++i) l.pi[i] = var++;
      for (int i = 0; i < 4; ++i) l.nu[i] = var++;
      for (int i = 0; i < 4; ++i) l.gamma[i] = var++;
      row += kRowsFree;
    }
  }
  num_vars_ = var;
  num_rows_ = row;
}

void TranscriptionProblem::set_epsilon(double epsilon) {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw std::invalid_argument("invalid relaxation epsilon");
  config_.epsilon = epsilon;
}

StateVector TranscriptionProblem::state(const Eigen::VectorXd& z, int k) const {
  if (k == 0) return config_.x0.to_vector();
  StateVector x;
  for (int i = 0; i < kStateDim; ++i) x(i) = z(layout_[k - 1].x[i]);
  return x;
}

Trajectory TranscriptionProblem::unpack(const Eigen::VectorXd& z) const {
  const int n = config_.steps;
  Trajectory t;
  t.dt = config_.delta();
  t.states.reserve(n + 1);
  for (int k = 0; k <= n; ++k) t.states.push_back(state(z, k));
  t.controls.setZero(n, 2);
  t.zeta.setZero(n, 4);
  t.pi.setZero(n, 4);
  t.nu.setZero(n, 4);
  t.gamma.setZero(n, 4);
  for (int k = 1; k <= n; ++k) {
    const StepLayout& l = layout_[k - 1];
    for (int j = 0; j < 2; ++j) t.controls(k - 1, j) = z(l.u[j]);
    for (int i = 0; i < 4; ++i) {
      if (l.zeta[i] >= 0) t.zeta(k - 1, i) = z(l.zeta[i]);
      if (l.pi[i] >= 0) t.pi(k - 1, i) = z(l.pi[i]);
      if (l.nu[i] >= 0) t.nu(k - 1, i) = z(l.nu[i]);
      if (l.gamma[i] >= 0) t.gamma(k - 1, i) = z(l.gamma[i]);
    }
  }
  return t;
}

Eigen::VectorXd TranscriptionProblem::pack(const Trajectory& t) const {
  const int n = config_.steps;
  if (t.steps() != n || static_cast<int>(t.states.size()) != n + 1)
    throw std::invalid_argument("trajectory does not match the transcription grid");
  Eigen::VectorXd z = Eigen::VectorXd::Zero(num_vars_);
  auto put = [&](int idx, double v) {
    if (idx >= 0) z(idx) = v;
  };
  for (int k = 1; k <= n; ++k) {
    const StepLayout& l = layout_[k - 1];
    for (int i = 0; i < kStateDim; ++i) put(l.x[i], t.states[k](i));
    for (int j = 0; j < 2; ++j) put(l.u[j], t.controls(k - 1, j));
    for (int i = 0; i < 4; ++i) {
      put(l.zeta[i], t.zeta.rows() ? t.zeta(k - 1, i) : 0.0);
      put(l.pi[i], t.pi.rows() ? t.pi(k - 1, i) : 0.0);
      put(l.nu[i], t.nu.rows() ? t.nu(k - 1, i) : 0.0);
      put(l.gamma[i], t.gamma.rows() ? t.gamma(k - 1, i) : 0.0);
    }
  }
  return z;
}

void TranscriptionProblem::bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& gl,
                                  Eigen::VectorXd& gu) const {
  xl = Eigen::VectorXd::Constant(num_vars_, -kInf);
  xu = Eigen::VectorXd::Constant(num_vars_, kInf);
  gl = Eigen::VectorXd::Zero(num_rows_);
  gu = Eigen::VectorXd::Zero(num_rows_);
  const PlantLimits& lim = params_.limits;
  const double zmax = config_.zeta_max;
  for (int k = 1; k <= config_.steps; ++k) {
    const StepLayout& l = layout_[k - 1];
    for (int j = 0; j < 2; ++j) {
      xl(l.x[kThetaIdx + j]) = -lim.joint_angle_max;
      xu(l.x[kThetaIdx + j]) = lim.joint_angle_max;
      xl(l.u[j]) = -lim.motor_speed_max;
      xu(l.u[j]) = lim.motor_speed_max;
    }
    for (int i = 0; i < 4; ++i) {
      if (l.zeta[i] >= 0) {
        xl(l.zeta[i]) = -zmax;
        xu(l.zeta[i]) = zmax;
      }
      for (int idx : {l.pi[i], l.nu[i]}) {
        if (idx < 0) continue;
        xl(idx) = 0.0;
        xu(idx) = zmax;
      }
      if (l.gamma[i] >= 0) xl(l.gamma[i]) = 0.0;
    }
    const int base = row_offset_[k - 1];
    int defl = base + kStateDim;
    if (!fixed_) {
      for (int i = 0; i < 4; ++i) {
        gu(base + 14 + i) = kInf;
        gu(base + 18 + i) = kInf;
        gl(base + 22 + i) = -kInf;
        gu(base + 22 + i) = config_.epsilon;
        gl(base + 26 + i) = -kInf;
        gu(base + 26 + i) = config_.epsilon;
      }
      defl = base + 30;
    } else {
      defl += patterns_[k - 1].num_engaged();
    }
    for (int j = 0; j < 2; ++j) {
      gl(defl + j) = -params_.deflection_bound(j);
      gu(defl + j) = params_.deflection_bound(j);
    }
  }
}

double TranscriptionProblem::objective(const Eigen::VectorXd& z) const {
  return objective_breakdown(z).total;
}

ObjectiveBreakdown TranscriptionProblem::objective_breakdown(const Eigen::VectorXd& z) const {
  Trajectory t = unpack(z);
  ObjectiveBreakdown o = ceropt::objective(params_, config_, t);
  if (fixed_) {
    o.total -= config_.w_switch * o.switching + config_.w_slack * o.slack;
    o.switching = 0.0;
    o.slack = 0.0;
  }
  return o;
}

void TranscriptionProblem::gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  grad = Eigen::VectorXd::Zero(num_vars_);
  const int n = config_.steps;
  const StepLayout& ln = layout_[n - 1];
  const std::array<int, 4> sv = {ln.x[kQIdx], ln.x[kQIdx + 1], ln.x[kDqIdx], ln.x[kDqIdx + 1]};
  std::array<double, 4> at;
  for (int i = 0; i < 4; ++i) at[i] = z(sv[i]);
  const auto js = jacobian<4>([&](const auto& v) { return std::array{speed_term(params_, v)}; }, at);
  for (int i = 0; i < 4; ++i) grad(sv[i]) += config_.w_speed * js.jacobian(0, i);
  for (int k = 1; k <= n; ++k)
    for (int j = 0; j < 2; ++j) grad(layout_[k - 1].u[j]) += 2.0 * config_.w_effort * z(layout_[k - 1].u[j]);
  if (fixed_) return;
  for (int k = 1; k <= n; ++k)
    for (int i = 0; i < 4; ++i)
      for (int idx : {layout_[k - 1].pi[i], layout_[k - 1].nu[i], layout_[k - 1].gamma[i]}) grad(idx) += config_.w_slack;
  if (config_.w_switch == 0.0) return;
  for (int i = 0; i < 4; ++i)
    for (int k = 2; k <= n; ++k) {
      const int a = layout_[k - 2].zeta[i], b = layout_[k - 1].zeta[i];
      const auto jp = jacobian<2>(
          [&](const auto& v) { return std::array{switch_pair(v[0], v[1], config_.alpha, config_.beta)}; },
          {z(a), z(b)});
      grad(a) += config_.w_switch * jp.jacobian(0, 0);
      grad(b) += config_.w_switch * jp.jacobian(0, 1);
    }
}

void TranscriptionProblem::constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g) const {
  g.resize(num_rows_);
  const double inv_dt = 1.0 / config_.delta();
  StateVector prev = config_.x0.to_vector();
  for (int k = 1; k <= config_.steps; ++k) {
    const StepLayout& l = layout_[k - 1];
    const StateVector x = state(z, k);
    std::array<double, kLocal> v;
    for (int i = 0; i < kStateDim; ++i) {
      v[kPrev + i] = prev(i);
      v[kNext + i] = x(i);
    }
    v[kU] = z(l.u[0]);
    v[kU + 1] = z(l.u[1]);
    for (int i = 0; i < 4; ++i) v[kZeta + i] = l.zeta[i] >= 0 ? z(l.zeta[i]) : 0.0;
    const auto r = step_defect<double>(params_, inv_dt, v);
    const int base = row_offset_[k - 1];
    for (int i = 0; i < kStateDim; ++i) g(base + i) = r[i];
    int defl;
    if (!fixed_) {
      for (int i = 0; i < 4; ++i) {
        const double phi = phi_of(x, i);
        const double pi = z(l.pi[i]), nu = z(l.nu[i]), gam = z(l.gamma[i]);
        g(base + 10 + i) = z(l.zeta[i]) - pi + nu;
        g(base + 14 + i) = gam + phi;
        g(base + 18 + i) = gam - phi;
        g(base + 22 + i) = (gam + phi) * pi;
        g(base + 26 + i) = (gam - phi) * nu;
      }
      defl = base + 30;
    } else {
      int e = 0;
      for (int i = 0; i < 4; ++i)
        if (patterns_[k - 1].engaged[i]) g(base + kStateDim + e++) = phi_of(x, i);
      defl = base + kStateDim + e;
    }
    for (int j = 0; j < 2; ++j) g(defl + j) = x(kThetaIdx + j) - x(kPsiIdx + j);
    prev = x;
  }
}

template <typename Emit>
void TranscriptionProblem::jacobian_entries(const Eigen::VectorXd& z, Emit&& emit) const {
  const double inv_dt = 1.0 / config_.delta();
  const Eigen::Matrix4d& gamma = relative_speed_matrix();
  StateVector prev = config_.x0.to_vector();
  for (int k = 1; k <= config_.steps; ++k) {
    const StepLayout& l = layout_[k - 1];
    const StateVector x = state(z, k);
    std::array<int, kLocal> idx;
    std::array<double, kLocal> v;
    for (int i = 0; i < kStateDim; ++i) {
      idx[kPrev + i] = k > 1 ? layout_[k - 2].x[i] : -1;
      idx[kNext + i] = l.x[i];
      v[kPrev + i] = prev(i);
      v[kNext + i] = x(i);
    }
    for (int j = 0; j < 2; ++j) {
      idx[kU + j] = l.u[j];
      v[kU + j] = z(l.u[j]);
    }
    for (int i = 0; i < 4; ++i) {
      idx[kZeta + i] = l.zeta[i];
      v[kZeta + i] = l.zeta[i] >= 0 ? z(l.zeta[i]) : 0.0;
    }
    const auto jac =
        jacobian<kLocal>([&](const auto& a) { return step_defect(params_, inv_dt, a); }, v).jacobian;
    const int base = row_offset_[k - 1];
    for (int r = 0; r < kStateDim; ++r)
      for (int j = 0; j < kLocal; ++j)
        if (idx[j] >= 0 && defect_depends(r, j)) emit(base + r, idx[j], jac(r, j));

    auto emit_phi = [&](int row, int i, double scale) {
      for (int c = 0; c < 4; ++c)
        if (gamma(i, c) != 0.0) emit(row, l.x[kDxiIdx + c], scale * gamma(i, c));
    };
    int defl;
    if (!fixed_) {
      for (int i = 0; i < 4; ++i) {
        const double phi = phi_of(x, i);
        const double pi = z(l.pi[i]), nu = z(l.nu[i]), gam = z(l.gamma[i]);
        emit(base + 10 + i, l.zeta[i], 1.0);
        emit(base + 10 + i, l.pi[i], -1.0);
        emit(base + 10 + i, l.nu[i], 1.0);
        emit(base + 14 + i, l.gamma[i], 1.0);
        emit_phi(base + 14 + i, i, 1.0);
        emit(base + 18 + i, l.gamma[i], 1.0);
        emit_phi(base + 18 + i, i, -1.0);
        emit(base + 22 + i, l.gamma[i], pi);
        emit(base + 22 + i, l.pi[i], gam + phi);
        emit_phi(base + 22 + i, i, pi);
        emit(base + 26 + i, l.gamma[i], nu);
        emit(base + 26 + i, l.nu[i], gam - phi);
        emit_phi(base + 26 + i, i, -nu);
      }
      defl = base + 30;
    } else {
      int e = 0;
      for (int i = 0; i < 4; ++i)
        if (patterns_[k - 1].engaged[i]) emit_phi(base + kStateDim + e++, i, 1.0);
      defl = base + kStateDim + e;
    }
    for (int j = 0; j < 2; ++j) {
      emit(defl + j, l.x[kThetaIdx + j], 1.0);
      emit(defl + j, l.x[kPsiIdx + j], -1.0);
    }
    prev = x;
  }
}

std::vector<std::pair<int, int>> TranscriptionProblem::jacobian_structure() const {
  std::vector<std::pair<int, int>> s;
  jacobian_entries(pack(unpack(Eigen::VectorXd::Zero(num_vars_))), [&](int r, int c, double) { s.emplace_back(r, c); });
  return s;
}

void TranscriptionProblem::jacobian_values(const Eigen::VectorXd& z, Eigen::VectorXd& values) const {
  std::vector<double> vals;
  vals.reserve(values.size());
  jacobian_entries(z, [&](int, int, double v) { vals.push_back(v); });
  values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

template <typename Emit>
void TranscriptionProblem::hessian_entries(const Eigen::VectorXd& z, double obj_factor,
                                           const Eigen::VectorXd& lambda, Emit&& emit) const {
  auto lower = [&](int a, int b, double v) { emit(std::max(a, b), std::min(a, b), v); };
  const double inv_dt = 1.0 / config_.delta();
  const Eigen::Matrix4d& gamma = relative_speed_matrix();
  const int n = config_.steps;
  StateVector prev = config_.x0.to_vector();
  for (int k = 1; k <= n; ++k) {
    const StepLayout& l = layout_[k - 1];
    const StateVector x = state(z, k);
    const int base = row_offset_[k - 1];
    std::array<double, kLocal> v;
    std::array<int, kLocal> idx;
    for (int i = 0; i < kStateDim; ++i) {
      v[kPrev + i] = prev(i);
      v[kNext + i] = x(i);
      idx[kPrev + i] = k > 1 ? layout_[k - 2].x[i] : -1;
      idx[kNext + i] = l.x[i];
    }
    v[kU] = z(l.u[0]);
    v[kU + 1] = z(l.u[1]);
    for (int i = 0; i < 4; ++i) v[kZeta + i] = l.zeta[i] >= 0 ? z(l.zeta[i]) : 0.0;
    std::array<double, 8> at;
    for (int a = 0; a < 8; ++a) at[a] = v[kCurved[a]];
    const std::array<double, 4> w = {lambda(base + 6), lambda(base + 7), lambda(base + 8), lambda(base + 9)};
    const auto so = second_order<8>(
        [&](const auto& c) {
          using S = std::remove_cvref_t<decltype(c[0])>;
          std::array<S, kLocal> full;
          for (int j = 0; j < kLocal; ++j) full[j] = S(v[j]);
          for (int a = 0; a < 8; ++a) full[kCurved[a]] = c[a];
          const auto r = step_defect(params_, inv_dt, full);
          return std::array<S, 4>{r[6], r[7], r[8], r[9]};
        },
        at, w);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b <= a; ++b) {
        const int ia = idx[kCurved[a]], ib = idx[kCurved[b]];
        if (ia >= 0 && ib >= 0) lower(ia, ib, so.weighted_hessian(a, b));
      }
    if (!fixed_) {
      for (int i = 0; i < 4; ++i) {
        const double lp = lambda(base + 22 + i), ln = lambda(base + 26 + i);
        lower(l.pi[i], l.gamma[i], lp);
        lower(l.nu[i], l.gamma[i], ln);
        for (int c = 0; c < 4; ++c) {
          if (gamma(i, c) == 0.0) continue;
          lower(l.pi[i], l.x[kDxiIdx + c], lp * gamma(i, c));
          lower(l.nu[i], l.x[kDxiIdx + c], -ln * gamma(i, c));
        }
      }
    }
    for (int j = 0; j < 2; ++j) lower(l.u[j], l.u[j], obj_factor * 2.0 * config_.w_effort);
    prev = x;
  }
  // Terminal speed.
  const StepLayout& ln = layout_[n - 1];
  const std::array<int, 4> sv = {ln.x[kQIdx], ln.x[kQIdx + 1], ln.x[kDqIdx], ln.x[kDqIdx + 1]};
  std::array<double, 4> at;
  for (int i = 0; i < 4; ++i) at[i] = z(sv[i]);
  const auto hs = hessian<4>([&](const auto& a) { return std::array{speed_term(params_, a)}; }, at);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b <= a; ++b) lower(sv[a], sv[b], obj_factor * config_.w_speed * hs(a, b));
  if (fixed_) return;
  for (int i = 0; i < 4; ++i)
    for (int k = 2; k <= n; ++k) {
      const int a = layout_[k - 2].zeta[i], b = layout_[k - 1].zeta[i];
      const auto hp = hessian<2>(
          [&](const auto& c) { return std::array{switch_pair(c[0], c[1], config_.alpha, config_.beta)}; },
          {z(a), z(b)});
      const double s = obj_factor * config_.w_switch;
      lower(a, a, s * hp(0, 0));
      lower(b, a, s * hp(1, 0));
      lower(b, b, s * hp(1, 1));
    }
}

std::vector<std::pair<int, int>> TranscriptionProblem::hessian_structure() const {
  std::vector<std::pair<int, int>> s;
  hessian_entries(Eigen::VectorXd::Zero(num_vars_), 1.0, Eigen::VectorXd::Zero(num_rows_),
                  [&](int r, int c, double) { s.emplace_back(r, c); });
  return s;
}

void TranscriptionProblem::hessian_values(const Eigen::VectorXd& z, double obj_factor,
                                          const Eigen::VectorXd& lambda, Eigen::VectorXd& values) const {
  std::vector<double> vals;
  vals.reserve(values.size());
  hessian_entries(z, obj_factor, lambda, [&](int, int, double v) { vals.push_back(v); });
  values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Eigen::VectorXd TranscriptionProblem::tighten_complementarity(const Eigen::VectorXd& z, double epsilon,
                                                             double fraction) const {
  Eigen::VectorXd out = z;
  if (fixed_) return out;
  const double target = fraction * epsilon;
  for (int k = 1; k <= config_.steps; ++k) {
    const StepLayout& l = layout_[k - 1];
    const StateVector x = state(z, k);
    for (int i = 0; i < 4; ++i) {
      double pi = out(l.pi[i]), nu = out(l.nu[i]);
      const double common = std::min(pi, nu);
      pi -= common;
      nu -= common;
      const double phi = phi_of(x, i);
      double gamma = out(l.gamma[i]);
      if (pi > 0.0) gamma = std::min(gamma, target / pi - phi);
      if (nu > 0.0) gamma = std::min(gamma, target / nu + phi);
      out(l.pi[i]) = pi;
      out(l.nu[i]) = nu;
      out(l.gamma[i]) = std::max(gamma, std::abs(phi));
    }
  }
  return out;
}

double TranscriptionProblem::max_dynamics_defect(const Eigen::VectorXd& z) const {
  const Trajectory t = unpack(z);
  double worst = 0.0;
  for (int k = 1; k <= config_.steps; ++k) {
    const auto r = dynamics_defect(params_, t.states[k - 1], t.states[k], t.controls.row(k - 1).transpose(),
                                   t.zeta.row(k - 1).transpose(), t.dt);
    worst = std::max(worst, r.lpNorm<Eigen::Infinity>());
  }
  return worst;
}

double TranscriptionProblem::max_complementarity_product(const Eigen::VectorXd& z) const {
  if (fixed_) return 0.0;
  const Trajectory t = unpack(z);
  const Matrix4Cols phi = t.phi();
  double worst = 0.0;
  for (int k = 0; k < config_.steps; ++k) {
    const auto r = complementarity_residuals(phi.row(k).transpose(), t.pi.row(k).transpose(),
                                             t.nu.row(k).transpose(), t.gamma.row(k).transpose());
    worst = std::max(worst, r.max_product());
  }
  return worst;
}

// ---------------------------------------------------------------------------

Trajectory seed_trajectory(const PlantParams& params, const TranscriptionConfig& config,
                           const ModeSchedule& schedule, unsigned seed, double amplitude) {
  config.validate();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0), phase(0.0, 2.0 * std::numbers::pi);
  constexpr int kHarmonics = 3;
  std::array<std::array<double, kHarmonics>, 2> c, ph;
  for (int j = 0; j < 2; ++j) {
    double norm = 0.0;
    for (int h = 0; h < kHarmonics; ++h) {
      c[j][h] = coef(rng);
      ph[j][h] = phase(rng);
      norm += std::abs(c[j][h]);
    }
    for (int h = 0; h < kHarmonics; ++h) c[j][h] *= amplitude / norm;
  }
  const double T = config.horizon;
  auto omega = [&](int h) { return (h + 1) * std::numbers::pi / T; };
  auto speed = [&](int j, double t) {
    double u = 0.0;
    for (int h = 0; h < kHarmonics; ++h) u += c[j][h] * std::sin(omega(h) * t + ph[j][h]);
    return u;
  };
  auto angle = [&](int j, double t) {
    double th = config.x0.theta[j];
    for (int h = 0; h < kHarmonics; ++h)
      th += c[j][h] / omega(h) * (std::cos(ph[j][h]) - std::cos(omega(h) * t + ph[j][h]));
    return th;
  };
  const ControlLaw law = [&](double t, const StateVector&) { return ControlVector(speed(0, t), speed(1, t)); };
  const Rollout ro = rollout(params, config.x0, law, schedule, T);

  const int n = config.steps;
  Trajectory tr;
  tr.dt = config.delta();
  tr.states.push_back(config.x0.to_vector());
  tr.controls.resize(n, 2);
  tr.zeta.setZero(n, 4);
  tr.pi.setZero(n, 4);
  tr.nu.setZero(n, 4);
  tr.gamma.setZero(n, 4);
  for (int k = 1; k <= n; ++k) {
    const double t = k * tr.dt;
    StateVector x = ro.state_at(t);
    for (int j = 0; j < 2; ++j) {
      x(kThetaIdx + j) = angle(j, t);
      tr.controls(k - 1, j) = (angle(j, t) - angle(j, t - tr.dt)) / tr.dt;
    }
    tr.states.push_back(x);
    const ClutchPattern& pattern = schedule.pattern_at(t);
    const auto c_p = constraint_jacobian(pattern);
    const Eigen::VectorXd lambda = constraint_torque(eval_model(params, HybridState::from_vector(x)), c_p);
    int r = 0;
    for (int i = 0; i < 4; ++i) {
      const double zeta = pattern.engaged[i] ? std::clamp(lambda(r++), -config.zeta_max, config.zeta_max) : 0.0;
      tr.zeta(k - 1, i) = zeta;
      tr.pi(k - 1, i) = std::max(zeta, 0.0);
      tr.nu(k - 1, i) = std::max(-zeta, 0.0);
      tr.gamma(k - 1, i) = std::abs(phi_of(x, i)) + 0.1;
    }
  }
  return tr;
}

Trajectory backward_euler_replay(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& controls,
                                 const ModeSchedule& schedule, int steps) {
  if (steps < 1) throw std::invalid_argument("replay needs at least one step");
  const double T = schedule.horizon;
  const double dt = T / steps;
  Trajectory tr;
  tr.dt = dt;
  tr.states.push_back(x0.to_vector());
  tr.controls.resize(steps, 2);
  tr.zeta.setZero(steps, 4);
  tr.pi.setZero(steps, 4);
  tr.nu.setZero(steps, 4);
  tr.gamma.setZero(steps, 4);
  constexpr int kUnknowns = 8;  // xi'^k (4) + up to 4 clutch torques
  for (int k = 1; k <= steps; ++k) {
    const double t = k * dt;
    // Average of the held control over the step.
    ControlVector u = ControlVector::Zero();
    constexpr int kSub = 16;
    for (int s = 0; s < kSub; ++s) u += controls.at(t - dt + (s + 0.5) * dt / kSub);
    u /= kSub;
    const ClutchPattern& pattern = schedule.pattern_at(t);
    std::array<int, 4> rows{};
    int m = 0;
    for (int i = 0; i < 4; ++i)
      if (pattern.engaged[i]) rows[m++] = i;
    const StateVector prev = tr.states.back();
    StateVector next = prev;
    next.segment<2>(kThetaIdx) += dt * u;

    // Residual in (xi'^k, zeta_engaged); xi^k follows from xi'^k.
    auto residual = [&](const auto& y) {
      using S = std::remove_cvref_t<decltype(y[0])>;
      std::array<S, kLocal> v;
      for (int i = 0; i < kStateDim; ++i) {
        v[kPrev + i] = S(prev(i));
        v[kNext + i] = S(next(i));
      }
      for (int i = 0; i < 4; ++i) {
        v[kNext + 6 + i] = y[i];
        v[kNext + 2 + i] = S(prev(2 + i)) + dt * y[i];
        v[kZeta + i] = S(0.0);
      }
      v[kU] = S(u(0));
      v[kU + 1] = S(u(1));
      for (int r = 0; r < m; ++r) v[kZeta + rows[r]] = y[4 + r];
      const auto d = step_defect(params, 1.0 / dt, v);
      std::array<S, kUnknowns> out;
      for (int i = 0; i < 4; ++i) out[i] = d[6 + i];
      const Eigen::Matrix4d& gamma = relative_speed_matrix();
      for (int r = 0; r < 4; ++r) {
        if (r < m) {
          S phi = S(0.0);
          for (int c = 0; c < 4; ++c) phi += gamma(rows[r], c) * y[c];
          out[4 + r] = phi;
        } else {
          out[4 + r] = y[4 + r];
        }
      }
      return out;
    };
    std::array<double, kUnknowns> y{};
    for (int i = 0; i < 4; ++i) y[i] = prev(kDxiIdx + i);
    bool converged = false;
    for (int it = 0; it < 50 && !converged; ++it) {
      const auto jr = jacobian<kUnknowns>(residual, y);
      const double r0 = jr.value.norm();
      if (r0 < 1e-12) {
        converged = true;
        break;
      }
      const Eigen::Matrix<double, kUnknowns, 1> step = jr.jacobian.fullPivLu().solve(-jr.value);
      double a = 1.0;
      for (int ls = 0; ls < 30; ++ls, a *= 0.5) {
        std::array<double, kUnknowns> trial = y;
        for (int i = 0; i < kUnknowns; ++i) trial[i] += a * step(i);
        const auto rv = residual(trial);
        double rn = 0.0;
        for (double e : rv) rn += e * e;
        if (std::sqrt(rn) < (1.0 - 1e-4 * a) * r0) {
          y = trial;
          break;
        }
      }
      converged = jacobian<kUnknowns>(residual, y).value.norm() < 1e-10;
    }
    if (!converged) throw IntegrationError("backward-Euler replay did not converge", (k - 1) * dt);
    for (int i = 0; i < 4; ++i) {
      next(kDxiIdx + i) = y[i];
      next(kXiIdx + i) = prev(kXiIdx + i) + dt * y[i];
    }
    tr.controls.row(k - 1) = u.transpose();
    for (int r = 0; r < m; ++r) tr.zeta(k - 1, rows[r]) = y[4 + r];
    tr.states.push_back(next);
  }
  return tr;
}

}  // namespace ceropt
