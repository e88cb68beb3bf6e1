#include "ceropt/event_sim.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>

namespace ceropt {

namespace odeint = boost::numeric::odeint;

namespace {

// Pi^-1 C^T and the Gram matrix C Pi^-1 C^T via dense factorizations.
struct DenseGeometry {
  Eigen::MatrixXd pinv_ct;
  Eigen::LLT<Eigen::MatrixXd> gram;
};

DenseGeometry dense_geometry(const GeneralizedModelEval& eval, const Eigen::MatrixXd& c_p) {
  if (c_p.cols() != 4) throw std::invalid_argument("constraint Jacobian must have 4 columns");
  Eigen::LLT<Eigen::Matrix4d> pi(eval.Pi);
  if (pi.info() != Eigen::Success) throw SingularConstraintError("generalized mass matrix is not positive definite");
  DenseGeometry g;
  g.pinv_ct = pi.solve(c_p.transpose());
  const Eigen::MatrixXd gram = c_p * g.pinv_ct;
  g.gram.compute(gram);
  if (g.gram.info() != Eigen::Success)
    throw SingularConstraintError("C Pi^-1 C^T is singular; constraint rows are dependent");
  // LLT succeeds on some numerically singular matrices; check conditioning.
  const Eigen::VectorXd diag = g.gram.matrixL().toDenseMatrix().diagonal();
  if (diag.size() > 0 && diag.minCoeff() <= 1e-10 * diag.maxCoeff())
    throw SingularConstraintError("C Pi^-1 C^T is numerically singular");
  return g;
}

std::array<double, kStateDim> to_array(const StateVector& x) {
  std::array<double, kStateDim> a;
  for (int i = 0; i < kStateDim; ++i) a[i] = x(i);
  return a;
}

}  // namespace

Eigen::VectorXd constraint_torque(const GeneralizedModelEval& eval, const Eigen::MatrixXd& c_p) {
  if (c_p.rows() == 0) return Eigen::VectorXd(0);
  const DenseGeometry g = dense_geometry(eval, c_p);
  const Eigen::Vector4d load = eval.eta + eval.tau + eval.tau_f;
  return g.gram.solve(g.pinv_ct.transpose() * load);
}

ImpactResult impact(const GeneralizedModelEval& eval, const Eigen::MatrixXd& c_p_new,
                    const Eigen::Vector4d& dxi_minus) {
  ImpactResult r;
  if (c_p_new.rows() == 0) {
    r.dxi_plus = dxi_minus;
    r.impulse = Eigen::VectorXd(0);
    return r;
  }
  const DenseGeometry g = dense_geometry(eval, c_p_new);
  r.impulse = -g.gram.solve(c_p_new * dxi_minus);
  r.dxi_plus = dxi_minus + g.pinv_ct * r.impulse;
  return r;
}

HybridState reset_map(const PlantParams& params, const HybridState& state, const ClutchPattern& pattern_new) {
  const GeneralizedModelEval eval = eval_model(params, state);
  const ImpactResult r = impact(eval, constraint_jacobian(pattern_new), state.dxi());
  HybridState out = state;
  out.dpsi = {r.dxi_plus(0), r.dxi_plus(1)};
  out.dq = {r.dxi_plus(2), r.dxi_plus(3)};
  return out;
}

StateVector vector_field(const PlantParams& params, const StateVector& x, const ControlVector& u,
                         const ClutchPattern& pattern) {
  const auto f = hybrid_vector_field<double>(params, to_array(x), {u(0), u(1)}, pattern);
  return Eigen::Map<const StateVector>(f.data());
}

// ---------------------------------------------------------------------------

ControlVector ZeroOrderHold::at(double t) const {
  if (values.empty()) throw std::invalid_argument("zero-order hold has no samples");
  // Intervals are left-open: t in (k dt, (k+1) dt] uses values[k].
  long k = static_cast<long>(std::ceil(t / dt - 1e-9)) - 1;
  k = std::clamp<long>(k, 0, static_cast<long>(values.size()) - 1);
  return values[k];
}

ControlLaw ZeroOrderHold::as_law() const {
  return [hold = *this](double t, const StateVector&) { return hold.at(t); };
}

std::vector<double> ZeroOrderHold::breakpoints() const {
  std::vector<double> b;
  for (std::size_t k = 1; k < values.size(); ++k) b.push_back(dt * static_cast<double>(k));
  return b;
}

StateVector Rollout::state_at(double t) const {
  if (times.empty()) throw std::logic_error("state_at on empty rollout");
  return state_in(t, schedule.interval_at(t));
}

StateVector Rollout::state_in(double t, int k) const {
  if (times.empty()) throw std::logic_error("state_in on empty rollout");
  // Collect the knots of interval k: samples tagged k, then the pre-reset
  // endpoint when the interval ends in a switch.
  auto first = std::lower_bound(intervals.begin(), intervals.end(), k);
  auto last = std::upper_bound(intervals.begin(), intervals.end(), k);
  const std::size_t lo = static_cast<std::size_t>(first - intervals.begin());
  const std::size_t hi = static_cast<std::size_t>(last - intervals.begin());
  if (lo == hi) throw std::logic_error("rollout has no samples in the requested interval");

  double t1 = times[lo], t2 = times[lo];
  StateVector x1 = states[lo], x2 = states[lo], f1 = derivatives[lo], f2 = derivatives[lo];
  if (t <= times[lo]) return states[lo];
  auto it = std::upper_bound(times.begin() + lo, times.begin() + hi, t);
  const std::size_t j = static_cast<std::size_t>(it - times.begin());
  if (j < hi) {
    t1 = times[j - 1];
    x1 = states[j - 1];
    f1 = derivatives[j - 1];
    t2 = times[j];
    x2 = states[j];
    f2 = derivatives[j];
  } else {
    const ImpulseRecord* end = nullptr;
    for (const auto& rec : impulses)
      if (rec.interval == k + 1) end = &rec;
    if (end == nullptr) return states[hi - 1];
    t1 = times[hi - 1];
    x1 = states[hi - 1];
    f1 = derivatives[hi - 1];
    if (end->time - t1 <= 0.0) return end->state_minus;
    t2 = end->time;
    x2 = end->state_minus;
    f2 = end->derivative_minus;
  }
  const double h = t2 - t1;
  const double s = std::clamp((t - t1) / h, 0.0, 1.0);
  const double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
  const double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
  return h00 * x1 + h10 * h * f1 + h01 * x2 + h11 * h * f2;
}

namespace {

using Stepper = odeint::runge_kutta_dopri5<StateVector, double, StateVector, double, odeint::vector_space_algebra>;
using FixedStepper = odeint::runge_kutta4<StateVector, double, StateVector, double, odeint::vector_space_algebra>;

struct SegmentSystem {
  const PlantParams& params;
  const ControlLaw& control;
  const ClutchPattern& pattern;
  void operator()(const StateVector& x, StateVector& dxdt, double t) const {
    dxdt = vector_field(params, x, control(t, x), pattern);
  }
};

void record_sample(Rollout& out, const PlantParams& params, const ControlLaw& control,
                   const ClutchPattern& pattern, int interval, double t, const StateVector& x) {
  const ControlVector u = control(t, x);
  out.times.push_back(t);
  out.states.push_back(x);
  out.derivatives.push_back(vector_field(params, x, u, pattern));
  const HybridState hs = HybridState::from_vector(x);
  out.lambdas.push_back(constraint_torque(eval_model(params, hs), constraint_jacobian(pattern)));
  out.intervals.push_back(interval);
}

// Integrates one smooth piece [t0, t1], appending accepted steps (excluding t0).
void integrate_piece(Rollout& out, const PlantParams& params, const ControlLaw& control,
                     const ClutchPattern& pattern, int interval, double t0, double t1, StateVector& x,
                     double& dt_guess, const RolloutOptions& opt, long& steps, bool record_end) {
  SegmentSystem sys{params, control, pattern};
  double t = t0;
  const double span = t1 - t0;
  if (span <= 0.0) return;
  if (opt.fixed_step > 0.0) {
    FixedStepper rk4;
    const long n = std::max(1L, static_cast<long>(std::ceil(span / opt.fixed_step - 1e-9)));
    const double h = span / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
      rk4.do_step(sys, x, t, h);
      t = (i + 1 == n) ? t1 : t0 + h * static_cast<double>(i + 1);
      if (!x.allFinite()) throw IntegrationError("non-finite state during fixed-step integration", t - h);
      if (i + 1 < n || record_end) record_sample(out, params, control, pattern, interval, t, x);
    }
    steps += n;
    return;
  }
  auto controlled = odeint::make_controlled(opt.abs_tol, opt.rel_tol, Stepper());
  double dt = std::min(dt_guess, span);
  while (t < t1) {
    const bool last = t + dt >= t1 - 1e-15 * std::max(1.0, std::abs(t1));
    double h = last ? t1 - t : dt;
    const double t_before = t;
    const odeint::controlled_step_result res = controlled.try_step(sys, x, t, h);
    if (res == odeint::success) {
      ++steps;
      if (steps > opt.max_steps) throw IntegrationError("maximum number of integration steps exceeded", t);
      if (last) t = t1;
      if (!x.allFinite()) throw IntegrationError("non-finite state during integration", t_before);
      if (t < t1 || record_end) record_sample(out, params, control, pattern, interval, t, x);
      dt = h;
      dt_guess = h;
    } else {
      if (h < opt.min_step) throw IntegrationError("integration step underflow", t);
      dt = h;
    }
  }
}

}  // namespace

Rollout rollout(const PlantParams& params, const HybridState& x0, const ControlLaw& control,
                const ModeSchedule& schedule, double horizon, const RolloutOptions& options,
                const std::vector<double>& breakpoints) {
  params.validate();
  schedule.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("rollout: horizon must be positive");
  if (std::abs(schedule.horizon - horizon) > 1e-9 * std::max(1.0, horizon))
    throw std::invalid_argument("rollout: schedule horizon does not match the rollout horizon");
  if (!x0.all_finite()) throw std::invalid_argument("rollout: initial state is not finite");

  Rollout out;
  out.schedule = schedule;
  StateVector x = x0.to_vector();

  // Make the initial state consistent with the first pattern.
  {
    const HybridState hs = HybridState::from_vector(x);
    const Eigen::MatrixXd c = constraint_jacobian(schedule.patterns[0]);
    if (c.rows() > 0 && (c * hs.dxi()).cwiseAbs().maxCoeff() > 0.0) {
      const ImpactResult r = impact(eval_model(params, hs), c, hs.dxi());
      ImpulseRecord rec;
      rec.time = 0.0;
      rec.interval = 0;
      rec.state_minus = x;
      rec.derivative_minus = vector_field(params, x, control(0.0, x), schedule.patterns[0]);
      x.segment<4>(kDxiIdx) = r.dxi_plus;
      rec.state_plus = x;
      rec.impulse = r.impulse;
      out.impulses.push_back(rec);
    }
  }

  double dt_guess = options.initial_step;
  long steps = 0;
  const int num_intervals = static_cast<int>(schedule.patterns.size());
  for (int k = 0; k < num_intervals; ++k) {
    const double ta = k == 0 ? 0.0 : schedule.switch_times[k - 1];
    const double tb = k + 1 < num_intervals ? schedule.switch_times[k] : horizon;
    const ClutchPattern& pattern = schedule.patterns[k];
    record_sample(out, params, control, pattern, k, ta, x);

    std::vector<double> cuts{ta};
    for (double b : breakpoints)
      if (b > ta + 1e-12 && b < tb - 1e-12) cuts.push_back(b);
    cuts.push_back(tb);
    std::sort(cuts.begin() + 1, cuts.end() - 1);
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const bool is_last_piece = c + 2 == cuts.size();
      const bool record_end = !is_last_piece || k + 1 == num_intervals;
      integrate_piece(out, params, control, pattern, k, cuts[c], cuts[c + 1], x, dt_guess, options, steps,
                      record_end);
    }

    if (k + 1 < num_intervals) {
      ImpulseRecord rec;
      rec.time = tb;
      rec.interval = k + 1;
      rec.state_minus = x;
      rec.derivative_minus = vector_field(params, x, control(tb, x), pattern);
      const HybridState hs = HybridState::from_vector(x);
      const ImpactResult r = impact(eval_model(params, hs), constraint_jacobian(schedule.patterns[k + 1]), hs.dxi());
      x.segment<4>(kDxiIdx) = r.dxi_plus;
      rec.state_plus = x;
      rec.impulse = r.impulse;
      out.impulses.push_back(rec);
    }
  }
  return out;
}

Rollout rollout(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& control,
                const ModeSchedule& schedule, const RolloutOptions& options) {
  return rollout(params, x0, control.as_law(), schedule, control.horizon(), options, control.breakpoints());
}

}  // namespace ceropt
