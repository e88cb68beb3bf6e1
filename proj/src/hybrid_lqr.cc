#include "ceropt/hybrid_lqr.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <boost/numeric/odeint.hpp>

#include "ceropt/derivatives.h"

namespace ceropt {

namespace odeint = boost::numeric::odeint;

StateMatrix jump_sensitivity(const PlantParams& params, const StateVector& x_minus, const ClutchPattern& pattern_new) {
  std::array<double, kStateDim> at;
  for (int i = 0; i < kStateDim; ++i) at[i] = x_minus(i);
  const auto jr = jacobian<kStateDim>([&](const auto& x) { return reset_map_generic(params, x, pattern_new); }, at);
  return jr.jacobian - StateMatrix::Identity();
}

PlantLinearization linearize(const PlantParams& params, const StateVector& x, const ControlVector& u,
                             const ClutchPattern& pattern) {
  constexpr int N = kStateDim + kControlDim;
  std::array<double, N> at;
  for (int i = 0; i < kStateDim; ++i) at[i] = x(i);
  for (int i = 0; i < kControlDim; ++i) at[kStateDim + i] = u(i);
  const auto jr = jacobian<N>(
      [&](const auto& v) {
        using S = std::remove_cvref_t<decltype(v[0])>;
        std::array<S, kStateDim> xs;
        std::array<S, kControlDim> us;
        for (int i = 0; i < kStateDim; ++i) xs[i] = v[i];
        for (int i = 0; i < kControlDim; ++i) us[i] = v[kStateDim + i];
        return hybrid_vector_field(params, xs, us, pattern);
      },
      at);
  PlantLinearization lin;
  lin.A = jr.jacobian.leftCols<kStateDim>();
  lin.B = jr.jacobian.rightCols<kControlDim>();
  return lin;
}

// ---------------------------------------------------------------------------

int GainSchedule::interval_at(double t) const {
  if (intervals.empty()) throw std::logic_error("empty gain schedule");
  for (std::size_t k = 0; k + 1 < intervals.size(); ++k)
    if (t <= intervals[k].t1) return static_cast<int>(k);
  return static_cast<int>(intervals.size()) - 1;
}

namespace {

Eigen::MatrixXd interpolate(const std::vector<double>& times, const std::vector<Eigen::MatrixXd>& values, double t) {
  if (t <= times.front()) return values.front();
  if (t >= times.back()) return values.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - times.begin());
  const double s = (t - times[j - 1]) / (times[j] - times[j - 1]);
  return (1.0 - s) * values[j - 1] + s * values[j];
}

}  // namespace

Eigen::MatrixXd GainSchedule::riccati_at(double t) const {
  const GainInterval& g = intervals[interval_at(t)];
  return interpolate(g.times, g.P, t);
}

Eigen::MatrixXd GainSchedule::gain_at(double t) const {
  const GainInterval& g = intervals[interval_at(t)];
  return interpolate(g.times, g.K, t);
}

GainSchedule riccati_sweep(const LinearHybridSystem& system, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           const Eigen::MatrixXd& P_T, const RiccatiOptions& options) {
  const int n = static_cast<int>(Q.rows());
  if (Q.cols() != n || P_T.rows() != n || P_T.cols() != n || R.rows() != R.cols())
    throw std::invalid_argument("riccati_sweep: inconsistent weight dimensions");
  if (!(system.horizon > 0.0)) throw std::invalid_argument("riccati_sweep: horizon must be positive");
  if (system.jump_sensitivities.size() != system.switch_times.size())
    throw std::invalid_argument("riccati_sweep: one jump sensitivity per switch is required");
  for (std::size_t i = 0; i < system.switch_times.size(); ++i) {
    const double ts = system.switch_times[i];
    if (!(ts > 0.0 && ts < system.horizon) || (i > 0 && !(ts > system.switch_times[i - 1])))
      throw std::invalid_argument("riccati_sweep: switch times must be increasing inside the horizon");
  }
  auto spd = [](const Eigen::MatrixXd& m) {
    if (!m.isApprox(m.transpose(), 1e-12)) return false;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    return llt.info() == Eigen::Success;
  };
  if (!spd(Q) || !spd(R) || !spd(P_T))
    throw std::invalid_argument("riccati_sweep: Q, R and P_T must be symmetric positive definite");
  const Eigen::LLT<Eigen::MatrixXd> r_llt(R);

  const int num_intervals = static_cast<int>(system.switch_times.size()) + 1;
  GainSchedule out;
  out.R = R;
  out.intervals.resize(num_intervals);
  out.jumps.resize(system.switch_times.size());

  using State = std::vector<double>;
  using Stepper = odeint::runge_kutta_dopri5<State>;
  auto to_matrix = [n](const State& v) { return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n).eval(); };

  Eigen::MatrixXd P = P_T;
  for (int k = num_intervals - 1; k >= 0; --k) {
    const double t0 = k == 0 ? 0.0 : system.switch_times[k - 1];
    const double t1 = k + 1 == num_intervals ? system.horizon : system.switch_times[k];
    GainInterval& gi = out.intervals[k];
    gi.t0 = t0;
    gi.t1 = t1;

    Eigen::MatrixXd A, B;
    auto gain = [&](double t, const Eigen::MatrixXd& p) {
      system.linearization(t, k, A, B);
      return r_llt.solve(B.transpose() * p).eval();
    };
    // Reverse time s = t1 - t.
    auto rhs = [&](const State& v, State& dv, double s) {
      const double t = t1 - s;
      system.linearization(t, k, A, B);
      const Eigen::MatrixXd p = to_matrix(v);
      const Eigen::MatrixXd pb = p * B;
      const Eigen::MatrixXd d = A.transpose() * p + p * A - pb * r_llt.solve(pb.transpose()) + Q;
      dv.assign(d.data(), d.data() + d.size());
    };

    std::vector<double> times_rev{t1};
    std::vector<Eigen::MatrixXd> p_rev{P};
    State v(P.data(), P.data() + P.size());
    auto controlled = odeint::make_controlled(options.abs_tol, options.rel_tol, Stepper());
    const double span = t1 - t0;
    double s = 0.0;
    double h = std::min(options.initial_step, span);
    while (s < span) {
      if (s + h > span) h = span - s;
      const double s_before = s;
      if (controlled.try_step(rhs, v, s, h) != odeint::success) {
        if (h < 1e-14 * std::max(1.0, span)) {
          std::ostringstream msg;
          msg << "Riccati step size underflow in interval " << k;
          throw RiccatiError(msg.str(), k);
        }
        continue;
      }
      if (s <= s_before) continue;
      Eigen::MatrixXd pk = to_matrix(v);
      pk = 0.5 * (pk + pk.transpose()).eval();
      v.assign(pk.data(), pk.data() + pk.size());
      if (!pk.allFinite() || pk.norm() > options.max_norm) {
        std::ostringstream msg;
        msg << "Riccati solution exceeds the norm cap in interval " << k << " at t = " << t1 - s;
        throw RiccatiError(msg.str(), k);
      }
      times_rev.push_back(std::abs(span - s) < 1e-15 * std::max(1.0, span) ? t0 : t1 - s);
      p_rev.push_back(pk);
    }
    times_rev.back() = t0;
    for (std::size_t i = times_rev.size(); i-- > 0;) {
      gi.times.push_back(times_rev[i]);
      gi.P.push_back(p_rev[i]);
      gi.K.push_back(gain(times_rev[i], p_rev[i]));
    }
    // Guard against coincident knots from a final tiny step.
    for (std::size_t i = 1; i < gi.times.size(); ++i)
      if (!(gi.times[i] > gi.times[i - 1])) gi.times[i] = std::nextafter(gi.times[i - 1], t1);

    P = gi.P.front();
    if (k > 0) {
      JumpRecord& jr = out.jumps[k - 1];
      jr.time = t0;
      jr.H = system.jump_sensitivities[k - 1];
      const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + jr.H;
      jr.P_plus = P;
      jr.P_minus = M.transpose() * P * M;
      jr.P_minus = 0.5 * (jr.P_minus + jr.P_minus.transpose()).eval();
      P = jr.P_minus;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Reference make_reference(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& controls,
                         const ModeSchedule& schedule, const RolloutOptions& options) {
  Reference ref;
  ref.controls = controls;
  ref.rollout = rollout(params, x0, controls, schedule, options);
  return ref;
}

GainSchedule riccati_sweep(const PlantParams& params, const Reference& reference, const LqrWeights& weights,
                           const RiccatiOptions& options) {
  const ModeSchedule& sched = reference.schedule();
  LinearHybridSystem sys;
  sys.horizon = sched.horizon;
  sys.switch_times = sched.switch_times;
  sys.linearization = [&](double t, int k, Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
    const StateVector x = reference.rollout.state_in(t, k);
    const PlantLinearization lin = linearize(params, x, reference.control(t), sched.patterns[k]);
    A = lin.A;
    B = lin.B;
  };
  for (std::size_t i = 0; i < sched.switch_times.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    const StateVector x_minus = reference.rollout.state_in(sched.switch_times[i], k - 1);
    sys.jump_sensitivities.push_back(jump_sensitivity(params, x_minus, sched.patterns[k]));
  }
  return riccati_sweep(sys, weights.Q, weights.R, weights.P_T, options);
}

ControlVector FeedbackLaw::correction(double t, const StateVector& x) const {
  StateVector e = x - reference->state(t);
  if (xi_only) {
    e.segment<2>(kThetaIdx).setZero();
    e.segment<4>(kDxiIdx).setZero();
  }
  return -(gains->gain_at(t) * e);
}

ControlVector FeedbackLaw::operator()(double t, const StateVector& x) const {
  ControlVector u = reference->control(t) + correction(t, x);
  for (int j = 0; j < kControlDim; ++j) u(j) = std::clamp(u(j), -u_max, u_max);
  return u;
}

ControlVector feedback(const StateVector& x, double t, const Reference& reference, const GainSchedule& gains,
                       double u_max, bool xi_only) {
  return FeedbackLaw{&reference, &gains, u_max, xi_only}(t, x);
}

namespace {

TrackResult summarize(Rollout&& r, const Reference& reference, const ControlLaw& law, double u_max) {
  TrackResult out;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    const double t = r.times[i];
    const ControlVector u = law(t, r.states[i]);
    const ControlVector du = u - reference.control(t);
    out.max_correction = std::max(out.max_correction, du.cwiseAbs().maxCoeff());
    if (u.cwiseAbs().maxCoeff() >= u_max) ++out.saturated_samples;
    const StateVector xr = reference.rollout.state_in(t, r.intervals[i]);
    out.max_error = std::max(out.max_error, (r.states[i] - xr).norm());
  }
  out.final_error = (r.final_state() - reference.rollout.final_state()).norm();
  out.rollout = std::move(r);
  return out;
}

}  // namespace

TrackResult track(const PlantParams& params, const HybridState& x0, const Reference& reference,
                  const GainSchedule& gains, const LqrWeights& weights, const RolloutOptions& options) {
  const double u_max = params.limits.motor_speed_max;
  const FeedbackLaw law{&reference, &gains, u_max, weights.xi_only};
  const ControlLaw fn = [law](double t, const StateVector& x) { return law(t, x); };
  Rollout r = rollout(params, x0, fn, reference.schedule(), reference.schedule().horizon, options,
                      reference.controls.breakpoints());
  return summarize(std::move(r), reference, fn, u_max);
}

TrackResult open_loop(const PlantParams& params, const HybridState& x0, const Reference& reference,
                      const RolloutOptions& options) {
  Rollout r = rollout(params, x0, reference.controls, reference.schedule(), options);
  const ZeroOrderHold& hold = reference.controls;
  const ControlLaw fn = [&hold](double t, const StateVector&) { return hold.at(t); };
  return summarize(std::move(r), reference, fn, params.limits.motor_speed_max);
}

}  // namespace ceropt
