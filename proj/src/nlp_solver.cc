#include "ceropt/nlp_solver.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace ceropt {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIterations:
      return "max-iter";
    case SolveStatus::kInfeasible:
      return "infeasible";
    case SolveStatus::kRestorationFailed:
      return "restoration-failed";
    case SolveStatus::kNumericalError:
      return "numerical-error";
    case SolveStatus::kUserStop:
      return "user-stop";
  }
  return "?";
}

double constraint_violation(const NlpProblem& problem, const Eigen::VectorXd& x) {
  Eigen::VectorXd xl, xu, gl, gu, g(problem.num_constraints());
  problem.bounds(xl, xu, gl, gu);
  problem.constraints(x, g);
  double v = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) v = std::max({v, xl(i) - x(i), x(i) - xu(i)});
  for (Eigen::Index i = 0; i < g.size(); ++i) v = std::max({v, gl(i) - g(i), g(i) - gu(i)});
  return v;
}

namespace {

using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

// Filter line-search constants.
constexpr double kGammaTheta = 1e-5;
constexpr double kGammaPhi = 1e-8;
constexpr double kDelta = 1.0;
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr double kEtaPhi = 1e-8;
constexpr double kGammaAlpha = 0.05;
constexpr double kSMax = 100.0;
constexpr double kKappaSoc = 0.99;
// Watchdog: consecutive shortened steps that trigger it, and trial iterations.
constexpr int kWatchdogTrigger = 10;
constexpr int kWatchdogTrials = 3;
constexpr double kRestoRho = 1000.0;
constexpr double kRestoKappa = 0.9;

// f and g multiplied by per-function factors chosen from gradients at x0.
class ScaledProblem final : public NlpProblem {
 public:
  ScaledProblem(const NlpProblem& base, double obj_scale, VectorXd row_scale)
      : base_(base), sf_(obj_scale), sc_(std::move(row_scale)) {
    for (const auto& [r, c] : base_.jacobian_structure()) rows_.push_back(r);
  }

  int num_variables() const override { return base_.num_variables(); }
  int num_constraints() const override { return base_.num_constraints(); }
  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& gl, VectorXd& gu) const override {
    base_.bounds(xl, xu, gl, gu);
    gl = gl.cwiseProduct(sc_);
    gu = gu.cwiseProduct(sc_);
  }
  double objective(const VectorXd& x) const override { return sf_ * base_.objective(x); }
  void gradient(const VectorXd& x, VectorXd& grad) const override {
    base_.gradient(x, grad);
    grad *= sf_;
  }
  void constraints(const VectorXd& x, VectorXd& g) const override {
    base_.constraints(x, g);
    g = g.cwiseProduct(sc_);
  }
  std::vector<std::pair<int, int>> jacobian_structure() const override { return base_.jacobian_structure(); }
  void jacobian_values(const VectorXd& x, VectorXd& values) const override {
    base_.jacobian_values(x, values);
    for (Eigen::Index k = 0; k < values.size(); ++k) values(k) *= sc_(rows_[k]);
  }
  std::vector<std::pair<int, int>> hessian_structure() const override { return base_.hessian_structure(); }
  void hessian_values(const VectorXd& x, double obj_factor, const VectorXd& lambda,
                      VectorXd& values) const override {
    base_.hessian_values(x, obj_factor * sf_, lambda.cwiseProduct(sc_), values);
  }

 private:
  const NlpProblem& base_;
  double sf_;
  VectorXd sc_;
  std::vector<int> rows_;
};

// min rho sum(p + n) + zeta/2 |D (x - x_ref)|^2  s.t.  g_l <= g(x) - p + n <= g_u.
class RestorationProblem final : public NlpProblem {
 public:
  RestorationProblem(const NlpProblem& base, VectorXd x_ref, double zeta)
      : base_(base), n_(base.num_variables()), m_(base.num_constraints()), x_ref_(std::move(x_ref)), zeta_(zeta) {
    d2_ = x_ref_.cwiseAbs().cwiseMax(1.0).cwiseInverse().cwiseAbs2();
    base_jac_ = base_.jacobian_structure().size();
    base_hess_ = base_.hessian_structure().size();
  }

  int num_variables() const override { return n_ + 2 * m_; }
  int num_constraints() const override { return m_; }
  void bounds(VectorXd& xl, VectorXd& xu, VectorXd& gl, VectorXd& gu) const override {
    VectorXd bxl, bxu;
    base_.bounds(bxl, bxu, gl, gu);
    xl.resize(n_ + 2 * m_);
    xu.resize(n_ + 2 * m_);
    xl << bxl, VectorXd::Zero(2 * m_);
    xu << bxu, VectorXd::Constant(2 * m_, kInf);
  }
  double objective(const VectorXd& v) const override {
    const auto dx = v.head(n_) - x_ref_;
    return kRestoRho * v.tail(2 * m_).sum() + 0.5 * zeta_ * dx.cwiseAbs2().dot(d2_);
  }
  void gradient(const VectorXd& v, VectorXd& grad) const override {
    grad.resize(n_ + 2 * m_);
    grad.head(n_) = zeta_ * d2_.cwiseProduct(v.head(n_) - x_ref_);
    grad.tail(2 * m_).setConstant(kRestoRho);
  }
  void constraints(const VectorXd& v, VectorXd& g) const override {
    base_.constraints(v.head(n_), g);
    g += -v.segment(n_, m_) + v.tail(m_);
  }
  std::vector<std::pair<int, int>> jacobian_structure() const override {
    auto s = base_.jacobian_structure();
    for (int i = 0; i < m_; ++i) s.emplace_back(i, n_ + i);
    for (int i = 0; i < m_; ++i) s.emplace_back(i, n_ + m_ + i);
    return s;
  }
  void jacobian_values(const VectorXd& v, VectorXd& values) const override {
    VectorXd base_vals(base_jac_);
    base_.jacobian_values(v.head(n_), base_vals);
    values.resize(base_jac_ + 2 * m_);
    values << base_vals, VectorXd::Constant(m_, -1.0), VectorXd::Constant(m_, 1.0);
  }
  std::vector<std::pair<int, int>> hessian_structure() const override {
    auto s = base_.hessian_structure();
    for (int i = 0; i < n_; ++i) s.emplace_back(i, i);
    return s;
  }
  void hessian_values(const VectorXd& v, double obj_factor, const VectorXd& lambda,
                      VectorXd& values) const override {
    VectorXd base_vals(base_hess_);
    base_.hessian_values(v.head(n_), 0.0, lambda, base_vals);
    values.resize(base_hess_ + n_);
    values << base_vals, obj_factor * zeta_ * d2_;
  }

 private:
  const NlpProblem& base_;
  int n_, m_;
  VectorXd x_ref_;
  double zeta_;
  VectorXd d2_;
  std::size_t base_jac_ = 0, base_hess_ = 0;
};

struct Filter {
  std::vector<std::pair<double, double>> entries;
  bool acceptable(double theta, double phi) const {
    for (const auto& [t, p] : entries)
      if (theta >= t && phi >= p) return false;
    return true;
  }
  void add(double theta, double phi) {
    std::erase_if(entries, [&](const auto& e) { return e.first >= theta && e.second >= phi; });
    entries.emplace_back(theta, phi);
  }
};

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& problem, const SolverOptions& options, const IterationCallback& callback,
                VectorXd row_unscale)
      : prob_(problem), opt_(options), callback_(callback), row_unscale_(std::move(row_unscale)) {
    n_ = prob_.num_variables();
    m_ = prob_.num_constraints();
    prob_.bounds(xl_, xu_, gl_, gu_);
    if (xl_.size() != n_ || xu_.size() != n_ || gl_.size() != m_ || gu_.size() != m_)
      throw std::invalid_argument("NLP bound vectors have the wrong size");
    for (int i = 0; i < n_; ++i)
      if (xl_(i) > xu_(i)) throw std::invalid_argument("inconsistent variable bounds at index " + std::to_string(i));
    slot_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      if (gl_(i) > gu_(i)) throw std::invalid_argument("inconsistent constraint bounds at row " + std::to_string(i));
      if (gl_(i) != gu_(i)) {
        slot_[i] = static_cast<int>(slack_row_.size());
        slack_row_.push_back(i);
      }
    }
    ni_ = static_cast<int>(slack_row_.size());
    nw_ = n_ + ni_;
    wl_.resize(nw_);
    wu_.resize(nw_);
    wl_ << xl_, VectorXd(ni_);
    wu_ << xu_, VectorXd(ni_);
    for (int j = 0; j < ni_; ++j) {
      wl_(n_ + j) = gl_(slack_row_[j]);
      wu_(n_ + j) = gu_(slack_row_[j]);
    }
    has_l_ = wl_.unaryExpr([](double v) { return std::isfinite(v) ? 1.0 : 0.0; });
    has_u_ = wu_.unaryExpr([](double v) { return std::isfinite(v) ? 1.0 : 0.0; });
    num_bounds_ = static_cast<int>(has_l_.sum() + has_u_.sum());
    for (const auto& [r, c] : prob_.jacobian_structure()) {
      jac_rows_.push_back(r);
      jac_cols_.push_back(c);
    }
    for (const auto& [r, c] : prob_.hessian_structure()) {
      if (r < c) throw std::invalid_argument("Hessian structure must be lower triangular");
      hess_rows_.push_back(r);
      hess_cols_.push_back(c);
    }
    if (row_unscale_.size() != m_) row_unscale_ = VectorXd::Ones(m_);
    mu_min_ = opt_.mu_min > 0 ? opt_.mu_min : opt_.tol / 10.0;
  }

  SolveStatus run(const VectorXd& x0, const WarmStart* warm, NlpReport& report);

  VectorXd x() const { return w_.head(n_); }
  const VectorXd& y() const { return y_; }
  VectorXd zl_x() const { return zl_.head(n_); }
  VectorXd zu_x() const { return zu_.head(n_); }
  double objective() const { return f_; }
  double mu() const { return mu_; }

 private:
  // Evaluation.
  bool evaluate_at(const VectorXd& w, double& f, VectorXd& c) const;
  void evaluate_derivatives();
  VectorXd residual(const VectorXd& w, const VectorXd& g) const;
  double barrier(const VectorXd& w, double f) const;
  VectorXd barrier_gradient() const;
  VectorXd jt_times(const VectorXd& y) const;

  // KKT.
  bool factorize(const VectorXd& sigma, double delta_w, double delta_c, bool with_hessian);
  VectorXd solve(const VectorXd& rhs, double delta_c) const;
  VectorXd solve_regularized(const VectorXd& rhs) const;
  bool factorize_with_inertia_correction(const VectorXd& sigma);

  void initialize(const VectorXd& x0, const WarmStart* warm);
  void least_squares_multipliers();
  void reset_bound_multipliers();
  double optimality_error(double mu, double* dual, double* primal, double* compl_) const;
  double unscaled_violation() const;
  double fraction_to_boundary(const VectorXd& v, const VectorXd& dv, const VectorXd& lo, const VectorXd& hi,
                              double tau) const;
  double fraction_to_boundary_z(const VectorXd& z, const VectorXd& dz, const VectorXd& mask, double tau) const;

  enum class StepResult { kAccepted, kRestore, kFailed };
  StepResult line_search(const VectorXd& dw, const VectorXd& dy, const VectorXd& dzl, const VectorXd& dzu,
                         const VectorXd& rhs_w, std::string& tag);
  StepResult backtrack(const VectorXd& dw, const VectorXd& dy, const VectorXd& dzl, const VectorXd& dzu,
                       const VectorXd* rhs_w, bool skip_full, std::string& tag);
  SolveStatus restoration(NlpReport& report);
  void log_iteration(int iter, double inf_pr, double inf_du, double dnorm, double alpha_du, double alpha_pr,
                     const std::string& tag) const;

  const NlpProblem& prob_;
  SolverOptions opt_;
  IterationCallback callback_;
  VectorXd row_unscale_;

  int n_ = 0, m_ = 0, ni_ = 0, nw_ = 0, num_bounds_ = 0;
  VectorXd xl_, xu_, gl_, gu_, wl_, wu_, has_l_, has_u_;
  std::vector<int> slot_, slack_row_;
  std::vector<int> jac_rows_, jac_cols_, hess_rows_, hess_cols_;

  // Iterate.
  VectorXd w_, y_, zl_, zu_;
  double mu_ = 0.1, tau_ = 0.99, mu_min_ = 1e-7;
  // Cached evaluations at w_.
  double f_ = 0.0;
  VectorXd g_, c_, grad_, jac_vals_, hess_vals_;

  Filter filter_;
  double theta_max_ = 0.0, theta_min_ = 0.0;
  double last_delta_w_ = 0.0, delta_w_ = 0.0;
  bool in_restoration_ = false;

  // Watchdog state: the reference iterate and its search direction.
  struct Watchdog {
    bool active = false;
    int trials = 0;
    VectorXd w, y, zl, zu, dw, dy, dzl, dzu;
    double theta = 0.0, phi = 0.0, gd = 0.0, alpha_max = 1.0;
  } watchdog_;
  int shortened_ = 0;

  Eigen::SparseMatrix<double> hess_full_, jac_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  double fact_delta_c_ = 1.0;
  int iter_ = 0;
  Clock::time_point start_;
};

bool InteriorPoint::evaluate_at(const VectorXd& w, double& f, VectorXd& c) const {
  try {
    const VectorXd x = w.head(n_);
    f = prob_.objective(x);
    VectorXd g(m_);
    prob_.constraints(x, g);
    c = residual(w, g);
  } catch (const std::exception&) {
    return false;
  }
  return std::isfinite(f) && c.allFinite();
}

VectorXd InteriorPoint::residual(const VectorXd& w, const VectorXd& g) const {
  VectorXd c(m_);
  for (int i = 0; i < m_; ++i) c(i) = g(i) - (slot_[i] < 0 ? gl_(i) : w(n_ + slot_[i]));
  return c;
}

void InteriorPoint::evaluate_derivatives() {
  const VectorXd x = w_.head(n_);
  f_ = prob_.objective(x);
  g_.resize(m_);
  prob_.constraints(x, g_);
  c_ = residual(w_, g_);
  grad_.resize(n_);
  prob_.gradient(x, grad_);
  jac_vals_.resize(jac_rows_.size());
  prob_.jacobian_values(x, jac_vals_);
}

double InteriorPoint::barrier(const VectorXd& w, double f) const {
  double b = f;
  for (int i = 0; i < nw_; ++i) {
    if (has_l_(i) > 0) b -= mu_ * std::log(w(i) - wl_(i));
    if (has_u_(i) > 0) b -= mu_ * std::log(wu_(i) - w(i));
  }
  return b;
}

VectorXd InteriorPoint::barrier_gradient() const {
  VectorXd gb(nw_);
  gb.head(n_) = grad_;
  gb.tail(ni_).setZero();
  for (int i = 0; i < nw_; ++i) {
    if (has_l_(i) > 0) gb(i) -= mu_ / (w_(i) - wl_(i));
    if (has_u_(i) > 0) gb(i) += mu_ / (wu_(i) - w_(i));
  }
  return gb;
}

VectorXd InteriorPoint::jt_times(const VectorXd& y) const {
  VectorXd r = VectorXd::Zero(nw_);
  for (std::size_t k = 0; k < jac_rows_.size(); ++k) r(jac_cols_[k]) += jac_vals_(k) * y(jac_rows_[k]);
  for (int j = 0; j < ni_; ++j) r(n_ + j) -= y(slack_row_[j]);
  return r;
}

// The KKT matrix [W J^T; J -delta_c I] is condensed to W + J^T J / delta_c.
// Its inertia is (nw, m) exactly when the condensed matrix is positive
// definite, which the LDL^T pivots reveal without indefinite pivoting.
bool InteriorPoint::factorize(const VectorXd& sigma, double delta_w, double delta_c, bool with_hessian) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * hess_rows_.size() + nw_);
  if (with_hessian) {
    for (std::size_t k = 0; k < hess_rows_.size(); ++k) {
      t.emplace_back(hess_rows_[k], hess_cols_[k], hess_vals_(k));
      if (hess_rows_[k] != hess_cols_[k]) t.emplace_back(hess_cols_[k], hess_rows_[k], hess_vals_(k));
    }
  }
  for (int i = 0; i < nw_; ++i) t.emplace_back(i, i, sigma(i) + delta_w);
  hess_full_.resize(nw_, nw_);
  hess_full_.setFromTriplets(t.begin(), t.end());

  t.clear();
  t.reserve(jac_rows_.size() + ni_);
  for (std::size_t k = 0; k < jac_rows_.size(); ++k) t.emplace_back(jac_rows_[k], jac_cols_[k], jac_vals_(k));
  for (int j = 0; j < ni_; ++j) t.emplace_back(slack_row_[j], n_ + j, -1.0);
  jac_.resize(m_, nw_);
  jac_.setFromTriplets(t.begin(), t.end());
  fact_delta_c_ = delta_c;

  Eigen::SparseMatrix<double> condensed = hess_full_;
  if (m_ > 0) {
    const Eigen::SparseMatrix<double> jt = jac_.transpose();
    condensed += (jt * jac_) * (1.0 / delta_c);
  }
  ldlt_.compute(condensed);
  if (ldlt_.info() != Eigen::Success) return false;
  const VectorXd& d = ldlt_.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!std::isfinite(d(i)) || !(d(i) > 0.0)) return false;
  return true;
}

VectorXd InteriorPoint::solve_regularized(const VectorXd& rhs) const {
  const VectorXd r1 = rhs.head(nw_), r2 = rhs.tail(m_);
  VectorXd sol(nw_ + m_);
  const VectorXd dx = ldlt_.solve(r1 + jac_.transpose() * (r2 / fact_delta_c_));
  sol.head(nw_) = dx;
  sol.tail(m_) = (jac_ * dx - r2) / fact_delta_c_;
  return sol;
}

VectorXd InteriorPoint::solve(const VectorXd& rhs, double delta_c) const {
  VectorXd sol = solve_regularized(rhs);
  // Refine against the system with the requested dual regularization.
  auto apply = [&](const VectorXd& v) {
    VectorXd r(nw_ + m_);
    r.head(nw_) = hess_full_ * v.head(nw_) + jac_.transpose() * v.tail(m_);
    r.tail(m_) = jac_ * v.head(nw_) - delta_c * v.tail(m_);
    return r;
  };
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
  double prev = kInf;
  for (int it = 0; it < opt_.refinement_steps; ++it) {
    const VectorXd r = rhs - apply(sol);
    const double rn = r.lpNorm<Eigen::Infinity>();
    if (!(rn < 0.5 * prev) || rn <= 1e-14 * scale) break;
    prev = rn;
    sol += solve_regularized(r);
  }
  return sol;
}

bool InteriorPoint::factorize_with_inertia_correction(const VectorXd& sigma) {
  double dw = 0.0;
  if (factorize(sigma, dw, opt_.delta_c, true)) {
    delta_w_ = 0.0;
    return true;
  }
  dw = last_delta_w_ == 0.0 ? opt_.delta_w_init : std::max(opt_.delta_w_min, last_delta_w_ / 3.0);
  while (dw <= opt_.delta_w_max) {
    if (factorize(sigma, dw, opt_.delta_c, true)) {
      delta_w_ = last_delta_w_ = dw;
      return true;
    }
    dw *= last_delta_w_ == 0.0 ? 100.0 : 8.0;
  }
  return false;
}

void InteriorPoint::initialize(const VectorXd& x0, const WarmStart* warm) {
  auto push = [&](double v, double lo, double hi) {
    const bool fl = std::isfinite(lo), fu = std::isfinite(hi);
    if (fl && fu) {
      const double pl = std::min(opt_.bound_push * std::max(1.0, std::abs(lo)), opt_.bound_frac * (hi - lo));
      const double pu = std::min(opt_.bound_push * std::max(1.0, std::abs(hi)), opt_.bound_frac * (hi - lo));
      if (lo + pl >= hi - pu) return 0.5 * (lo + hi);
      return std::clamp(v, lo + pl, hi - pu);
    }
    if (fl) return std::max(v, lo + opt_.bound_push * std::max(1.0, std::abs(lo)));
    if (fu) return std::min(v, hi - opt_.bound_push * std::max(1.0, std::abs(hi)));
    return v;
  };
  w_.resize(nw_);
  for (int i = 0; i < n_; ++i) w_(i) = push(x0(i), xl_(i), xu_(i));
  VectorXd g(m_);
  prob_.constraints(w_.head(n_), g);
  for (int j = 0; j < ni_; ++j) w_(n_ + j) = push(g(slack_row_[j]), wl_(n_ + j), wu_(n_ + j));

  mu_ = opt_.mu_init;
  tau_ = std::max(opt_.tau_min, 1.0 - mu_);
  evaluate_derivatives();

  zl_ = has_l_;
  zu_ = has_u_;
  y_ = VectorXd::Zero(m_);
  const bool warm_y = warm && warm->lambda.size() == m_;
  if (warm_y) y_ = warm->lambda;
  if (warm) {
    const double floor = opt_.mu_init;
    if (warm->z_lower.size() == n_)
      for (int i = 0; i < n_; ++i) zl_(i) = has_l_(i) * std::max(warm->z_lower(i), floor);
    if (warm->z_upper.size() == n_)
      for (int i = 0; i < n_; ++i) zu_(i) = has_u_(i) * std::max(warm->z_upper(i), floor);
    // Slack stationarity: -y_i - v_l + v_u = 0.
    for (int j = 0; j < ni_; ++j) {
      const double yi = y_(slack_row_[j]);
      zl_(n_ + j) = has_l_(n_ + j) * std::max(-yi, floor);
      zu_(n_ + j) = has_u_(n_ + j) * std::max(yi, floor);
    }
  }
  if (!warm_y) least_squares_multipliers();
  const double theta0 = c_.lpNorm<1>();
  theta_max_ = 1e4 * std::max(1.0, theta0);
  theta_min_ = 1e-4 * std::max(1.0, theta0);
  filter_.entries.clear();
}

void InteriorPoint::least_squares_multipliers() {
  if (m_ == 0) return;
  // [I J^T; J 0] [d; y] = [-(grad - zl + zu); 0]
  if (!factorize(VectorXd::Ones(nw_), 0.0, 1e-8, false)) {
    y_.setZero();
    return;
  }
  VectorXd rhs = VectorXd::Zero(nw_ + m_);
  VectorXd gw = VectorXd::Zero(nw_);
  gw.head(n_) = grad_;
  rhs.head(nw_) = -(gw - zl_ + zu_);
  const VectorXd sol = solve(rhs, 0.0);
  y_ = sol.tail(m_);
  if (!y_.allFinite() || y_.lpNorm<Eigen::Infinity>() > 1e3) y_.setZero();
}

void InteriorPoint::reset_bound_multipliers() {
  for (int i = 0; i < nw_; ++i) {
    if (has_l_(i) > 0) {
      const double s = w_(i) - wl_(i);
      zl_(i) = std::clamp(zl_(i), mu_ / (opt_.kappa_sigma * s), opt_.kappa_sigma * mu_ / s);
    }
    if (has_u_(i) > 0) {
      const double s = wu_(i) - w_(i);
      zu_(i) = std::clamp(zu_(i), mu_ / (opt_.kappa_sigma * s), opt_.kappa_sigma * mu_ / s);
    }
  }
}

double InteriorPoint::optimality_error(double mu, double* dual, double* primal, double* compl_) const {
  VectorXd gw = VectorXd::Zero(nw_);
  gw.head(n_) = grad_;
  const VectorXd rd = gw + jt_times(y_) - zl_ + zu_;
  double cmax = 0.0;
  for (int i = 0; i < nw_; ++i) {
    if (has_l_(i) > 0) cmax = std::max(cmax, std::abs((w_(i) - wl_(i)) * zl_(i) - mu));
    if (has_u_(i) > 0) cmax = std::max(cmax, std::abs((wu_(i) - w_(i)) * zu_(i) - mu));
  }
  const double zsum = zl_.lpNorm<1>() + zu_.lpNorm<1>();
  const double sd = std::max(kSMax, (y_.lpNorm<1>() + zsum) / std::max(1, m_ + num_bounds_)) / kSMax;
  const double sc = std::max(kSMax, zsum / std::max(1, num_bounds_)) / kSMax;
  const double d = rd.size() ? rd.lpNorm<Eigen::Infinity>() / sd : 0.0;
  const double p = c_.size() ? c_.lpNorm<Eigen::Infinity>() : 0.0;
  const double c = cmax / sc;
  if (dual) *dual = d;
  if (primal) *primal = p;
  if (compl_) *compl_ = c;
  return std::max({d, p, c});
}

double InteriorPoint::unscaled_violation() const {
  double v = 0.0;
  for (int i = 0; i < m_; ++i) {
    double r = std::max({0.0, gl_(i) - g_(i), g_(i) - gu_(i)});
    if (slot_[i] < 0) r = std::abs(c_(i));
    v = std::max(v, r * row_unscale_(i));
  }
  return v;
}

double InteriorPoint::fraction_to_boundary(const VectorXd& v, const VectorXd& dv, const VectorXd& lo,
                                           const VectorXd& hi, double tau) const {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0 && std::isfinite(lo(i))) a = std::min(a, -tau * (v(i) - lo(i)) / dv(i));
    if (dv(i) > 0 && std::isfinite(hi(i))) a = std::min(a, tau * (hi(i) - v(i)) / dv(i));
  }
  return a;
}

double InteriorPoint::fraction_to_boundary_z(const VectorXd& z, const VectorXd& dz, const VectorXd& mask,
                                             double tau) const {
  double a = 1.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (mask(i) > 0 && dz(i) < 0) a = std::min(a, -tau * z(i) / dz(i));
  return a;
}

InteriorPoint::StepResult InteriorPoint::line_search(const VectorXd& dw, const VectorXd& dy, const VectorXd& dzl,
                                                     const VectorXd& dzu, const VectorXd& rhs_w, std::string& tag) {
  const double alpha_max = fraction_to_boundary(w_, dw, wl_, wu_, tau_);
  const double alpha_z = std::min(fraction_to_boundary_z(zl_, dzl, has_l_, tau_),
                                  fraction_to_boundary_z(zu_, dzu, has_u_, tau_));
  auto take = [&](const VectorXd& w_new) {
    w_ = w_new;
    y_ += alpha_max * dy;
    zl_ += alpha_z * dzl;
    zu_ += alpha_z * dzu;
  };
  auto finite_at = [&](const VectorXd& w_new, double& f_new, VectorXd& c_new) {
    return evaluate_at(w_new, f_new, c_new) && std::isfinite(barrier(w_new, f_new)) &&
           c_new.lpNorm<1>() <= theta_max_;
  };

  if (in_restoration_ || !opt_.allow_restoration) watchdog_.active = false;
  if (watchdog_.active) {
    Watchdog& wd = watchdog_;
    const VectorXd w_new = w_ + alpha_max * dw;
    double f_new;
    VectorXd c_new;
    if (finite_at(w_new, f_new, c_new)) {
      const double theta = c_new.lpNorm<1>();
      const double phi = barrier(w_new, f_new);
      const bool switching = wd.gd < 0 && wd.alpha_max * std::pow(-wd.gd, kSPhi) > kDelta * std::pow(wd.theta, kSTheta);
      bool ok = filter_.acceptable(theta, phi);
      bool f_type = false;
      if (ok && wd.theta <= theta_min_ && switching) {
        f_type = true;
        ok = phi <= wd.phi + kEtaPhi * wd.alpha_max * wd.gd;
      } else if (ok) {
        ok = theta <= (1.0 - kGammaTheta) * wd.theta || phi <= wd.phi - kGammaPhi * wd.theta;
      }
      if (ok) {
        if (!f_type) filter_.add((1.0 - kGammaTheta) * wd.theta, wd.phi - kGammaPhi * wd.theta);
        wd.active = false;
        shortened_ = 0;
        take(w_new);
        tag = "w";
        return StepResult::kAccepted;
      }
      if (++wd.trials < kWatchdogTrials) {
        take(w_new);
        tag = "W";
        return StepResult::kAccepted;
      }
    }
    // Watchdog failed: return to the reference iterate and backtrack there.
    wd.active = false;
    shortened_ = 0;
    w_ = wd.w;
    y_ = wd.y;
    zl_ = wd.zl;
    zu_ = wd.zu;
    evaluate_derivatives();
    tag = "b";
    return backtrack(wd.dw, wd.dy, wd.dzl, wd.dzu, nullptr, true, tag);
  }

  if (shortened_ >= kWatchdogTrigger && opt_.allow_restoration && !in_restoration_) {
    const VectorXd w_new = w_ + alpha_max * dw;
    double f_new;
    VectorXd c_new;
    if (finite_at(w_new, f_new, c_new)) {
      Watchdog& wd = watchdog_;
      wd.active = true;
      wd.trials = 0;
      wd.w = w_;
      wd.y = y_;
      wd.zl = zl_;
      wd.zu = zu_;
      wd.dw = dw;
      wd.dy = dy;
      wd.dzl = dzl;
      wd.dzu = dzu;
      wd.theta = c_.lpNorm<1>();
      wd.phi = barrier(w_, f_);
      wd.gd = barrier_gradient().dot(dw);
      wd.alpha_max = alpha_max;
      take(w_new);
      tag = "W";
      return StepResult::kAccepted;
    }
  }
  return backtrack(dw, dy, dzl, dzu, &rhs_w, false, tag);
}

InteriorPoint::StepResult InteriorPoint::backtrack(const VectorXd& dw, const VectorXd& dy, const VectorXd& dzl,
                                                   const VectorXd& dzu, const VectorXd* rhs_w, bool skip_full,
                                                   std::string& tag) {
  const double theta0 = c_.lpNorm<1>();
  const double phi0 = barrier(w_, f_);
  const VectorXd gb = barrier_gradient();
  const double gd = gb.dot(dw);
  const double alpha_max = fraction_to_boundary(w_, dw, wl_, wu_, tau_);
  const double alpha_z = std::min(fraction_to_boundary_z(zl_, dzl, has_l_, tau_),
                                  fraction_to_boundary_z(zu_, dzu, has_u_, tau_));

  double alpha_min = kGammaAlpha * kGammaTheta;
  if (gd < 0) {
    alpha_min = std::min(kGammaTheta, kGammaPhi * theta0 / -gd);
    if (theta0 <= theta_min_) alpha_min = std::min(alpha_min, kDelta * std::pow(theta0, kSTheta) / std::pow(-gd, kSPhi));
    alpha_min *= kGammaAlpha;
  }

  auto accept_point = [&](const VectorXd& w_new, double alpha_ref, bool& f_type, double& f_new,
                          VectorXd& c_new) -> bool {
    if (!evaluate_at(w_new, f_new, c_new)) return false;
    const double theta = c_new.lpNorm<1>();
    const double phi = barrier(w_new, f_new);
    if (!std::isfinite(phi) || theta > theta_max_) return false;
    if (!filter_.acceptable(theta, phi)) return false;
    const bool switching = gd < 0 && alpha_ref * std::pow(-gd, kSPhi) > kDelta * std::pow(theta0, kSTheta);
    if (theta0 <= theta_min_ && switching) {
      f_type = true;
      return phi <= phi0 + kEtaPhi * alpha_ref * gd;
    }
    f_type = false;
    return theta <= (1.0 - kGammaTheta) * theta0 || phi <= phi0 - kGammaPhi * theta0;
  };

  // Tiny steps are taken without globalization.
  const double rel = (dw.array().abs() / (1.0 + w_.array().abs())).maxCoeff();
  if (nw_ > 0 && rel < 10.0 * std::numeric_limits<double>::epsilon()) {
    w_ += alpha_max * dw;
    y_ += alpha_max * dy;
    zl_ += alpha_z * dzl;
    zu_ += alpha_z * dzu;
    tag = "t";
    return StepResult::kAccepted;
  }

  double alpha = skip_full ? 0.5 * alpha_max : alpha_max;
  for (int trial = skip_full ? 1 : 0;; ++trial) {
    if (alpha < alpha_min) return in_restoration_ || !opt_.allow_restoration ? StepResult::kFailed
                                                                              : StepResult::kRestore;
    VectorXd w_new = w_ + alpha * dw;
    double f_new;
    VectorXd c_new;
    bool f_type = false;
    bool ok = accept_point(w_new, alpha, f_type, f_new, c_new);
    if (!ok && trial == 0 && rhs_w && opt_.max_soc > 0 && c_new.size() == m_ && c_new.allFinite() &&
        c_new.lpNorm<1>() >= theta0) {
      // Second-order corrections.
      VectorXd c_soc = alpha * c_ + c_new;
      double theta_old = theta0;
      for (int k = 0; k < opt_.max_soc; ++k) {
        VectorXd rhs(nw_ + m_);
        rhs << -*rhs_w, -c_soc;
        const VectorXd sol = solve(rhs, 0.0);
        const VectorXd dw_soc = sol.head(nw_);
        const double a_soc = fraction_to_boundary(w_, dw_soc, wl_, wu_, tau_);
        const VectorXd w_soc = w_ + a_soc * dw_soc;
        double f_soc;
        VectorXd c_s;
        if (accept_point(w_soc, alpha, f_type, f_soc, c_s)) {
          w_new = w_soc;
          ok = true;
          tag = "s";
          break;
        }
        if (c_s.size() != m_ || !c_s.allFinite()) break;
        const double th = c_s.lpNorm<1>();
        if (th > kKappaSoc * theta_old) break;
        theta_old = th;
        c_soc = a_soc * c_soc + c_s;
      }
    }
    if (ok) {
      if (!f_type) filter_.add((1.0 - kGammaTheta) * theta0, phi0 - kGammaPhi * theta0);
      if (tag.empty()) tag = f_type ? "f" : "h";
      shortened_ = trial > 0 ? shortened_ + 1 : 0;
      w_ = w_new;
      y_ += alpha * dy;
      zl_ += alpha_z * dzl;
      zu_ += alpha_z * dzu;
      return StepResult::kAccepted;
    }
    alpha *= 0.5;
  }
}

SolveStatus InteriorPoint::restoration(NlpReport& report) {
  ++report.restoration_calls;
  const VectorXd x_ref = w_.head(n_);
  const double theta_start = c_.lpNorm<1>();
  filter_.add((1.0 - kGammaTheta) * theta_start, barrier(w_, f_) - kGammaPhi * theta_start);
  const double mu_r = std::max(mu_, c_.lpNorm<Eigen::Infinity>());
  RestorationProblem resto(prob_, x_ref, std::sqrt(mu_r));

  VectorXd v0(n_ + 2 * m_);
  v0.head(n_) = x_ref;
  for (int i = 0; i < m_; ++i) {
    const double c = c_(i);
    const double a = (mu_r - kRestoRho * c) / (2.0 * kRestoRho);
    const double nn = a + std::sqrt(a * a + mu_r * c / (2.0 * kRestoRho));
    v0(n_ + i) = c + nn;
    v0(n_ + m_ + i) = nn;
  }
  SolverOptions ro = opt_;
  ro.allow_restoration = false;
  ro.mu_init = mu_r;
  ro.gradient_scaling = false;
  ro.bound_push = ro.bound_frac = 1e-10;
  ro.max_iter = std::max(0, opt_.max_iter - iter_);
  ro.log_prefix = opt_.log_prefix + "r";

  WarmStart ws;
  ws.z_lower = VectorXd(n_ + 2 * m_);
  ws.z_upper = VectorXd::Zero(n_ + 2 * m_);
  ws.z_lower << zl_.head(n_), (mu_r / v0.tail(2 * m_).array()).matrix();
  ws.z_upper.head(n_) = zu_.head(n_);
  ws.lambda = VectorXd::Zero(m_);

  VectorXd w_found;
  IterationCallback early = [&](const IterateView& it) {
    if (it.iteration == 0) return false;
    VectorXd w(nw_);
    w << it.x.head(n_), it.slacks;
    double f;
    VectorXd c;
    if (!evaluate_at(w, f, c)) return false;
    const double theta = c.lpNorm<1>();
    const double phi = barrier(w, f);
    if (theta <= kRestoKappa * theta_start && theta <= theta_max_ && filter_.acceptable(theta, phi)) {
      w_found = w;
      return true;
    }
    return false;
  };

  InteriorPoint inner(resto, ro, early, VectorXd());
  inner.in_restoration_ = true;
  NlpReport inner_report;
  const SolveStatus s = inner.run(v0, &ws, inner_report);
  report.restoration_iterations += inner_report.iterations;
  iter_ += inner_report.iterations;
  if (s == SolveStatus::kConverged && w_found.size() == 0) {
    // Stationary point of the infeasibility measure.
    VectorXd w(nw_);
    const VectorXd xi = inner.x();
    VectorXd g(m_);
    prob_.constraints(xi.head(n_), g);
    w.head(n_) = xi.head(n_);
    for (int j = 0; j < ni_; ++j)
      w(n_ + j) = std::clamp(g(slack_row_[j]), wl_(n_ + j), wu_(n_ + j));
    double f;
    VectorXd c;
    if (evaluate_at(w, f, c) && c.lpNorm<Eigen::Infinity>() <= opt_.feas_tol) {
      w_found = w;
    } else {
      return SolveStatus::kInfeasible;
    }
  }
  if (w_found.size() == 0) return SolveStatus::kRestorationFailed;
  // Keep the point strictly interior.
  for (int i = 0; i < nw_; ++i) {
    const double eps = 1e-12 * std::max(1.0, std::abs(w_found(i)));
    if (has_l_(i) > 0) w_found(i) = std::max(w_found(i), wl_(i) + eps);
    if (has_u_(i) > 0) w_found(i) = std::min(w_found(i), wu_(i) - eps);
  }
  w_ = w_found;
  evaluate_derivatives();
  for (int i = 0; i < nw_; ++i) {
    if (has_l_(i) > 0) zl_(i) = mu_ / (w_(i) - wl_(i));
    if (has_u_(i) > 0) zu_(i) = mu_ / (wu_(i) - w_(i));
  }
  for (int i = 0; i < n_; ++i) {
    if (has_l_(i) > 0) zl_(i) = std::max(zl_(i), inner.zl_(i));
    if (has_u_(i) > 0) zu_(i) = std::max(zu_(i), inner.zu_(i));
  }
  reset_bound_multipliers();
  least_squares_multipliers();
  return SolveStatus::kConverged;
}

void InteriorPoint::log_iteration(int iter, double inf_pr, double inf_du, double dnorm, double alpha_du,
                                  double alpha_pr, const std::string& tag) const {
  if (!opt_.log) return;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%s%4d %14.7e %8.2e %8.2e %5.1f %8.2e %5.1f %8.2e %8.2e%s\n",
                opt_.log_prefix.c_str(), iter, f_, inf_pr, inf_du, std::log10(mu_), dnorm,
                delta_w_ > 0 ? std::log10(delta_w_) : -99.0, alpha_du, alpha_pr, tag.c_str());
  *opt_.log << buf;
}

SolveStatus InteriorPoint::run(const VectorXd& x0, const WarmStart* warm, NlpReport& report) {
  start_ = Clock::now();
  if (x0.size() != n_) throw std::invalid_argument("initial point has the wrong size");
  initialize(x0, warm);
  double dnorm = 0.0, alpha_du = 0.0, alpha_pr = 0.0;
  std::string tag;
  for (iter_ = 0;; ++iter_) {
    hess_vals_.resize(hess_rows_.size());
    prob_.hessian_values(w_.head(n_), 1.0, y_, hess_vals_);

    double inf_du, inf_pr, inf_c;
    optimality_error(0.0, &inf_du, &inf_pr, &inf_c);
    log_iteration(iter_, inf_pr, inf_du, dnorm, alpha_du, alpha_pr, tag);
    report.iterations = iter_;
    report.dual_infeasibility = inf_du;
    report.complementarity = inf_c;
    report.constraint_violation = unscaled_violation();
    report.final_mu = mu_;
    if (callback_) {
      const VectorXd x = w_.head(n_);
      const VectorXd s = w_.tail(ni_);
      if (callback_(IterateView{iter_, x, s, mu_, f_, c_.lpNorm<1>()})) return SolveStatus::kUserStop;
    }
    if (inf_du <= opt_.tol && inf_c <= opt_.tol && report.constraint_violation <= opt_.feas_tol &&
        inf_pr <= std::max(opt_.feas_tol, opt_.tol))
      return SolveStatus::kConverged;
    if (iter_ >= opt_.max_iter) return SolveStatus::kMaxIterations;
    if (std::chrono::duration<double>(Clock::now() - start_).count() > opt_.max_seconds)
      return SolveStatus::kMaxIterations;

    // Monotone barrier update.
    bool mu_changed = false;
    while (mu_ > mu_min_ && optimality_error(mu_, nullptr, nullptr, nullptr) <= opt_.kappa_eps * mu_) {
      mu_ = std::max(mu_min_, std::min(opt_.kappa_mu * mu_, std::pow(mu_, opt_.theta_mu)));
      tau_ = std::max(opt_.tau_min, 1.0 - mu_);
      mu_changed = true;
    }
    if (mu_changed) {
      filter_.entries.clear();
      watchdog_.active = false;
      shortened_ = 0;
    }

    VectorXd sigma(nw_);
    for (int i = 0; i < nw_; ++i)
      sigma(i) = (has_l_(i) > 0 ? zl_(i) / (w_(i) - wl_(i)) : 0.0) + (has_u_(i) > 0 ? zu_(i) / (wu_(i) - w_(i)) : 0.0);
    if (!factorize_with_inertia_correction(sigma)) return SolveStatus::kNumericalError;

    const VectorXd rhs_w = barrier_gradient() + jt_times(y_);
    VectorXd rhs(nw_ + m_);
    rhs << -rhs_w, -c_;
    const VectorXd sol = solve(rhs, 0.0);
    if (!sol.allFinite()) return SolveStatus::kNumericalError;
    const VectorXd dw = sol.head(nw_);
    const VectorXd dy = sol.tail(m_);
    VectorXd dzl = VectorXd::Zero(nw_), dzu = VectorXd::Zero(nw_);
    for (int i = 0; i < nw_; ++i) {
      if (has_l_(i) > 0) {
        const double s = w_(i) - wl_(i);
        dzl(i) = mu_ / s - zl_(i) - zl_(i) / s * dw(i);
      }
      if (has_u_(i) > 0) {
        const double s = wu_(i) - w_(i);
        dzu(i) = mu_ / s - zu_(i) + zu_(i) / s * dw(i);
      }
    }
    dnorm = dw.size() ? dw.lpNorm<Eigen::Infinity>() : 0.0;
    alpha_du = std::min(fraction_to_boundary_z(zl_, dzl, has_l_, tau_), fraction_to_boundary_z(zu_, dzu, has_u_, tau_));
    tag.clear();
    const VectorXd w_prev = w_;
    const StepResult r = line_search(dw, dy, dzl, dzu, rhs_w, tag);
    if (r == StepResult::kFailed) return SolveStatus::kRestorationFailed;
    if (r == StepResult::kRestore) {
      const SolveStatus rs = restoration(report);
      if (rs != SolveStatus::kConverged) return rs;
      shortened_ = 0;
      tag = "R";
      alpha_pr = 1.0;
      continue;
    }
    alpha_pr = (dnorm > 0) ? (w_ - w_prev).lpNorm<Eigen::Infinity>() / dnorm : 1.0;
    evaluate_derivatives();
    reset_bound_multipliers();
  }
}

}  // namespace

std::pair<NlpSolution, NlpReport> solve_nlp(const NlpProblem& problem, const Eigen::VectorXd& x0,
                                            const SolverOptions& options, const WarmStart* warm,
                                            const IterationCallback& callback) {
  const auto t0 = Clock::now();
  const int n = problem.num_variables();
  const int m = problem.num_constraints();
  double sf = 1.0;
  VectorXd sc = VectorXd::Ones(m);
  if (options.gradient_scaling) {
    VectorXd grad(n);
    problem.gradient(x0, grad);
    const double gmax = n ? grad.lpNorm<Eigen::Infinity>() : 0.0;
    if (gmax > options.scaling_max_gradient) sf = options.scaling_max_gradient / gmax;
    const auto js = problem.jacobian_structure();
    VectorXd jv(js.size());
    problem.jacobian_values(x0, jv);
    VectorXd rmax = VectorXd::Zero(m);
    for (std::size_t k = 0; k < js.size(); ++k)
      rmax(js[k].first) = std::max(rmax(js[k].first), std::abs(jv(k)));
    for (int i = 0; i < m; ++i)
      if (rmax(i) > options.scaling_max_gradient) sc(i) = options.scaling_max_gradient / rmax(i);
  }
  ScaledProblem scaled(problem, sf, sc);

  WarmStart scaled_warm;
  if (warm) {
    if (warm->lambda.size() == m) scaled_warm.lambda = warm->lambda.cwiseQuotient(sc) * sf;
    if (warm->z_lower.size() == n) scaled_warm.z_lower = warm->z_lower * sf;
    if (warm->z_upper.size() == n) scaled_warm.z_upper = warm->z_upper * sf;
  }

  InteriorPoint ip(scaled, options, callback, sc.cwiseInverse());
  NlpReport report;
  report.status = ip.run(x0, warm ? &scaled_warm : nullptr, report);

  NlpSolution sol;
  sol.x = ip.x();
  sol.lambda = ip.y().cwiseProduct(sc) / sf;
  sol.z_lower = ip.zl_x() / sf;
  sol.z_upper = ip.zu_x() / sf;
  sol.objective = problem.objective(sol.x);
  report.objective = sol.objective;
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return {sol, report};
}

}  // namespace ceropt
