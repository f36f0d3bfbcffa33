#include "ocorg/oco.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ocorg/errors.hpp"

namespace ocorg {

CstrCostSchedule::CstrCostSchedule(CstrCostParams params) : params_(std::move(params)) {
  if (params_.cbar_points.empty()) throw DomainError("cost schedule needs a target breakpoint");
  if (!(params_.q_period > 0.0)) throw DomainError("weight period must be positive");
  for (std::size_t i = 1; i < params_.cbar_points.size(); ++i) {
    if (!(params_.cbar_points[i].first > params_.cbar_points[i - 1].first)) {
      throw DomainError("target breakpoints must be strictly increasing in time");
    }
  }
}

CstrCostSchedule CstrCostSchedule::constant(double q, double cbar) {
  CstrCostParams p;
  p.q_offset = q;
  p.q_amplitude = 0.0;
  p.cbar_points = {{0.0, cbar}};
  return CstrCostSchedule(p);
}

double CstrCostSchedule::q(int t) const {
  return params_.q_offset -
         params_.q_amplitude * std::sin(2.0 * std::numbers::pi * t / params_.q_period);
}

double CstrCostSchedule::cbar(int t) const {
  const auto& pts = params_.cbar_points;
  const double s = t;
  if (s <= pts.front().first) return pts.front().second;
  if (s >= pts.back().first) return pts.back().second;
  const auto it = std::upper_bound(pts.begin(), pts.end(), s,
                                   [](double a, const auto& p) { return a < p.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  return lo.second + (hi.second - lo.second) * (s - lo.first) / (hi.first - lo.first);
}

double CstrCostSchedule::stage_cost(int t, const Vec& x, const Vec& u) const {
  const double e = x(0) - cbar(t);
  return q(t) * e * e + u.squaredNorm();
}

void CstrCostSchedule::stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx,
                                      Vec& gu) const {
  gx = Vec::Zero(x.size());
  gx(0) = 2.0 * q(t) * (x(0) - cbar(t));
  gu = 2.0 * u;
}

SwitchingCost::SwitchingCost(SwitchingCostParams params) : params_(params) {
  if (!(params_.period > 0.0) || !(params_.weight >= 0.0)) {
    throw DomainError("switching cost needs a positive period and non-negative weight");
  }
}

double SwitchingCost::target(int t) const {
  return params_.offset +
         params_.amplitude * std::sin(2.0 * std::numbers::pi * t / params_.period);
}

double SwitchingCost::stage_cost(int t, const Vec& x, const Vec& u) const {
  const Eigen::Index m = u.size();
  const Vec last = x.tail(m);
  return (u.array() - target(t)).matrix().squaredNorm() + params_.weight * (u - last).squaredNorm();
}

void SwitchingCost::stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx, Vec& gu) const {
  const Eigen::Index m = u.size();
  const Vec diff = u - x.tail(m);
  gu = 2.0 * (u.array() - target(t)).matrix() + 2.0 * params_.weight * diff;
  gx = Vec::Zero(x.size());
  gx.tail(m) = -2.0 * params_.weight * diff;
}

AdversarialCost::AdversarialCost(std::shared_ptr<const SteadyStateMap> ss, int horizon)
    : ss_(std::move(ss)),
      r_(static_cast<std::size_t>(std::max(horizon, 0)),
         std::numeric_limits<double>::quiet_NaN()) {}

double AdversarialCost::reference(int t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= r_.size() || std::isnan(r_[t])) {
    std::ostringstream msg;
    msg << "adversarial cost " << t << " used before its reference was committed";
    throw CausalityError(msg.str());
  }
  return r_[static_cast<std::size_t>(t)];
}

void AdversarialCost::observe_reference(int t, double r) {
  if (t < 0) throw DomainError("negative time index");
  if (static_cast<std::size_t>(t) >= r_.size()) {
    r_.resize(static_cast<std::size_t>(t) + 1, std::numeric_limits<double>::quiet_NaN());
  }
  r_[static_cast<std::size_t>(t)] = r;
}

double AdversarialCost::stage_cost(int t, const Vec& x, const Vec& u) const {
  const double r = reference(t);
  return (x - ss_->state(r)).squaredNorm() + (u - ss_->input(r)).squaredNorm();
}

void AdversarialCost::stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx,
                                     Vec& gu) const {
  const double r = reference(t);
  gx = 2.0 * (x - ss_->state(r));
  gu = 2.0 * (u - ss_->input(r));
}

SteadyStateCost::SteadyStateCost(std::shared_ptr<const CostSchedule> costs,
                                 std::shared_ptr<const SteadyStateMap> ss)
    : costs_(std::move(costs)), ss_(std::move(ss)) {}

double SteadyStateCost::eval(int t, double v) const {
  return costs_->stage_cost(t, ss_->state(v), ss_->input(v));
}

double SteadyStateCost::grad(int t, double v) const {
  Vec gx, gu;
  costs_->stage_gradient(t, ss_->state(v), ss_->input(v), gx, gu);
  return gx.dot(ss_->state_derivative(v)) + gu.dot(ss_->input_derivative(v));
}

RevealedCosts::RevealedCosts(const SteadyStateCost& costs, bool keep_log)
    : costs_(costs), keep_log_(keep_log) {}

void RevealedCosts::record(int index) {
  if (index < 0) throw DomainError("negative cost index");
  max_lead_ = reads_ == 0 ? index - now_ : std::max(max_lead_, index - now_);
  ++reads_;
  if (keep_log_) log_.emplace_back(now_, index);
  if (index >= now_) {
    std::ostringstream msg;
    msg << "cost " << index << " read at time " << now_ << " before it was revealed";
    throw CausalityError(msg.str());
  }
}

double RevealedCosts::value(int index, double v) {
  record(index);
  return costs_.eval(index, v);
}

double RevealedCosts::gradient(int index, double v) {
  record(index);
  return costs_.grad(index, v);
}

double minimize_on_window(const std::function<double(double)>& f,
                          const std::function<double(double)>& df, const ReferenceWindow& w,
                          double grad_tol, int scan_points) {
  const std::vector<double> grid = w.grid(std::max(scan_points, 3));
  const std::size_t n = grid.size();
  std::size_t j = 0;
  double fj = f(grid[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const double fi = f(grid[i]);
    if (fi < fj) {
      fj = fi;
      j = i;
    }
  }
  const double A = grid[j == 0 ? 0 : j - 1];
  const double B = grid[std::min(j + 1, n - 1)];

  constexpr double kInvPhi = 0.6180339887498949;
  double a = A;
  double b = B;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > 1e-10) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  double best = 0.5 * (a + b);
  double f_best = f(best);
  if (fj < f_best) {
    best = grid[j];
    f_best = fj;
  }

  // Polish to the stationarity tolerance when the bracket straddles a sign
  // change of the derivative.
  double lo = A;
  double hi = B;
  if (df(lo) < 0.0 && df(hi) > 0.0) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double g = df(mid);
      if (std::abs(g) < grad_tol) {
        lo = hi = mid;
        break;
      }
      if (g < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const double cand = 0.5 * (lo + hi);
    if (f(cand) <= f_best) best = cand;
  }
  return best;
}

double benchmark_eta(const SteadyStateCost& costs, int t, double grad_tol) {
  return minimize_on_window([&](double v) { return costs.eval(t, v); },
                            [&](double v) { return costs.grad(t, v); }, costs.window(),
                            grad_tol);
}

double ogd_step(double r_prev, double grad_prev, double step, const ReferenceWindow& w) {
  if (!std::isfinite(grad_prev)) throw NumericalError("non-finite steady-state gradient");
  if (!(step > 0.0)) throw DomainError("gradient step size must be positive");
  return w.clamp(r_prev - step * grad_prev);
}

double prev_opt_step(int t, RevealedCosts& costs, const ReferenceWindow& w, double grad_tol) {
  if (t < 1) throw DomainError("previous-optimum step needs t >= 1");
  return minimize_on_window([&](double v) { return costs.value(t - 1, v); },
                            [&](double v) { return costs.gradient(t - 1, v); }, w, grad_tol);
}

OcoAlgorithm::OcoAlgorithm(OcoOptions options, ReferenceWindow window, double r0)
    : options_(std::move(options)), window_(window), r_prev_(r0) {
  if (!window_.contains(r0)) throw DomainError("initial reference outside the window");
  if (options_.kind == OcoKind::kScripted && options_.script.empty()) {
    throw DomainError("scripted references need at least one entry");
  }
}

double OcoAlgorithm::propose(int t, RevealedCosts& costs) {
  if (t == 0) return r_prev_;
  double r = r_prev_;
  switch (options_.kind) {
    case OcoKind::kOgd:
      r = ogd_step(r_prev_, costs.gradient(t - 1, r_prev_), options_.step_size, window_);
      break;
    case OcoKind::kPrevOpt:
      r = prev_opt_step(t, costs, window_, options_.grad_tol);
      break;
    case OcoKind::kScripted: {
      const std::size_t i = std::min(static_cast<std::size_t>(t), options_.script.size()) - 1;
      r = window_.clamp(options_.script[i]);
      break;
    }
  }
  r_prev_ = r;
  return r;
}

Prop1Constants prop1_constants(double l_s, double kappa, const Mat& S) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw DomainError("kappa must lie in [0, 1)");
  if (!(l_s > 0.0)) throw DomainError("l_s must be positive");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(S),
                                                          Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw DomainError("weighting matrix must be positive definite");
  const double s_half = std::sqrt(hi);
  const double s_inv_half = 1.0 / std::sqrt(lo);

  Prop1Constants c;
  c.c_kappa = kappa / (1.0 - kappa);
  c.c_oco0 = l_s * s_inv_half * (1.0 + c.c_kappa * s_half);
  c.c_oco = l_s * s_inv_half * c.c_kappa * s_half;
  c.c_pl0 = (1.0 + kappa) / l_s * c.c_oco0;
  c.c_pl = (1.0 + kappa) / l_s * c.c_oco;
  c.c_oco_patched = l_s * s_inv_half * s_half / (1.0 - kappa);
  c.c_pl_patched = (1.0 + kappa) / l_s * c.c_oco_patched;
  return c;
}

double ogd_contraction(const std::function<double(double)>& f,
                       const std::function<double(double)>& df, const ReferenceWindow& w,
                       double step, int probes) {
  const double eta = minimize_on_window(f, df, w);
  double kappa = 0.0;
  for (double r : w.grid(std::max(probes, 2))) {
    const double gap = std::abs(r - eta);
    if (gap < 1e-9) continue;
    kappa = std::max(kappa, std::abs(ogd_step(r, df(r), step, w) - eta) / gap);
  }
  return kappa;
}

}  // namespace ocorg
