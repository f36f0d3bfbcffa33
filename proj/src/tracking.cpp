#include "ocorg/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ocorg/errors.hpp"

namespace ocorg {

Vec SteadyStateMap::state_derivative(double v) const {
  constexpr double h = 1e-6;
  return (state(v + h) - state(v - h)) / (2.0 * h);
}

Vec SteadyStateMap::input_derivative(double v) const {
  constexpr double h = 1e-6;
  return (input(v + h) - input(v - h)) / (2.0 * h);
}

std::pair<Eigen::Vector2d, double> solve_steady_state(double theta, const CstrParams& p) {
  if (!(theta >= kMinTemperature) || !std::isfinite(theta)) {
    throw DomainError("steady-state temperature outside the model domain");
  }
  const double denom = p.alpha_f * (theta - p.x_c);
  if (denom == 0.0) {
    throw DomainError("steady state is singular at theta = x_c");
  }
  const double E = std::exp(-p.M_act / theta);
  const double c = 1.0 / (1.0 + p.theta_f * p.k_rate * E);
  const double u = ((p.x_f - theta) / p.theta_f + p.k_rate * c * E) / denom;
  return {Eigen::Vector2d(c, theta), u};
}

CstrSteadyState::CstrSteadyState(CstrParams params, ReferenceWindow window)
    : SteadyStateMap(window), params_(params) {
  params_.validate();
}

Vec CstrSteadyState::state(double v) const {
  return Vec(solve_steady_state(v, params_).first);
}

Vec CstrSteadyState::input(double v) const {
  return Vec::Constant(1, solve_steady_state(v, params_).second);
}

Vec CstrSteadyState::state_derivative(double v) const {
  const auto& p = params_;
  const double E = std::exp(-p.M_act / v);
  const double dE = E * p.M_act / (v * v);
  const double c = 1.0 / (1.0 + p.theta_f * p.k_rate * E);
  Vec d(2);
  d << -p.theta_f * p.k_rate * dE * c * c, 1.0;
  return d;
}

Vec CstrSteadyState::input_derivative(double v) const {
  const auto& p = params_;
  const double E = std::exp(-p.M_act / v);
  const double dE = E * p.M_act / (v * v);
  const double c = 1.0 / (1.0 + p.theta_f * p.k_rate * E);
  const double dc = -p.theta_f * p.k_rate * dE * c * c;
  const double num = (p.x_f - v) / p.theta_f + p.k_rate * c * E;
  const double dnum = -1.0 / p.theta_f + p.k_rate * (dc * E + c * dE);
  const double den = p.alpha_f * (v - p.x_c);
  return Vec::Constant(1, (dnum * den - num * p.alpha_f) / (den * den));
}

AffineSteadyState::AffineSteadyState(Vec H, Vec U, ReferenceWindow window)
    : SteadyStateMap(window), H_(std::move(H)), U_(std::move(U)) {}

GainPoint solve_dlqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                     int max_iterations, double tol) {
  // Doubling form of the value iteration P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA:
  // after k steps H equals the 2^k-th value iterate started from P = 0.
  const int n = static_cast<int>(A.rows());
  const Mat I = Mat::Identity(n, n);
  Mat Ak = A;
  Mat G = B * R.ldlt().solve(Mat(B.transpose()));
  Mat H = Q;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(I + G * H)};
    const Mat W = lu.solve(Eigen::MatrixXd(Ak));
    const Mat WG = lu.solve(Eigen::MatrixXd(G));
    Mat H_next = H + Ak.transpose() * H * W;
    Mat G_next = G + Ak * WG * Ak.transpose();
    Ak = (Ak * W).eval();
    H_next = 0.5 * (H_next + H_next.transpose()).eval();
    G = 0.5 * (G_next + G_next.transpose()).eval();
    if (!H_next.allFinite()) break;
    const double diff = (H_next - H).cwiseAbs().maxCoeff();
    H = H_next;
    // Absolute tolerance on unit-scale P, relative once entries grow past 1.
    if (diff < tol * std::max(1.0, H.cwiseAbs().maxCoeff())) {
      const Mat BtP = B.transpose() * H;
      const Mat K = -(R + BtP * B).ldlt().solve(Mat(BtP * A));
      return {K, H};
    }
  }
  throw SynthesisError("Riccati iteration did not converge");
}

double spectral_radius(const Mat& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(A), false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

GainPoint synthesize_gain(double v, const Plant& plant, const SteadyStateMap& ss,
                          const LqrWeights& weights) {
  const auto [A, B] = plant.jacobian(ss.state(v), ss.input(v));
  GainPoint gp;
  try {
    gp = solve_dlqr(A, B, weights.Q, weights.R);
  } catch (const SynthesisError& e) {
    std::ostringstream msg;
    msg << e.what() << " at v = " << v;
    throw SynthesisError(msg.str());
  }
  if (spectral_radius(A + B * gp.K) >= 1.0) {
    std::ostringstream msg;
    msg << "LQR closed loop not Schur at v = " << v;
    throw SynthesisError(msg.str());
  }
  return gp;
}

GainSchedule::GainSchedule(std::vector<double> grid, std::vector<GainPoint> points)
    : grid_(std::move(grid)), points_(std::move(points)) {
  if (grid_.empty() || grid_.size() != points_.size()) {
    throw DomainError("gain schedule needs one gain per grid point");
  }
  if (!std::is_sorted(grid_.begin(), grid_.end())) {
    throw DomainError("gain schedule grid must be sorted");
  }
}

GainSchedule GainSchedule::synthesize(const Plant& plant, const SteadyStateMap& ss,
                                      const LqrWeights& weights, int points) {
  std::vector<double> grid = points == 1 ? std::vector<double>{ss.window().lo}
                                         : ss.window().grid(points);
  std::vector<GainPoint> gains;
  gains.reserve(grid.size());
  for (double v : grid) gains.push_back(synthesize_gain(v, plant, ss, weights));
  return GainSchedule(std::move(grid), std::move(gains));
}

std::pair<std::size_t, double> GainSchedule::locate(double v) const {
  if (grid_.size() == 1 || v <= grid_.front()) return {0, 0.0};
  if (v >= grid_.back()) return {grid_.size() - 2, 1.0};
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - grid_.begin()) - 1;
  return {i, (v - grid_[i]) / (grid_[i + 1] - grid_[i])};
}

void GainSchedule::interpolate(double v, Mat& K, Mat& P) const {
  const auto [i, w] = locate(v);
  if (grid_.size() == 1) {
    K = points_[0].K;
    P = points_[0].P;
    return;
  }
  K = (1.0 - w) * points_[i].K + w * points_[i + 1].K;
  P = (1.0 - w) * points_[i].P + w * points_[i + 1].P;
  P = 0.5 * (P + P.transpose()).eval();
}

GainPoint GainSchedule::at(double v) const {
  GainPoint gp;
  interpolate(v, gp.K, gp.P);
  return gp;
}

TrackingController::TrackingController(std::shared_ptr<const Plant> plant,
                                       std::shared_ptr<const SteadyStateMap> steady_state,
                                       GainSchedule schedule)
    : plant_(std::move(plant)), ss_(std::move(steady_state)), schedule_(std::move(schedule)) {}

Mat TrackingController::gain(double v) const {
  const auto [i, w] = schedule_.locate(v);
  const auto& pts = schedule_.points();
  if (pts.size() == 1) return pts[0].K;
  return (1.0 - w) * pts[i].K + w * pts[i + 1].K;
}

Mat TrackingController::lyapunov_weight(double v) const {
  const auto [i, w] = schedule_.locate(v);
  const auto& pts = schedule_.points();
  if (pts.size() == 1) return pts[0].P;
  Mat P = (1.0 - w) * pts[i].P + w * pts[i + 1].P;
  return 0.5 * (P + P.transpose());
}

Vec TrackingController::input(const Vec& x, double v) const {
  return ss_->input(v) + gain(v) * (x - ss_->state(v));
}

Vec TrackingController::closed_loop(const Vec& x, double v) const {
  return plant_->step(x, input(x, v));
}

double TrackingController::lyapunov(const Vec& x, double v) const {
  const Vec d = x - ss_->state(v);
  return d.dot(lyapunov_weight(v) * d);
}

std::vector<Vec> rollout_constant_reference(const TrackingController& ctrl, const Vec& x,
                                            double v, int steps) {
  if (steps < 0) throw DomainError("rollout length must be non-negative");
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(x);
  for (int t = 0; t < steps; ++t) {
    try {
      out.push_back(ctrl.closed_loop(out.back(), v));
    } catch (const DomainError& e) {
      std::ostringstream msg;
      msg << "rollout step " << t << ": " << e.what();
      throw DomainError(msg.str());
    }
  }
  return out;
}

namespace {

// Ratios below this are dominated by rounding in x - h(v) and carry no rate
// information.
constexpr double kRatioFloor = 1e-8;

double envelope_constant(std::span<const double> e, double lambda) {
  double c = 1.0;
  if (lambda <= 0.0) {
    for (std::size_t t = 1; t < e.size(); ++t) {
      if (e[t] > 0.0) return std::numeric_limits<double>::infinity();
    }
    return std::max(c, e[0]);
  }
  const double log_lambda = std::log(lambda);
  for (std::size_t t = 0; t < e.size(); ++t) {
    if (e[t] <= 0.0) continue;
    c = std::max(c, std::exp(std::log(e[t]) - static_cast<double>(t) * log_lambda));
  }
  return c;
}

}  // namespace

StabilityEnvelope fit_exponential_envelope(std::span<const double> worst_ratio) {
  if (worst_ratio.size() < 3) {
    throw StabilityEstimationError("stability envelope needs at least 3 samples");
  }
  for (double r : worst_ratio) {
    if (!std::isfinite(r) || r < 0.0) {
      throw StabilityEstimationError("closed-loop rollout diverged");
    }
  }
  std::size_t end = worst_ratio.size();
  for (std::size_t t = 1; t < worst_ratio.size(); ++t) {
    if (worst_ratio[t] < kRatioFloor) {
      end = t + 1;
      break;
    }
  }
  const auto e = worst_ratio.first(end);
  const std::size_t last = e.size() - 1;

  double tail = 0.0;
  const std::size_t mid = last / 2;
  if (e[last] > 0.0 && e[mid] > 0.0 && last > mid) {
    tail = std::pow(e[last] / e[mid], 1.0 / static_cast<double>(last - mid));
  }
  if (tail >= 1.0) {
    std::ostringstream msg;
    msg << "estimated decay rate " << tail << " is not below 1";
    throw StabilityEstimationError(msg.str());
  }

  StabilityEnvelope best{envelope_constant(e, tail), tail};
  double best_score = best.c_phi / (1.0 - best.lambda);
  constexpr int kCandidates = 2000;
  for (int j = 1; j < kCandidates; ++j) {
    const double lambda = tail + (1.0 - tail) * j / kCandidates;
    const double c = envelope_constant(e, lambda);
    const double score = c / (1.0 - lambda);
    if (score < best_score) {
      best = {c, lambda};
      best_score = score;
    }
  }
  if (!std::isfinite(best_score)) {
    throw StabilityEstimationError("no finite exponential envelope fits the rollouts");
  }
  return best;
}

std::vector<double> worst_ratio_profile(const TrackingController& ctrl,
                                        std::span<const StateReferenceSample> samples,
                                        int horizon) {
  std::vector<double> worst(static_cast<std::size_t>(horizon) + 1, 0.0);
  worst[0] = 1.0;
  for (const auto& s : samples) {
    const Vec h = ctrl.h(s.v);
    const double d0 = (s.x - h).norm();
    if (d0 < 1e-6) continue;
    Vec x = s.x;
    for (int t = 1; t <= horizon; ++t) {
      x = ctrl.closed_loop(x, s.v);
      const double r = (x - h).norm() / d0;
      if (!std::isfinite(r)) {
        throw StabilityEstimationError("closed-loop rollout diverged");
      }
      worst[static_cast<std::size_t>(t)] = std::max(worst[static_cast<std::size_t>(t)], r);
    }
  }
  return worst;
}

ConverseLyapunov::ConverseLyapunov(std::shared_ptr<const TrackingController> ctrl,
                                   StabilityEnvelope env, int horizon)
    : ctrl_(std::move(ctrl)), env_(env), horizon_(horizon) {
  if (horizon_ < 1) throw DomainError("converse Lyapunov horizon must be positive");
}

double ConverseLyapunov::evaluate(const Vec& x, double v) const {
  const Vec h = ctrl_->h(v);
  Vec xi = x;
  double sum = (xi - h).norm();
  for (int i = 1; i < horizon_; ++i) {
    xi = ctrl_->closed_loop(xi, v);
    sum += (xi - h).norm();
  }
  return sum;
}

double ConverseLyapunov::lambda3() const {
  return 1.0 - env_.c_phi * std::pow(env_.lambda, horizon_);
}

int converse_horizon(const StabilityEnvelope& env, double margin) {
  if (!(env.lambda >= 0.0 && env.lambda < 1.0)) {
    throw StabilityEstimationError("decay rate must lie in [0, 1)");
  }
  if (!(env.c_phi >= 1.0) || !std::isfinite(env.c_phi)) {
    throw StabilityEstimationError("overshoot constant must be finite and at least 1");
  }
  int N = 1;
  double bound = env.c_phi * env.lambda;
  while (!(bound < margin)) {
    ++N;
    bound *= env.lambda;
    if (N > 10000000) throw StabilityEstimationError("converse horizon too long");
  }
  return N;
}

ConverseLyapunov build_converse_lyapunov(std::shared_ptr<const TrackingController> ctrl,
                                         const StabilityEnvelope& env, double margin) {
  return ConverseLyapunov(std::move(ctrl), env, converse_horizon(env, margin));
}

}  // namespace ocorg
