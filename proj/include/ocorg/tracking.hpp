#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ocorg/plant.hpp"
#include "ocorg/types.hpp"

namespace ocorg {

/// Parameterization v -> (h(v), u_ss(v)) of the plant's steady states by a
/// scalar reference, together with the admissible reference window.
class SteadyStateMap {
 public:
  virtual ~SteadyStateMap() = default;

  virtual Vec state(double v) const = 0;
  virtual Vec input(double v) const = 0;
  /// dh/dv. Default: central difference with step 1e-6.
  virtual Vec state_derivative(double v) const;
  /// du_ss/dv. Default: central difference with step 1e-6.
  virtual Vec input_derivative(double v) const;

  const ReferenceWindow& window() const { return window_; }

 protected:
  explicit SteadyStateMap(ReferenceWindow window) : window_(window) {}

 private:
  ReferenceWindow window_;
};

/// Reactor steady state at temperature theta: c_ss = 1/(1 + theta_f k e^{-M/theta})
/// and the coolant rate that zeroes dtheta/dt. Throws DomainError at
/// theta = x_c, where the coolant term cannot balance the reaction.
std::pair<Eigen::Vector2d, double> solve_steady_state(double theta, const CstrParams& params);

class CstrSteadyState final : public SteadyStateMap {
 public:
  explicit CstrSteadyState(CstrParams params = {}, ReferenceWindow window = {0.4, 0.85});

  Vec state(double v) const override;
  Vec input(double v) const override;
  Vec state_derivative(double v) const override;
  Vec input_derivative(double v) const override;

 private:
  CstrParams params_;
};

/// h(v) = H v, u_ss(v) = U v.
class AffineSteadyState final : public SteadyStateMap {
 public:
  AffineSteadyState(Vec H, Vec U, ReferenceWindow window);

  Vec state(double v) const override { return H_ * v; }
  Vec input(double v) const override { return U_ * v; }
  Vec state_derivative(double) const override { return H_; }
  Vec input_derivative(double) const override { return U_; }

 private:
  Vec H_;
  Vec U_;
};

struct LqrWeights {
  Mat Q;
  Mat R;

  static LqrWeights identity(int n, int m) {
    return {Mat::Identity(n, n), Mat::Identity(m, m)};
  }
};

/// Feedback gain K (u = u_ss + K (x - h)) and the matching quadratic weight P.
struct GainPoint {
  Mat K;
  Mat P;
};

/// Discrete-time LQR by Riccati value iteration in doubling form (step k holds
/// the 2^k-th iterate), converged when successive iterates differ by less
/// than `tol` in max-norm, scaled by max(1, |P|_max). Throws SynthesisError
/// otherwise.
GainPoint solve_dlqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                     int max_iterations = 10000, double tol = 1e-12);

double spectral_radius(const Mat& A);

/// LQR gain for the Jacobian linearization at (h(v), u_ss(v)). Throws
/// SynthesisError naming v if the Riccati iteration stalls or the closed loop
/// is not Schur.
GainPoint synthesize_gain(double v, const Plant& plant, const SteadyStateMap& ss,
                          const LqrWeights& weights);

/// Gains on a sorted reference grid, linearly interpolated in between. P is
/// symmetrized after interpolation.
class GainSchedule {
 public:
  GainSchedule(std::vector<double> grid, std::vector<GainPoint> points);

  static GainSchedule synthesize(const Plant& plant, const SteadyStateMap& ss,
                                 const LqrWeights& weights, int points = 181);

  void interpolate(double v, Mat& K, Mat& P) const;
  GainPoint at(double v) const;

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<GainPoint>& points() const { return points_; }

  /// Bracketing node index i (grid[i] <= v <= grid[i+1]) and weight of i+1.
  std::pair<std::size_t, double> locate(double v) const;

 private:
  std::vector<double> grid_;
  std::vector<GainPoint> points_;
};

/// g(x, v) = u_ss(v) + K(v) (x - h(v)) applied to a plant, with the quadratic
/// Lyapunov candidate V(x, v) = |x - h(v)|^2_{P(v)}.
class TrackingController {
 public:
  TrackingController(std::shared_ptr<const Plant> plant,
                     std::shared_ptr<const SteadyStateMap> steady_state,
                     GainSchedule schedule);

  const Plant& plant() const { return *plant_; }
  const SteadyStateMap& steady_state() const { return *ss_; }
  std::shared_ptr<const Plant> plant_ptr() const { return plant_; }
  std::shared_ptr<const SteadyStateMap> steady_state_ptr() const { return ss_; }
  const GainSchedule& schedule() const { return schedule_; }
  const ReferenceWindow& window() const { return ss_->window(); }

  Vec h(double v) const { return ss_->state(v); }
  Vec input(const Vec& x, double v) const;
  Vec closed_loop(const Vec& x, double v) const;
  double lyapunov(const Vec& x, double v) const;

  Mat gain(double v) const;
  Mat lyapunov_weight(double v) const;

 private:
  std::shared_ptr<const Plant> plant_;
  std::shared_ptr<const SteadyStateMap> ss_;
  GainSchedule schedule_;
};

/// Phi(x, v, 0..steps) under the closed loop with constant reference.
/// Plant domain errors are rethrown with the failing step index.
std::vector<Vec> rollout_constant_reference(const TrackingController& ctrl, const Vec& x,
                                            double v, int steps);

/// |Phi(x,v,t) - h(v)| <= c_phi lambda^t |x - h(v)|.
struct StabilityEnvelope {
  double c_phi = 1.0;
  double lambda = 0.0;
};

/// Fits (c_phi, lambda) to the worst observed ratio
/// worst_ratio[t] = max_i |Phi_i(t) - h| / |x_i - h| (worst_ratio[0] = 1).
/// lambda is searched above the tail decay rate of the ratio sequence and
/// chosen to minimize c_phi / (1 - lambda); c_phi >= 1.
StabilityEnvelope fit_exponential_envelope(std::span<const double> worst_ratio);

struct StateReferenceSample {
  Vec x;
  double v = 0.0;
};

/// Worst normalized deviation over constant-reference rollouts of length
/// `horizon` started at each sample. Samples with x = h(v) are skipped.
std::vector<double> worst_ratio_profile(const TrackingController& ctrl,
                                        std::span<const StateReferenceSample> samples,
                                        int horizon);

/// V(x, v) = sum_{i < N} |Phi(x, v, i) - h(v)|, a Lyapunov function with
/// lambda1 = 1, lambda2 = c_phi/(1-lambda), lambda3 = 1 - c_phi lambda^N.
class ConverseLyapunov {
 public:
  ConverseLyapunov(std::shared_ptr<const TrackingController> ctrl, StabilityEnvelope env,
                   int horizon);

  double evaluate(const Vec& x, double v) const;

  int horizon() const { return horizon_; }
  const StabilityEnvelope& envelope() const { return env_; }
  double lambda1() const { return 1.0; }
  double lambda2() const { return env_.c_phi / (1.0 - env_.lambda); }
  double lambda3() const;

 private:
  std::shared_ptr<const TrackingController> ctrl_;
  StabilityEnvelope env_;
  int horizon_;
};

/// Chooses N as the smallest N >= 1 with c_phi lambda^N < margin. The default
/// margin 1/2 leaves headroom over the bare requirement c_phi lambda^N < 1.
/// Throws StabilityEstimationError if lambda >= 1 or c_phi < 1.
ConverseLyapunov build_converse_lyapunov(std::shared_ptr<const TrackingController> ctrl,
                                         const StabilityEnvelope& env, double margin = 0.5);

/// Smallest N >= 1 with c_phi lambda^N < margin.
int converse_horizon(const StabilityEnvelope& env, double margin);

}  // namespace ocorg
