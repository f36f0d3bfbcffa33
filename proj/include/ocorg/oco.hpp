#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ocorg/tracking.hpp"
#include "ocorg/types.hpp"

namespace ocorg {

/// Time-varying stage costs L_t(x, u).
class CostSchedule {
 public:
  virtual ~CostSchedule() = default;

  virtual double stage_cost(int t, const Vec& x, const Vec& u) const = 0;
  /// Gradients of L_t with respect to x and u.
  virtual void stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx, Vec& gu) const = 0;
  /// Called once r_t is committed, before L_t is used. Adversarial schedules
  /// build L_t from it; the default ignores it.
  virtual void observe_reference(int /*t*/, double /*r*/) {}
};

/// Reactor cost q_t (c - cbar_t)^2 + u^2 with a sinusoidal weight and a
/// piecewise-linear target concentration.
struct CstrCostParams {
  double q_offset = 150.0;
  double q_amplitude = 100.0;
  /// Sine period in steps.
  double q_period = 2400.0;
  /// (step, cbar) breakpoints, sorted by step; held constant outside.
  std::vector<std::pair<double, double>> cbar_points = {
      {0.0, 0.27}, {900.0, 0.65}, {1800.0, 0.65}, {2400.0, 0.30}};
};

class CstrCostSchedule final : public CostSchedule {
 public:
  explicit CstrCostSchedule(CstrCostParams params = {});
  /// Constant weight and target.
  static CstrCostSchedule constant(double q, double cbar);

  double q(int t) const;
  double cbar(int t) const;

  double stage_cost(int t, const Vec& x, const Vec& u) const override;
  void stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx, Vec& gu) const override;

  const CstrCostParams& params() const { return params_; }

 private:
  CstrCostParams params_;
};

/// Costs on the input register: (u - a_t)^2 + w (u - u_{t-1})^2, where u_{t-1}
/// is the last block of the register state and
/// a_t = offset + amplitude sin(2 pi t / period).
struct SwitchingCostParams {
  double offset = 0.0;
  double amplitude = 0.5;
  double period = 200.0;
  double weight = 1.0;
};

class SwitchingCost final : public CostSchedule {
 public:
  explicit SwitchingCost(SwitchingCostParams params = {});

  double target(int t) const;
  double stage_cost(int t, const Vec& x, const Vec& u) const override;
  void stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx, Vec& gu) const override;

 private:
  SwitchingCostParams params_;
};

/// L_t(x, u) = |x - h(r_t)|^2 + |u - u_ss(r_t)|^2, built after r_t is seen.
/// Evaluating L_t before r_t is observed throws CausalityError.
class AdversarialCost final : public CostSchedule {
 public:
  AdversarialCost(std::shared_ptr<const SteadyStateMap> ss, int horizon);

  double stage_cost(int t, const Vec& x, const Vec& u) const override;
  void stage_gradient(int t, const Vec& x, const Vec& u, Vec& gx, Vec& gu) const override;
  void observe_reference(int t, double r) override;

 private:
  double reference(int t) const;

  std::shared_ptr<const SteadyStateMap> ss_;
  std::vector<double> r_;
};

/// L^s_t(v) = L_t(h(v), u_ss(v)) and its derivative by the chain rule.
class SteadyStateCost {
 public:
  SteadyStateCost(std::shared_ptr<const CostSchedule> costs,
                  std::shared_ptr<const SteadyStateMap> ss);

  double eval(int t, double v) const;
  double grad(int t, double v) const;

  const SteadyStateMap& steady_state() const { return *ss_; }
  const CostSchedule& costs() const { return *costs_; }
  const ReferenceWindow& window() const { return ss_->window(); }

 private:
  std::shared_ptr<const CostSchedule> costs_;
  std::shared_ptr<const SteadyStateMap> ss_;
};

/// Access to revealed steady-state costs. At time t only indices < t may be
/// read; any other read throws CausalityError.
class RevealedCosts {
 public:
  explicit RevealedCosts(const SteadyStateCost& costs, bool keep_log = false);

  void advance_to(int t) { now_ = t; }
  int now() const { return now_; }

  double value(int index, double v);
  double gradient(int index, double v);

  std::size_t reads() const { return reads_; }
  /// Largest index - now over all reads; negative when every read was causal.
  int max_lead() const { return max_lead_; }
  /// (now, index) per read, if logging was requested.
  const std::vector<std::pair<int, int>>& log() const { return log_; }

 private:
  void record(int index);

  const SteadyStateCost& costs_;
  int now_ = 0;
  std::size_t reads_ = 0;
  int max_lead_ = -1;
  bool keep_log_;
  std::vector<std::pair<int, int>> log_;
};

/// Global minimizer of f over the window: a uniform scan, golden-section
/// refinement of the best bracket to width 1e-10, then bisection on the sign
/// of df until |df| < grad_tol where the bracket allows it.
double minimize_on_window(const std::function<double(double)>& f,
                          const std::function<double(double)>& df, const ReferenceWindow& w,
                          double grad_tol = 1e-9, int scan_points = 2001);

/// eta_t = argmin over the window of L^s_t.
double benchmark_eta(const SteadyStateCost& costs, int t, double grad_tol = 1e-9);

/// Projected gradient step clamp(r_prev - step * grad_prev). Throws
/// NumericalError on a non-finite gradient.
double ogd_step(double r_prev, double grad_prev, double step, const ReferenceWindow& w);

/// r_t = eta_{t-1} from the revealed cost at index t-1.
double prev_opt_step(int t, RevealedCosts& costs, const ReferenceWindow& w,
                     double grad_tol = 1e-9);

enum class OcoKind { kOgd, kPrevOpt, kScripted };

struct OcoOptions {
  OcoKind kind = OcoKind::kOgd;
  double step_size = 2.5e-4;
  double grad_tol = 1e-9;
  /// References for the scripted kind; entry t - 1 is used at time t >= 1 and the
  /// last entry is held afterwards.
  std::vector<double> script;
};

/// r_t = A(I_t). Returns the configured r_0 at t = 0.
class OcoAlgorithm {
 public:
  OcoAlgorithm(OcoOptions options, ReferenceWindow window, double r0);

  double propose(int t, RevealedCosts& costs);
  double r_prev() const { return r_prev_; }
  const OcoOptions& options() const { return options_; }

 private:
  OcoOptions options_;
  ReferenceWindow window_;
  double r_prev_;
};

/// Constants of the Q-linear regret and path-length bounds. The literal
/// forms use c_kappa = kappa / (1 - kappa) on the optimizer path length; the
/// patched forms use 1 / (1 - kappa) there, which is what the rearranged
/// inequality actually yields.
struct Prop1Constants {
  double c_kappa = 0.0;
  double c_oco0 = 0.0;
  double c_oco = 0.0;
  double c_pl0 = 0.0;
  double c_pl = 0.0;
  double c_oco_patched = 0.0;
  double c_pl_patched = 0.0;
};

/// Throws DomainError unless kappa in [0, 1), l_s > 0 and S positive definite.
Prop1Constants prop1_constants(double l_s, double kappa, const Mat& S);

/// Largest one-step ratio |r' - eta| / |r - eta| of projected gradient descent
/// over `probes` references spread across the window, for a fixed cost.
double ogd_contraction(const std::function<double(double)>& f,
                       const std::function<double(double)>& df, const ReferenceWindow& w,
                       double step, int probes = 50);

}  // namespace ocorg
