#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocorg/governor.hpp"
#include "ocorg/oco.hpp"
#include "ocorg/plant.hpp"
#include "ocorg/safeset.hpp"
#include "ocorg/tracking.hpp"

namespace ocorg {

struct StepRecord {
  int t = 0;
  Vec x;
  Vec u;
  double r = 0.0;
  double v = 0.0;
  double eta = 0.0;
  double beta = 1.0;
  /// |v_t - v_{t-1}| on restricted steps, NaN on pass-through steps.
  double alpha = 0.0;
  double stage_cost = 0.0;
  double ls_r = 0.0;
  double ls_v = 0.0;
  double ls_eta = 0.0;
  /// Quadratic V(x_t, v_t) and the set level at v_t.
  double V = 0.0;
  double level = 0.0;
  /// Worst slack of (x_t, u_t) in the raw constraint box.
  double margin = 0.0;
};

/// Per-step records of one run and the regret sums over t = 0..T-1, folded in
/// ascending t with compensated summation.
class RegretLedger {
 public:
  void append(StepRecord rec);

  const std::vector<StepRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// sum L_t(x_t, u_t) - sum L^s_t(eta_t).
  double regret() const { return stage_.value() - ls_eta_.value(); }
  /// sum L^s_t(r_t) - sum L^s_t(eta_t).
  double oco_regret() const { return ls_r_.value() - ls_eta_.value(); }
  /// sum_{t>=1} |r_t - r_{t-1}|.
  double path_length() const { return path_.value(); }
  /// sum_{t>=1} |eta_t - eta_{t-1}|.
  double eta_path_length() const { return eta_path_.value(); }
  double stage_cost_sum() const { return stage_.value(); }
  int violations() const { return violations_; }

 private:
  std::vector<StepRecord> records_;
  CompensatedSum stage_;
  CompensatedSum ls_r_;
  CompensatedSum ls_eta_;
  CompensatedSum path_;
  CompensatedSum eta_path_;
  int violations_ = 0;
};

/// Everything a closed-loop run needs. The cost schedule is mutable because
/// adversarial schedules depend on the committed references.
struct Scenario {
  std::shared_ptr<const TrackingController> ctrl;
  std::shared_ptr<const SafeSet> set;
  BoxConstraints box;
  std::shared_ptr<CostSchedule> costs;
  GovernorKind governor = GovernorKind::kScalar;
  OcoOptions oco;
  int T = 2400;
  Vec x0;
  double r0 = 0.0;
};

/// A sub-module failure inside the loop, with the step and state at failure.
class RunError : public std::runtime_error {
 public:
  RunError(const std::string& what, int step, Vec x, double r, double v);
  int step;
  Vec x;
  double r;
  double v;
};

struct RunResult {
  RegretLedger ledger;
  GovernorState governor;
  std::size_t cost_reads = 0;
  int max_cost_lead = -1;
  /// Wall time per step of the OCO proposal and of the governor, seconds.
  std::vector<double> oco_seconds;
  std::vector<double> rg_seconds;
};

/// Algorithm 1 for t = 0..T-1: propose r_t from costs before t, govern to
/// v_t, apply u_t = g(x_t, v_t), step the plant. Throws RunError.
RunResult run_closed_loop(const Scenario& sc);

/// Samples (x, v) with V(x, v) <= level(v) (V <= 1 where the level is
/// unbounded). A fraction of the samples is placed on the level boundary.
std::vector<StateReferenceSample> sample_safe_set(const SafeSet& set, int count,
                                                  std::mt19937_64& rng,
                                                  double boundary_fraction = 0.25);

struct CertificateOptions {
  std::uint64_t seed = 1;
  int envelope_samples = 1000;
  int envelope_horizon = 1500;
  double converse_margin = 0.5;
  /// Reference grid points for l_h, and references x directions for l_f, l_g.
  int lipschitz_h_points = 100;
  int lipschitz_v_points = 20;
  int lipschitz_directions = 8;
  /// Grid points per axis of the box used for the stage-cost constant l.
  int cost_grid = 11;
  int cost_horizon = 2400;
  /// Synthetic governor queries for the contraction envelope.
  int governor_probes = 2000;
};

/// Estimated constants and the bound constants derived from them.
struct Certificate {
  double l = 0.0, l_f = 0.0, l_g = 0.0, l_h = 0.0, l_s = 0.0;
  double c_phi = 1.0, lambda = 0.0;
  int N = 1;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0, lambda_tilde = 0.0;
  double l_V = 0.0;
  double lambda_bar = 0.0;
  double V_bar = 0.0;
  double d_window = 0.0;
  double delta = 0.0;
  double mu = 0.0;
  /// Contraction window length (named to avoid the reactor's activation energy).
  double window_M = 0.0;
  double epsilon = 1.0;
  bool best_effort = true;
  double c_PL = 0.0;
  double c_lambda = 0.0;
  double c_epsilon = 0.0;
  /// Smallest sampled one-step decrease ratio gap 1 - V(f_g)/V of the quadratic V.
  double lambda_dec = 0.0;
  std::shared_ptr<const ConverseLyapunov> converse;
  ContractionEnvelope rho;

  /// c_0 for an initial state x0, initial reference v0 and first optimum eta0.
  double c0(const Vec& x0, const Vec& h_eta0, double v0, double eta0) const;
};

struct CertificateInputs {
  std::shared_ptr<const TrackingController> ctrl;
  std::shared_ptr<const SafeSet> set;
  /// Box on which the stage costs are Lipschitz (finite bounds).
  BoxConstraints cost_box;
  std::shared_ptr<const CostSchedule> costs;
  Vec x0;
};

/// Throws StabilityEstimationError if the fitted decay rate is not below 1.
Certificate estimate_certificate(const CertificateInputs& in, const CertificateOptions& opt = {});

/// Derives the converse-Lyapunov, window and regret-bound constants from fitted stability and
/// Lipschitz constants. Exposed for plug-in checks.
void derive_certificate_constants(Certificate& c, double x0_gap_max);

/// a * b with 0 * inf = 0, for bound terms whose multiplier may overflow.
double bound_term(double coefficient, double amount);

struct InequalityReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  bool holds = false;
  /// "holds", "violation", or "diagnostic" when a failure rests on best-effort
  /// constants.
  std::string status;
};

InequalityReport verify_theorem1(const RegretLedger& ledger, const Certificate& cert,
                                 const SteadyStateMap& ss);

/// Q-linear bounds for R^OCO and R^PL with the patched path coefficient, the
/// literal printed bound without l_s on the path term, and the corollary
/// bound on R_T.
std::vector<InequalityReport> verify_prop1(const RegretLedger& ledger, const Certificate& cert,
                                           const SteadyStateMap& ss, double kappa);

/// Largest |r_t - eta_{t-1}| / |r_{t-1} - eta_{t-1}| over the run.
double measured_kappa(const RegretLedger& ledger);

/// OGD contraction over a q x cbar grid of constant reactor costs.
double ogd_kappa_grid(std::shared_ptr<const SteadyStateMap> ss, double step, int q_points = 20,
                      int cbar_points = 20);

struct AdversarialResult {
  double regret = 0.0;
  double oco_regret = 0.0;
  double stage_sum = 0.0;
  RegretLedger ledger;
};

/// Runs the loop against costs built from each committed reference, with a
/// pass-through safe set.
AdversarialResult adversarial_lower_bound(std::shared_ptr<const TrackingController> ctrl,
                                          const OcoOptions& oco, int T, double r0,
                                          const Vec& x0);

struct OcoMResult {
  RunResult run;
  Certificate cert;
  InequalityReport bound;
  /// max |L^s_t(nu) - L_t(nu, ..., nu)| over sampled (t, nu).
  double diagonal_mismatch = 0.0;
};

/// Register plant with memory p (m = 1 only), pass-through feedback and
/// governor, switching costs, input box u in window.
OcoMResult oco_m_run(int m, int p, const SwitchingCostParams& costs, const OcoOptions& oco,
                     int T, ReferenceWindow input_box, double r0, std::uint64_t seed = 1);

struct LemmaReport {
  std::size_t windows = 0;
  std::size_t recursion_failures = 0;
  std::size_t vbar_failures = 0;
  double worst_recursion_margin = 0.0;
  int worst_tau1 = -1;
  int worst_tau2 = -1;
  double max_V = 0.0;
  /// Largest product over windows of length window_M + 1 of (1 - rho(alpha_i)),
  /// with rho(alpha) = epsilon on pass-through steps. NaN if window_M is not
  /// finite or exceeds the run.
  double worst_rho_product = 0.0;
};

/// Lyapunov drift recursion on all windows up to `max_window` steps with the
/// converse V, the V-bar bound, and the contraction products over window_M + 1 steps.
LemmaReport lemma_diagnostics(const RegretLedger& ledger, const Certificate& cert,
                              int max_window = 50, double slack = 1e-9);

}  // namespace ocorg
