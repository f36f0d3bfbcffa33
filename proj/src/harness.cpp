#include "ocorg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ocorg/errors.hpp"

namespace ocorg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Unit directions: both signs in 1-D, a circle in 2-D, axes otherwise.
std::vector<Vec> probe_directions(int n, int count) {
  std::vector<Vec> dirs;
  if (n == 2) {
    for (int j = 0; j < count; ++j) {
      const double a = 2.0 * std::numbers::pi * j / count;
      Vec d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
    return dirs;
  }
  for (int i = 0; i < n; ++i) {
    dirs.push_back(Vec::Unit(n, i));
    dirs.push_back(-Vec::Unit(n, i));
  }
  return dirs;
}

// d with d' P d = |z|^2, i.e. d = L^{-T} z for P = L L'.
Vec weighted_offset(const Mat& P, const Vec& z) {
  const Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(P)};
  return Vec(llt.matrixU().solve(Eigen::VectorXd(z)));
}

double effective_level(const SafeSet& set, double v) {
  const double level = set.level(v);
  return std::isfinite(level) ? level : 1.0;
}

double max_pairwise_quotient(const std::vector<Vec>& inputs, const std::vector<Vec>& outputs) {
  double best = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = i + 1; j < inputs.size(); ++j) {
      const double dx = (inputs[i] - inputs[j]).norm();
      if (dx <= 1e-12) continue;
      best = std::max(best, (outputs[i] - outputs[j]).norm() / dx);
    }
  }
  return best;
}

}  // namespace

void RegretLedger::append(StepRecord rec) {
  stage_.add(rec.stage_cost);
  ls_r_.add(rec.ls_r);
  ls_eta_.add(rec.ls_eta);
  if (!records_.empty()) {
    path_.add(std::abs(rec.r - records_.back().r));
    eta_path_.add(std::abs(rec.eta - records_.back().eta));
  }
  if (!(rec.margin >= 0.0)) ++violations_;
  records_.push_back(std::move(rec));
}

RunError::RunError(const std::string& what, int step_, Vec x_, double r_, double v_)
    : std::runtime_error(what), step(step_), x(std::move(x_)), r(r_), v(v_) {}

RunResult run_closed_loop(const Scenario& sc) {
  if (sc.T < 1) throw DomainError("run length must be at least 1");
  const TrackingController& ctrl = *sc.ctrl;
  const SafeSet& set = *sc.set;
  const SteadyStateCost ls(sc.costs, ctrl.steady_state_ptr());
  RevealedCosts revealed(ls);
  OcoAlgorithm alg(sc.oco, ctrl.window(), sc.r0);

  RunResult out;
  out.governor = initialize_governor(sc.x0, sc.r0, set);
  out.oco_seconds.reserve(static_cast<std::size_t>(sc.T));
  out.rg_seconds.reserve(static_cast<std::size_t>(sc.T));

  Vec x = sc.x0;
  double r = kNaN;
  double v = kNaN;
  for (int t = 0; t < sc.T; ++t) {
    try {
      revealed.advance_to(t);
      auto t0 = std::chrono::steady_clock::now();
      r = alg.propose(t, revealed);
      out.oco_seconds.push_back(seconds_since(t0));
      sc.costs->observe_reference(t, r);
      const double eta = benchmark_eta(ls, t);

      t0 = std::chrono::steady_clock::now();
      v = apply_governor(sc.governor, x, r, out.governor, set);
      out.rg_seconds.push_back(seconds_since(t0));

      const Vec u = ctrl.input(x, v);
      StepRecord rec;
      rec.t = t;
      rec.x = x;
      rec.u = u;
      rec.r = r;
      rec.v = v;
      rec.eta = eta;
      rec.beta = out.governor.beta.back();
      rec.alpha = out.governor.alpha.back();
      rec.stage_cost = sc.costs->stage_cost(t, x, u);
      rec.ls_r = ls.eval(t, r);
      rec.ls_v = ls.eval(t, v);
      rec.ls_eta = ls.eval(t, eta);
      rec.V = ctrl.lyapunov(x, v);
      rec.level = set.level(v);
      rec.margin = sc.box.worst_margin(x, u);
      out.ledger.append(std::move(rec));
      x = ctrl.plant().step(x, u);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "step " << t << " (x = [" << x.transpose() << "], r = " << r << ", v = " << v
          << "): " << e.what();
      throw RunError(msg.str(), t, x, r, v);
    }
  }
  out.cost_reads = revealed.reads();
  out.max_cost_lead = revealed.max_lead();
  return out;
}

std::vector<StateReferenceSample> sample_safe_set(const SafeSet& set, int count,
                                                  std::mt19937_64& rng,
                                                  double boundary_fraction) {
  const TrackingController& ctrl = set.controller();
  const int n = ctrl.plant().state_dim();
  const ReferenceWindow& w = set.window();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss;
  std::vector<StateReferenceSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const double v = w.lo + (w.hi - w.lo) * unif(rng);
    Vec z(n);
    for (int k = 0; k < n; ++k) z(k) = gauss(rng);
    z /= z.norm();
    const bool boundary = unif(rng) < boundary_fraction;
    const double frac = boundary ? 1.0 : std::pow(unif(rng), 1.0 / n);
    double scale = std::sqrt(effective_level(set, v)) * frac * (1.0 - 1e-9);
    const Vec h = ctrl.h(v);
    const Vec d = weighted_offset(ctrl.lyapunov_weight(v), z);
    Vec x = h + d * scale;
    while (!set.contains(x, v) && scale > 0.0) {
      scale *= 0.999;
      x = h + d * scale;
    }
    out.push_back({x, v});
  }
  return out;
}

double Certificate::c0(const Vec& x0, const Vec& h_eta0, double v0, double eta0) const {
  const double gap = (x0 - h_eta0).norm() + bound_term(l_h, std::abs(v0 - eta0));
  return bound_term(c_lambda * l * (1.0 + l_g), gap);
}

double bound_term(double coefficient, double amount) {
  if (amount == 0.0 || coefficient == 0.0) return 0.0;
  return coefficient * amount;
}

void derive_certificate_constants(Certificate& c, double x0_gap_max) {
  c.lambda1 = 1.0;
  c.lambda2 = c.c_phi / (1.0 - c.lambda);
  c.lambda3 = 1.0 - c.c_phi * std::pow(c.lambda, c.N);
  c.lambda_tilde = 1.0 - c.lambda3 / c.lambda2;

  double geometric = 0.0;
  double power = 1.0;
  for (int k = 1; k <= c.N - 1; ++k) {
    power *= c.l_f;
    geometric += power;
  }
  c.l_V = c.N * c.l_h + bound_term(static_cast<double>(c.N - 1), geometric);

  c.lambda_bar = c.lambda2 * x0_gap_max;
  c.V_bar = c.lambda_bar + bound_term(c.l_V, c.d_window) / (1.0 - c.lambda_tilde);
  c.mu = c.lambda1 * c.delta;

  const double target = c.lambda1 * c.mu / (4.0 * c.lambda2);
  if (!std::isfinite(c.V_bar)) {
    c.window_M = kInf;
  } else if (c.V_bar <= target || c.lambda_tilde == 0.0) {
    c.window_M = 1.0;
  } else {
    double M = std::max(1.0, std::ceil(std::log(target / c.V_bar) / std::log(c.lambda_tilde)));
    while (std::pow(c.lambda_tilde, M) * c.V_bar > target) M += 1.0;
    while (M > 1.0 && std::pow(c.lambda_tilde, M - 1.0) * c.V_bar <= target) M -= 1.0;
    c.window_M = M;
  }

  if (c.rho.empty()) {
    c.epsilon = 1.0;
    c.best_effort = false;
  } else {
    const double a1 = c.lambda1 * c.mu / (4.0 * c.lambda2 * c.l_V * c.window_M);
    const double a2 = c.mu / (2.0 * c.lambda2 * c.l_h);
    c.epsilon = std::min(c.rho(a1), c.rho(a2));
    c.best_effort = true;
  }

  c.c_lambda = c.lambda2 / (c.lambda1 * (1.0 - c.lambda_tilde));
  c.c_epsilon = (2.0 * c.window_M + c.epsilon) / c.epsilon;
  c.c_PL = c.l_s * c.window_M / c.epsilon +
           c.l * (1.0 + c.l_g) * c.l_V * (2.0 * c.window_M + c.epsilon) /
               (c.epsilon * c.lambda1 * (1.0 - c.lambda_tilde));
  if (std::isnan(c.c_PL)) c.c_PL = kInf;
}

Certificate estimate_certificate(const CertificateInputs& in, const CertificateOptions& opt) {
  const TrackingController& ctrl = *in.ctrl;
  const SafeSet& set = *in.set;
  const ReferenceWindow& w = ctrl.window();
  const int n = ctrl.plant().state_dim();
  Certificate c;
  c.d_window = w.diameter();

  {
    std::vector<Vec> vs;
    std::vector<Vec> hs;
    for (double v : w.grid(opt.lipschitz_h_points)) {
      vs.push_back(Vec::Constant(1, v));
      hs.push_back(ctrl.h(v));
    }
    c.l_h = max_pairwise_quotient(vs, hs);
  }

  {
    std::vector<Vec> points;
    std::vector<Vec> fg;
    std::vector<Vec> gs;
    const auto dirs = probe_directions(n, opt.lipschitz_directions);
    for (double v : w.grid(opt.lipschitz_v_points)) {
      const Vec h = ctrl.h(v);
      const Mat P = ctrl.lyapunov_weight(v);
      const double radius = std::sqrt(effective_level(set, v)) * (1.0 - 1e-9);
      std::vector<Vec> xs{h};
      for (double frac : {0.5, 1.0}) {
        for (const Vec& z : dirs) xs.push_back(h + weighted_offset(P, z) * (radius * frac));
      }
      for (const Vec& x : xs) {
        if (!set.contains(x, v)) continue;
        Vec p(n + 1);
        p << x, v;
        points.push_back(p);
        fg.push_back(ctrl.closed_loop(x, v));
        gs.push_back(ctrl.input(x, v));
      }
    }
    c.l_f = max_pairwise_quotient(points, fg);
    c.l_g = max_pairwise_quotient(points, gs);
  }

  if (in.costs) {
    const BoxConstraints& box = in.cost_box;
    const int nx = static_cast<int>(box.x_lo.size());
    const int nu = static_cast<int>(box.u_lo.size());
    const int dims = nx + nu;
    const int g = std::max(opt.cost_grid, 2);
    std::vector<Vec> corners;
    std::vector<int> idx(static_cast<std::size_t>(dims), 0);
    while (true) {
      Vec x(nx);
      Vec u(nu);
      for (int k = 0; k < dims; ++k) {
        const double s = static_cast<double>(idx[static_cast<std::size_t>(k)]) / (g - 1);
        if (k < nx) {
          x(k) = box.x_lo(k) + s * (box.x_hi(k) - box.x_lo(k));
        } else {
          u(k - nx) = box.u_lo(k - nx) + s * (box.u_hi(k - nx) - box.u_lo(k - nx));
        }
      }
      Vec xu(dims);
      xu << x, u;
      corners.push_back(xu);
      int k = 0;
      while (k < dims && ++idx[static_cast<std::size_t>(k)] == g) {
        idx[static_cast<std::size_t>(k)] = 0;
        ++k;
      }
      if (k == dims) break;
    }
    Vec gx, gu;
    for (int t = 0; t < opt.cost_horizon; ++t) {
      for (const Vec& xu : corners) {
        in.costs->stage_gradient(t, xu.head(nx), xu.tail(nu), gx, gu);
        c.l = std::max(c.l, std::sqrt(gx.squaredNorm() + gu.squaredNorm()));
      }
    }
  }
  c.l_s = c.l * (c.l_h + c.l_g + c.l_g * c.l_h);

  std::mt19937_64 rng(opt.seed);
  const auto samples = sample_safe_set(set, opt.envelope_samples, rng, 0.5);
  const auto profile = worst_ratio_profile(ctrl, samples, opt.envelope_horizon);
  const StabilityEnvelope env = fit_exponential_envelope(profile);
  c.c_phi = env.c_phi;
  c.lambda = env.lambda;
  auto converse = std::make_shared<ConverseLyapunov>(
      build_converse_lyapunov(in.ctrl, env, opt.converse_margin));
  c.N = converse->horizon();
  c.converse = converse;

  c.lambda_dec = kInf;
  for (const auto& s : samples) {
    const double V0 = ctrl.lyapunov(s.x, s.v);
    if (V0 < 1e-14) continue;
    c.lambda_dec = std::min(c.lambda_dec, 1.0 - ctrl.lyapunov(ctrl.closed_loop(s.x, s.v), s.v) / V0);
  }
  if (!std::isfinite(c.lambda_dec)) c.lambda_dec = 0.0;

  c.delta = kInf;
  for (double v : ctrl.schedule().grid()) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        Eigen::MatrixXd(ctrl.lyapunov_weight(v)), Eigen::EigenvaluesOnly);
    c.delta = std::min(c.delta, std::sqrt(set.level(v) / es.eigenvalues().maxCoeff()));
  }

  const auto probes = sample_safe_set(set, opt.governor_probes, rng, 0.25);
  std::uniform_real_distribution<double> unif(w.lo, w.hi);
  for (const auto& p : probes) {
    GovernorState st;
    st.v_prev = p.v;
    scalar_rg(p.x, unif(rng), st, set);
    c.rho.add(st.alpha.back(), st.beta.back());
  }

  double gap = 0.0;
  for (double v : w.grid(opt.lipschitz_h_points)) gap = std::max(gap, (in.x0 - ctrl.h(v)).norm());
  derive_certificate_constants(c, gap);
  return c;
}

namespace {

InequalityReport make_report(std::string name, double lhs, double rhs, bool best_effort) {
  InequalityReport rep;
  rep.name = std::move(name);
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.margin = rhs - lhs;
  rep.holds = lhs <= rhs;
  rep.status = rep.holds ? "holds" : (best_effort ? "diagnostic" : "violation");
  return rep;
}

}  // namespace

InequalityReport verify_theorem1(const RegretLedger& ledger, const Certificate& cert,
                                 const SteadyStateMap& ss) {
  const auto& first = ledger.records().front();
  const double c0 = cert.c0(first.x, ss.state(first.eta), first.v, first.eta);
  const double rhs = c0 + ledger.oco_regret() + bound_term(cert.c_PL, ledger.path_length());
  return make_report("theorem1", ledger.regret(), rhs, cert.best_effort);
}

std::vector<InequalityReport> verify_prop1(const RegretLedger& ledger, const Certificate& cert,
                                           const SteadyStateMap& ss, double kappa) {
  const Prop1Constants k = prop1_constants(cert.l_s, kappa, Mat::Identity(1, 1));
  const auto& first = ledger.records().front();
  const double d0 = std::abs(first.r - first.eta);
  const double path = ledger.eta_path_length();
  std::vector<InequalityReport> out;
  out.push_back(make_report("prop1_oco", ledger.oco_regret(),
                            k.c_oco0 * d0 + k.c_oco_patched * path, false));
  out.push_back(make_report("prop1_path_length", ledger.path_length(),
                            k.c_pl0 * d0 + k.c_pl_patched * path, false));
  out.push_back(make_report("prop1_oco_printed", ledger.oco_regret(),
                            cert.l_s * d0 + path / (1.0 - kappa), false));
  const double c0 = cert.c0(first.x, ss.state(first.eta), first.v, first.eta);
  const double rhs = c0 + bound_term(k.c_oco0 + bound_term(cert.c_PL, k.c_pl0), d0) +
                     bound_term(k.c_oco_patched + bound_term(cert.c_PL, k.c_pl_patched), path);
  out.push_back(make_report("corollary1", ledger.regret(), rhs, cert.best_effort));
  return out;
}

double measured_kappa(const RegretLedger& ledger) {
  const auto& rec = ledger.records();
  double kappa = 0.0;
  for (std::size_t t = 1; t < rec.size(); ++t) {
    const double den = std::abs(rec[t - 1].r - rec[t - 1].eta);
    const double num = std::abs(rec[t].r - rec[t - 1].eta);
    if (den < 1e-9) continue;
    kappa = std::max(kappa, num / den);
  }
  return kappa;
}

double ogd_kappa_grid(std::shared_ptr<const SteadyStateMap> ss, double step, int q_points,
                      int cbar_points) {
  double kappa = 0.0;
  const ReferenceWindow qs{50.0, 250.0};
  const ReferenceWindow cs{0.25, 0.65};
  for (double q : qs.grid(q_points)) {
    for (double cbar : cs.grid(cbar_points)) {
      const SteadyStateCost cost(
          std::make_shared<CstrCostSchedule>(CstrCostSchedule::constant(q, cbar)), ss);
      kappa = std::max(kappa, ogd_contraction([&](double v) { return cost.eval(0, v); },
                                              [&](double v) { return cost.grad(0, v); },
                                              ss->window(), step));
    }
  }
  return kappa;
}

namespace {

BoxConstraints unbounded_box(int n, int m) {
  BoxConstraints box;
  box.x_lo = Vec::Constant(n, -kInf);
  box.x_hi = Vec::Constant(n, kInf);
  box.u_lo = Vec::Constant(m, -kInf);
  box.u_hi = Vec::Constant(m, kInf);
  return box;
}

}  // namespace

AdversarialResult adversarial_lower_bound(std::shared_ptr<const TrackingController> ctrl,
                                          const OcoOptions& oco, int T, double r0,
                                          const Vec& x0) {
  Scenario sc;
  sc.ctrl = ctrl;
  sc.set = std::make_shared<SafeSet>(SafeSet::fixed(ctrl, kInf));
  sc.box = unbounded_box(ctrl->plant().state_dim(), ctrl->plant().input_dim());
  sc.costs = std::make_shared<AdversarialCost>(ctrl->steady_state_ptr(), T);
  sc.governor = GovernorKind::kScalar;
  sc.oco = oco;
  sc.T = T;
  sc.x0 = x0;
  sc.r0 = r0;
  AdversarialResult out;
  out.ledger = run_closed_loop(sc).ledger;
  out.regret = out.ledger.regret();
  out.oco_regret = out.ledger.oco_regret();
  out.stage_sum = out.ledger.stage_cost_sum();
  return out;
}

OcoMResult oco_m_run(int m, int p, const SwitchingCostParams& cost_params, const OcoOptions& oco,
                     int T, ReferenceWindow input_box, double r0, std::uint64_t seed) {
  if (m != 1) throw DomainError("only scalar inputs (m = 1) are supported");
  auto plant = std::make_shared<ShiftRegisterPlant>(m, p, Vec::Constant(m * p, r0));
  auto ss = std::make_shared<AffineSteadyState>(Vec::Ones(p), Vec::Ones(1), input_box);
  // Pass-through feedback: K = 0, P solves the Lyapunov equation of the shift.
  const GainPoint gp = solve_dlqr(plant->A(), Mat::Zero(p, 1), Mat::Identity(p, p),
                                  Mat::Identity(1, 1));
  GainSchedule schedule({input_box.lo, input_box.hi}, {gp, gp});
  auto ctrl = std::make_shared<TrackingController>(plant, ss, std::move(schedule));

  BoxConstraints box = unbounded_box(p, 1);
  box.u_lo = Vec::Constant(1, input_box.lo);
  box.u_hi = Vec::Constant(1, input_box.hi);
  const double gamma = compute_gamma(input_box.lo, closed_loop_polytope(box, *ctrl, input_box.lo),
                                     *ctrl);
  auto set = std::make_shared<SafeSet>(SafeSet::fixed(ctrl, gamma));
  auto costs = std::make_shared<SwitchingCost>(cost_params);

  Scenario sc;
  sc.ctrl = ctrl;
  sc.set = set;
  sc.box = box;
  sc.costs = costs;
  sc.governor = GovernorKind::kScalar;
  sc.oco = oco;
  sc.T = T;
  sc.x0 = plant->initial_state();
  sc.r0 = r0;

  OcoMResult out;
  out.run = run_closed_loop(sc);

  CertificateInputs ci;
  ci.ctrl = ctrl;
  ci.set = set;
  ci.cost_box.x_lo = Vec::Constant(p, input_box.lo);
  ci.cost_box.x_hi = Vec::Constant(p, input_box.hi);
  ci.cost_box.u_lo = Vec::Constant(1, input_box.lo);
  ci.cost_box.u_hi = Vec::Constant(1, input_box.hi);
  ci.costs = costs;
  ci.x0 = sc.x0;
  CertificateOptions opt;
  opt.seed = seed;
  opt.envelope_samples = 200;
  opt.envelope_horizon = 4 * p + 4;
  opt.cost_horizon = T;
  opt.governor_probes = 200;
  out.cert = estimate_certificate(ci, opt);
  out.bound = verify_theorem1(out.run.ledger, out.cert, *ss);
  out.bound.name = "oco_m";

  const SteadyStateCost ls(costs, ss);
  for (int t = 0; t < T; t += std::max(1, T / 50)) {
    for (double nu : input_box.grid(21)) {
      const double diag =
          costs->stage_cost(t, Vec::Constant(p, nu), Vec::Constant(1, nu));
      out.diagonal_mismatch = std::max(out.diagonal_mismatch, std::abs(ls.eval(t, nu) - diag));
    }
  }
  return out;
}

LemmaReport lemma_diagnostics(const RegretLedger& ledger, const Certificate& cert,
                              int max_window, double slack) {
  LemmaReport rep;
  const auto& rec = ledger.records();
  const std::size_t T = rec.size();
  std::vector<double> V(T);
  for (std::size_t t = 0; t < T; ++t) V[t] = cert.converse->evaluate(rec[t].x, rec[t].v);

  const double lt = cert.lambda_tilde;
  rep.worst_recursion_margin = kInf;
  for (std::size_t t1 = 0; t1 < T; ++t1) {
    double drift = 0.0;
    double power = 1.0;
    for (std::size_t t2 = t1; t2 < T && t2 <= t1 + static_cast<std::size_t>(max_window); ++t2) {
      if (t2 > t1) {
        drift = bound_term(lt, drift) + bound_term(cert.l_V, std::abs(rec[t2].v - rec[t2 - 1].v));
        power *= lt;
      }
      const double bound = bound_term(power, V[t1]) + drift;
      const double margin = bound - V[t2];
      ++rep.windows;
      if (margin < rep.worst_recursion_margin) {
        rep.worst_recursion_margin = margin;
        rep.worst_tau1 = static_cast<int>(t1);
        rep.worst_tau2 = static_cast<int>(t2);
      }
      if (margin < -slack) ++rep.recursion_failures;
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    rep.max_V = std::max(rep.max_V, V[t]);
    if (V[t] > cert.V_bar + slack) ++rep.vbar_failures;
  }

  if (std::isfinite(cert.window_M) && cert.window_M + 1.0 <= static_cast<double>(T)) {
    const std::size_t len = static_cast<std::size_t>(cert.window_M) + 1;
    std::vector<double> factor(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double rho = std::isnan(rec[t].alpha) ? cert.epsilon : cert.rho(rec[t].alpha);
      factor[t] = 1.0 - rho;
    }
    rep.worst_rho_product = 0.0;
    for (std::size_t t = 0; t + len <= T; ++t) {
      double prod = 1.0;
      for (std::size_t i = t; i < t + len && prod > 0.0; ++i) prod *= factor[i];
      rep.worst_rho_product = std::max(rep.worst_rho_product, prod);
    }
  } else {
    rep.worst_rho_product = kNaN;
  }
  return rep;
}

}  // namespace ocorg
