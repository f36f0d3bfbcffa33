#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ocorg/errors.hpp"
#include "ocorg/harness.hpp"
#include "reactor_fixture.hpp"

using namespace ocorg;
using ocorg::testing::reactor;
using ocorg::testing::reactor_config;
using ocorg::testing::vec1;
using ocorg::testing::vec2;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

StepRecord record(int t, double r, double eta, double stage, double ls_r, double ls_eta,
                  double margin = 1.0) {
  StepRecord rec;
  rec.t = t;
  rec.r = r;
  rec.eta = eta;
  rec.stage_cost = stage;
  rec.ls_r = ls_r;
  rec.ls_eta = ls_eta;
  rec.margin = margin;
  return rec;
}

// Reduced-effort reactor certificate; shared by the tests of this binary.
const Certificate& reactor_certificate() {
  static const Certificate cert = [] {
    const auto& cal = reactor();
    CertificateInputs in;
    in.ctrl = cal.ctrl;
    in.set = cal.fixed;
    in.cost_box = cal.box;
    in.costs = std::make_shared<CstrCostSchedule>();
    in.x0 = vec2(0.2632, 0.6519);
    CertificateOptions opt;
    opt.envelope_samples = 100;
    opt.envelope_horizon = 400;
    opt.governor_probes = 50;
    opt.cost_horizon = 600;
    return estimate_certificate(in, opt);
  }();
  return cert;
}

OcoOptions constant_script(double r) {
  OcoOptions opt;
  opt.kind = OcoKind::kScripted;
  opt.script = {r};
  return opt;
}

// Stage cost that fails at one step, to exercise the loop's error path.
class FailingCost final : public CostSchedule {
 public:
  explicit FailingCost(int fail_at) : fail_at_(fail_at) {}
  double stage_cost(int t, const Vec& x, const Vec&) const override {
    if (t == fail_at_) throw NumericalError("injected");
    return x.squaredNorm();
  }
  void stage_gradient(int, const Vec& x, const Vec& u, Vec& gx, Vec& gu) const override {
    gx = 2.0 * x;
    gu = Vec::Zero(u.size());
  }

 private:
  int fail_at_;
};

}  // namespace

TEST(RegretLedger, SumsAndPathLengths) {
  RegretLedger ledger;
  ledger.append(record(0, 0.5, 0.6, 3.0, 2.0, 1.0));
  ledger.append(record(1, 0.7, 0.55, 4.0, 1.5, 0.5));
  ledger.append(record(2, 0.4, 0.55, 1.0, 0.25, 0.25));
  EXPECT_DOUBLE_EQ(ledger.stage_cost_sum(), 8.0);
  EXPECT_DOUBLE_EQ(ledger.regret(), 8.0 - 1.75);
  EXPECT_DOUBLE_EQ(ledger.oco_regret(), 3.75 - 1.75);
  EXPECT_DOUBLE_EQ(ledger.path_length(), 0.2 + 0.3);
  EXPECT_NEAR(ledger.eta_path_length(), 0.05, 1e-15);
  EXPECT_EQ(ledger.violations(), 0);
  EXPECT_EQ(ledger.size(), 3u);
}

TEST(RegretLedger, CountsViolationsIncludingNaN) {
  RegretLedger ledger;
  ledger.append(record(0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0));
  ledger.append(record(1, 0.5, 0.5, 0.0, 0.0, 0.0, -1e-15));
  ledger.append(record(2, 0.5, 0.5, 0.0, 0.0, 0.0, std::numeric_limits<double>::quiet_NaN()));
  EXPECT_EQ(ledger.violations(), 2);
}

TEST(RegretLedger, CompensatedSumOfManySmallTerms) {
  RegretLedger ledger;
  ledger.append(record(0, 0.5, 0.5, 1.0, 0.0, 0.0));
  for (int t = 1; t <= 100000; ++t) ledger.append(record(t, 0.5, 0.5, 1e-16, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(ledger.stage_cost_sum(), 1.0 + 1e-11);
}

TEST(RunClosedLoop, ZeroMotionRun) {
  const auto& cal = reactor();
  const double r0 = 0.6519;
  Scenario sc;
  sc.ctrl = cal.ctrl;
  sc.set = cal.fixed;
  sc.box = cal.box;
  sc.costs = std::make_shared<AdversarialCost>(cal.ctrl->steady_state_ptr(), 200);
  sc.oco = constant_script(r0);
  sc.T = 200;
  sc.x0 = cal.ctrl->h(r0);
  sc.r0 = r0;
  const RunResult run = run_closed_loop(sc);
  const RegretLedger& ledger = run.ledger;
  ASSERT_EQ(ledger.size(), 200u);
  EXPECT_EQ(ledger.path_length(), 0.0);
  EXPECT_LT(std::abs(ledger.regret()), 1e-12);
  EXPECT_LT(std::abs(ledger.oco_regret()), 1e-12);
  for (const auto& rec : ledger.records()) {
    EXPECT_EQ(rec.v, r0);
    EXPECT_EQ(rec.beta, 1.0);
    EXPECT_NEAR(rec.eta, r0, 1e-6);
  }
  EXPECT_EQ(ledger.violations(), 0);
  EXPECT_LT(run.max_cost_lead, 0);
}

TEST(RunClosedLoop, ShortRunsAreSafeAndCausal) {
  const auto& cal = reactor();
  const auto cfg = reactor_config();
  for (OcoKind oco : {OcoKind::kOgd, OcoKind::kPrevOpt}) {
    for (SafeSetKind set : {SafeSetKind::kFixed, SafeSetKind::kVariable}) {
      Scenario sc = make_scenario(cfg, cal, oco, set);
      sc.T = 300;
      const RunResult run = run_closed_loop(sc);
      EXPECT_EQ(run.ledger.violations(), 0);
      EXPECT_LT(run.max_cost_lead, 0);
      EXPECT_GT(run.cost_reads, 0u);
      EXPECT_EQ(run.oco_seconds.size(), 300u);
      EXPECT_EQ(run.rg_seconds.size(), 300u);
      const auto& rec = run.ledger.records();
      EXPECT_EQ(rec.front().r, cfg.r0);
      for (const auto& s : rec) {
        EXPECT_TRUE(sc.set->contains(s.x, s.v)) << "t = " << s.t;
        EXPECT_LE(s.V, s.level);
      }
    }
  }
}

TEST(RunClosedLoop, PrevOptHasZeroContraction) {
  const auto& cal = reactor();
  Scenario sc = make_scenario(reactor_config(), cal, OcoKind::kPrevOpt, SafeSetKind::kVariable);
  sc.T = 300;
  const RunResult run = run_closed_loop(sc);
  EXPECT_LT(measured_kappa(run.ledger), 1e-6);
  sc = make_scenario(reactor_config(), cal, OcoKind::kOgd, SafeSetKind::kVariable);
  sc.T = 300;
  EXPECT_LT(measured_kappa(run_closed_loop(sc).ledger), 1.0);
}

TEST(RunClosedLoop, ErrorsCarryStepAndState) {
  const auto& cal = reactor();
  Scenario sc = make_scenario(reactor_config(), cal, OcoKind::kPrevOpt, SafeSetKind::kFixed);
  sc.costs = std::make_shared<FailingCost>(5);
  sc.T = 20;
  try {
    run_closed_loop(sc);
    FAIL() << "expected RunError";
  } catch (const RunError& e) {
    EXPECT_EQ(e.step, 5);
    EXPECT_EQ(e.x.size(), 2);
    EXPECT_NE(std::string(e.what()).find("step 5"), std::string::npos) << e.what();
  }
  sc.T = 0;
  EXPECT_THROW(run_closed_loop(sc), DomainError);
}

TEST(SampleSafeSet, SamplesLieInTheSet) {
  const auto& cal = reactor();
  for (const auto& set : {cal.fixed, cal.variable}) {
    std::mt19937_64 rng(5);
    const auto inner = sample_safe_set(*set, 500, rng, 0.0);
    const auto edge = sample_safe_set(*set, 200, rng, 1.0);
    for (const auto& s : inner) EXPECT_TRUE(set->contains(s.x, s.v));
    for (const auto& s : edge) {
      EXPECT_TRUE(set->contains(s.x, s.v));
      const double level = set->level(s.v);
      if (std::isfinite(level)) EXPECT_GT(set->controller().lyapunov(s.x, s.v), 0.99 * level);
    }
  }
}

TEST(BoundTerm, ZeroTimesInfinityIsZero) {
  EXPECT_EQ(bound_term(0.0, kInf), 0.0);
  EXPECT_EQ(bound_term(kInf, 0.0), 0.0);
  EXPECT_EQ(bound_term(2.0, 3.0), 6.0);
  EXPECT_EQ(bound_term(kInf, 1.0), kInf);
}

TEST(CertificateConstants, HalvingSystemPlugIn) {
  // x+ = x / 2: c_phi = 1, lambda = 1/2, N = 2.
  Certificate c;
  c.c_phi = 1.0;
  c.lambda = 0.5;
  c.N = 2;
  c.l_f = 0.5;
  c.l_h = 1.0;
  c.l = 1.0;
  c.l_g = 1.0;
  c.l_s = 1.0;
  c.d_window = 0.45;
  c.delta = 0.1;
  derive_certificate_constants(c, 0.1);
  EXPECT_DOUBLE_EQ(c.lambda2, 2.0);
  EXPECT_DOUBLE_EQ(c.lambda3, 0.75);
  EXPECT_DOUBLE_EQ(c.lambda_tilde, 0.625);
  EXPECT_DOUBLE_EQ(c.l_V, 2.5);
  EXPECT_DOUBLE_EQ(c.lambda_bar, 0.2);
  EXPECT_NEAR(c.V_bar, 3.2, 1e-12);
  EXPECT_DOUBLE_EQ(c.mu, 0.1);
  // Smallest M with 0.625^M * 3.2 <= 0.1 / 8.
  int M = 1;
  while (std::pow(0.625, M) * 3.2 > 0.0125) ++M;
  EXPECT_EQ(M, 12);
  EXPECT_EQ(c.window_M, 12.0);
  EXPECT_EQ(c.epsilon, 1.0);
  EXPECT_FALSE(c.best_effort);
  EXPECT_NEAR(c.c_lambda, 16.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(c.c_epsilon, 25.0);
  EXPECT_NEAR(c.c_PL, 12.0 + 2.0 * 2.5 * 25.0 / 0.375, 1e-9);
}

TEST(CertificateConstants, UnitInputsGiveSeven) {
  Certificate c;
  c.c_phi = 1.0;
  c.lambda = 0.0;
  c.N = 1;
  c.l_f = 1.0;
  c.l_h = 1.0;
  c.l = 1.0;
  c.l_g = 1.0;
  c.l_s = 1.0;
  c.d_window = 1.0;
  c.delta = 1.0;
  derive_certificate_constants(c, 0.0);
  EXPECT_EQ(c.lambda_tilde, 0.0);
  EXPECT_EQ(c.l_V, 1.0);
  EXPECT_EQ(c.window_M, 1.0);
  EXPECT_EQ(c.epsilon, 1.0);
  EXPECT_DOUBLE_EQ(c.c_PL, 7.0);
}

TEST(CertificateConstants, EnvelopeSetsBestEffortEpsilon) {
  Certificate c;
  c.c_phi = 1.0;
  c.lambda = 0.5;
  c.N = 2;
  c.l_f = 0.5;
  c.l_h = 1.0;
  c.l = 1.0;
  c.l_g = 1.0;
  c.l_s = 1.0;
  c.d_window = 0.45;
  c.delta = 0.1;
  c.rho.add(1e-3, 0.3);
  derive_certificate_constants(c, 0.1);
  EXPECT_TRUE(c.best_effort);
  EXPECT_EQ(c.epsilon, 0.3);
  EXPECT_DOUBLE_EQ(c.c_epsilon, (24.0 + 0.3) / 0.3);
}

TEST(CertificateConstants, InfiniteDriftGivesInfiniteWindow) {
  Certificate c;
  c.c_phi = 1.0;
  c.lambda = 0.5;
  c.N = 2;
  c.l_h = kInf;
  c.d_window = 0.45;
  c.delta = 0.1;
  derive_certificate_constants(c, 0.1);
  EXPECT_EQ(c.window_M, kInf);
  EXPECT_EQ(c.c_PL, kInf);
}

TEST(ReactorCertificate, ConstantsAreConsistent) {
  const Certificate& c = reactor_certificate();
  EXPECT_LT(c.lambda, 1.0);
  EXPECT_GE(c.c_phi, 1.0);
  EXPECT_LT(c.c_phi * std::pow(c.lambda, c.N), 0.5);
  EXPECT_DOUBLE_EQ(c.lambda2, c.c_phi / (1.0 - c.lambda));
  EXPECT_DOUBLE_EQ(c.lambda3, 1.0 - c.c_phi * std::pow(c.lambda, c.N));
  EXPECT_GT(c.lambda_tilde, 0.0);
  EXPECT_LT(c.lambda_tilde, 1.0);
  for (double l : {c.l, c.l_f, c.l_g, c.l_h, c.l_s}) {
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GT(l, 0.0);
  }
  EXPECT_GT(c.c_PL, 0.0);
  ASSERT_NE(c.converse, nullptr);
  EXPECT_EQ(c.converse->horizon(), c.N);
}

TEST(RegretBound, HoldsOnShortReactorRun) {
  const auto& cal = reactor();
  Scenario sc = make_scenario(reactor_config(), cal, OcoKind::kPrevOpt, SafeSetKind::kFixed);
  sc.T = 300;
  const RunResult run = run_closed_loop(sc);
  const Certificate& cert = reactor_certificate();
  const InequalityReport thm = verify_theorem1(run.ledger, cert, cal.ctrl->steady_state());
  EXPECT_EQ(thm.name, "theorem1");
  EXPECT_TRUE(thm.holds) << thm.lhs << " > " << thm.rhs;
  EXPECT_DOUBLE_EQ(thm.margin, thm.rhs - thm.lhs);
  for (const auto& r : verify_prop1(run.ledger, cert, cal.ctrl->steady_state(), 0.0)) {
    EXPECT_TRUE(r.holds) << r.name << ": " << r.lhs << " > " << r.rhs;
  }
}

TEST(WindowDiagnostics, WindowCountAndBounds) {
  const auto& cal = reactor();
  Scenario sc = make_scenario(reactor_config(), cal, OcoKind::kPrevOpt, SafeSetKind::kFixed);
  sc.T = 300;
  const RunResult run = run_closed_loop(sc);
  const LemmaReport rep = lemma_diagnostics(run.ledger, reactor_certificate(), 50);
  std::size_t expected = 0;
  for (int t1 = 0; t1 < 300; ++t1) expected += static_cast<std::size_t>(std::min(51, 300 - t1));
  EXPECT_EQ(rep.windows, expected);
  EXPECT_EQ(rep.recursion_failures, 0u);
  EXPECT_EQ(rep.vbar_failures, 0u);
  EXPECT_LE(rep.max_V, reactor_certificate().V_bar);
}

TEST(WindowDiagnostics, ConstantReferenceDecaysGeometrically) {
  const auto& cal = reactor();
  Scenario sc = make_scenario(reactor_config(), cal, OcoKind::kPrevOpt, SafeSetKind::kFixed);
  sc.oco = constant_script(0.6519);
  sc.T = 120;
  const RunResult run = run_closed_loop(sc);
  const Certificate& cert = reactor_certificate();
  const LemmaReport rep = lemma_diagnostics(run.ledger, cert, 50);
  EXPECT_EQ(rep.recursion_failures, 0u);
  // Without reference motion the recursion is pure decay.
  const auto& rec = run.ledger.records();
  const double V0 = cert.converse->evaluate(rec[0].x, rec[0].v);
  for (int t = 1; t <= 50; ++t) {
    const double Vt = cert.converse->evaluate(rec[t].x, rec[t].v);
    EXPECT_LE(Vt, std::pow(cert.lambda_tilde, t) * V0 + 1e-9) << "t = " << t;
  }
}

TEST(Adversarial, GapEqualsStageCostSum) {
  const auto& cal = reactor();
  OcoOptions moving;
  moving.kind = OcoKind::kScripted;
  for (int t = 0; t < 400; ++t) {
    moving.script.push_back(0.6519 + 0.05 * std::sin(2.0 * std::numbers::pi * t / 100.0));
  }
  const AdversarialResult adv =
      adversarial_lower_bound(cal.ctrl, moving, 400, 0.6519, vec2(0.2632, 0.6519));
  const double gap = adv.regret - adv.oco_regret;
  EXPECT_GT(gap, 0.0);
  EXPECT_GE(adv.stage_sum, 0.0);
  EXPECT_NEAR(adv.oco_regret, 0.0, 1e-9);
  EXPECT_NEAR(gap, adv.stage_sum, 1e-9 * 400);
}

TEST(Adversarial, StillReferenceFromSteadyStateHasNoGap) {
  const auto& cal = reactor();
  const AdversarialResult adv =
      adversarial_lower_bound(cal.ctrl, constant_script(0.6519), 200, 0.6519, cal.ctrl->h(0.6519));
  EXPECT_LT(std::abs(adv.regret - adv.oco_regret), 1e-12);
  EXPECT_GE(adv.regret - adv.oco_regret, -1e-9 * 200);
}

TEST(Adversarial, CostNeedsCommittedReference) {
  AdversarialCost cost(reactor().ctrl->steady_state_ptr(), 10);
  EXPECT_THROW(cost.stage_cost(0, vec2(0.3, 0.6), vec1(0.5)), CausalityError);
  cost.observe_reference(0, 0.6);
  const Vec h = reactor().ctrl->h(0.6);
  EXPECT_EQ(cost.stage_cost(0, h, reactor().ctrl->steady_state().input(0.6)), 0.0);
}

TEST(OcoM, DiagonalCostIsTheTargetSquare) {
  const SwitchingCostParams params;
  auto costs = std::make_shared<SwitchingCost>(params);
  auto ss = std::make_shared<AffineSteadyState>(Vec::Ones(1), Vec::Ones(1), ReferenceWindow{-1.0, 1.0});
  const SteadyStateCost ls(costs, ss);
  for (int t : {0, 17, 50, 133}) {
    const double a = 0.5 * std::sin(2.0 * std::numbers::pi * t / 200.0);
    EXPECT_EQ(costs->target(t), a);
    for (double nu : {-1.0, -0.3, 0.0, 0.8}) EXPECT_DOUBLE_EQ(ls.eval(t, nu), (nu - a) * (nu - a));
  }
}

TEST(OcoM, BoundHoldsAndDiagonalMatches) {
  OcoOptions ogd;
  ogd.step_size = 0.1;
  const OcoMResult res = oco_m_run(1, 1, {}, ogd, 400, {-1.0, 1.0}, 0.0);
  EXPECT_EQ(res.run.ledger.violations(), 0);
  EXPECT_EQ(res.diagonal_mismatch, 0.0);
  EXPECT_EQ(res.bound.name, "oco_m");
  EXPECT_TRUE(res.bound.holds) << res.bound.lhs << " > " << res.bound.rhs;
  EXPECT_LT(res.run.max_cost_lead, 0);
}

TEST(OcoM, ConstantReferenceMatchesOcoRegret) {
  const OcoMResult res = oco_m_run(1, 1, {}, constant_script(0.2), 300, {-1.0, 1.0}, 0.2);
  EXPECT_DOUBLE_EQ(res.run.ledger.regret(), res.run.ledger.oco_regret());
  EXPECT_EQ(res.run.ledger.path_length(), 0.0);
}

TEST(OcoM, LongerMemoryAndScalarOnly) {
  OcoOptions ogd;
  ogd.step_size = 0.1;
  const OcoMResult res = oco_m_run(1, 3, {}, ogd, 200, {-1.0, 1.0}, 0.0);
  EXPECT_EQ(res.run.ledger.violations(), 0);
  EXPECT_EQ(res.diagonal_mismatch, 0.0);
  EXPECT_THROW(oco_m_run(2, 1, {}, ogd, 10, {-1.0, 1.0}, 0.0), DomainError);
}
