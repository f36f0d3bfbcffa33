// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ocorg/cli.hpp"

using namespace ocorg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Run {
  OcoKind oco;
  SafeSetKind set;
  RunResult result;
};

std::string label(const Run& r) { return to_string(r.oco) + "/" + to_string(r.set); }

class Suite {
 public:
  Suite() : cfg_(default_config()), cal_(calibrate(cfg_)) {}

  Outcome constraint_safety() {
    const auto t0 = std::chrono::steady_clock::now();
    for (OcoKind oco : {OcoKind::kOgd, OcoKind::kPrevOpt}) {
      for (SafeSetKind set : {SafeSetKind::kFixed, SafeSetKind::kVariable}) {
        runs_.push_back({oco, set, run_closed_loop(make_scenario(cfg_, cal_, oco, set))});
      }
    }
    const double secs = seconds_since(t0);
    Outcome out{secs < 60.0, ""};
    for (const auto& r : runs_) {
      const int v = r.result.ledger.violations();
      out.pass = out.pass && v == 0 && r.result.ledger.size() == static_cast<std::size_t>(cfg_.T);
      out.detail += label(r) + " " + std::to_string(v) + " violations; ";
    }
    out.detail += "four runs in " + fmt(secs) + " s";
    return out;
  }

  Outcome table_shape() {
    std::map<std::string, double> pct;
    double max_fixed = 0.0;
    for (const auto& r : runs_) {
      if (r.set == SafeSetKind::kFixed) max_fixed = std::max(max_fixed, r.result.ledger.regret());
    }
    Outcome out{max_fixed > 0.0, ""};
    for (const auto& r : runs_) {
      pct[label(r)] = 100.0 * r.result.ledger.regret() / max_fixed;
      out.detail += label(r) + " " + fmt(pct[label(r)]) + "%; ";
    }
    const double ov = pct["ogd/variable"], pv = pct["prev-opt/variable"];
    const double of = pct["ogd/fixed"], pf = pct["prev-opt/fixed"];
    out.pass = out.pass && ov <= 30.0 && pv <= 30.0 && std::abs(ov - pv) <= 2.0 &&
               std::abs(of - pf) <= 5.0;
    return out;
  }

  Outcome tracking_sanity() {
    const Run* run = find(OcoKind::kPrevOpt, SafeSetKind::kVariable);
    const CstrCostSchedule cost(cfg_.cost);
    const auto& rec = run->result.ledger.records();
    Outcome out{true, ""};
    int plateaus = 0;
    int start = 0;
    for (int t = 1; t <= cfg_.T; ++t) {
      if (t < cfg_.T && cost.cbar(t) == cost.cbar(start)) continue;
      // Plateau [start, t) of constant target.
      if (t - start >= 200) {
        ++plateaus;
        double sum = 0.0;
        for (int k = t - 200; k < t; ++k) sum += std::abs(rec[k].v - rec[k].eta);
        const double mean = sum / 200.0;
        out.pass = out.pass && mean <= 0.01;
        out.detail += "plateau [" + std::to_string(start) + ", " + std::to_string(t) +
                      "): mean |v - eta| " + fmt(mean) + "; ";
      }
      start = t;
    }
    if (plateaus == 0) {
      out.pass = false;
      out.detail = "no constant-target plateau of 200 steps";
    }
    return out;
  }

  Outcome soundness() {
    Outcome out{true, ""};
    for (SafeSetKind kind : {SafeSetKind::kFixed, SafeSetKind::kVariable}) {
      const SafeSet& set = *cal_.set(kind);
      const TrackingController& ctrl = set.controller();
      std::mt19937_64 rng(cfg_.seed + 404);
      const auto samples = sample_safe_set(set, 10000, rng);
      int bad = 0;
      for (const auto& s : samples) {
        const double level = set.level(s.v);
        Vec x = s.x;
        for (int k = 0; k <= 50; ++k) {
          const Vec u = ctrl.input(x, s.v);
          if (cal_.box.worst_margin(x, u) < 0.0 || ctrl.lyapunov(x, s.v) > level * (1.0 + 1e-12)) {
            ++bad;
            break;
          }
          x = ctrl.plant().step(x, u);
        }
      }
      out.pass = out.pass && bad == 0 && samples.size() == 10000;
      out.detail += to_string(kind) + " " + std::to_string(bad) + "/" +
                    std::to_string(samples.size()) + " failing; ";
    }
    return out;
  }

  Outcome converse_lyapunov() {
    Outcome out{true, ""};
    constexpr double slack = 1e-9;
    for (SafeSetKind kind : {SafeSetKind::kFixed, SafeSetKind::kVariable}) {
      const Certificate& cert = certificate(kind);
      const TrackingController& ctrl = *cal_.ctrl;
      std::mt19937_64 rng(cfg_.seed + 505);
      const auto samples = sample_safe_set(*cal_.set(kind), 1000, rng);
      int bad = 0;
      for (const auto& s : samples) {
        const double d = (s.x - ctrl.h(s.v)).norm();
        const double V = cert.converse->evaluate(s.x, s.v);
        const double Vn = cert.converse->evaluate(ctrl.closed_loop(s.x, s.v), s.v);
        const bool sandwich = V >= cert.lambda1 * d - slack && V <= cert.lambda2 * d + slack;
        const bool decrease = Vn - V <= -cert.lambda3 * d + slack;
        if (!sandwich || !decrease) ++bad;
      }
      const bool constants = cert.lambda1 == 1.0 &&
                             cert.lambda2 == cert.c_phi / (1.0 - cert.lambda) &&
                             cert.lambda3 == 1.0 - cert.c_phi * std::pow(cert.lambda, cert.N);
      out.pass = out.pass && bad == 0 && constants;
      out.detail += to_string(kind) + " N = " + std::to_string(cert.N) + ", " +
                    std::to_string(bad) + "/1000 failing; ";
    }
    return out;
  }

  Outcome governor_maximality() {
    const SafeSet& set = *cal_.set(cfg_.safe_set);
    std::mt19937_64 rng(cfg_.seed + 606);
    const auto probes = sample_safe_set(set, 1000, rng);
    std::uniform_real_distribution<double> unif(set.window().lo, set.window().hi);
    constexpr int kGrid = 1000000;
    int restricted = 0, passed_through = 0, bad = 0;
    double worst = 0.0;
    for (const auto& p : probes) {
      const double r = unif(rng);
      GovernorState st;
      st.v_prev = p.v;
      const double v = scalar_rg(p.x, r, st, set);
      const double beta = st.beta.back();
      const auto at = [&](double b) { return p.v + b * (r - p.v); };
      bool ok = set.contains(p.x, v);
      if (set.contains(p.x, r)) {
        ++passed_through;
        ok = ok && beta == 1.0 && v == r;
      }
      if (beta < 1.0) {
        ++restricted;
        ok = ok && !(beta + 1e-8 <= 1.0 && set.contains(p.x, at(beta + 1e-8)));
        int k = kGrid;
        while (k > 0 && !set.contains(p.x, at(static_cast<double>(k) / kGrid))) --k;
        const double gap = std::abs(beta - static_cast<double>(k) / kGrid);
        worst = std::max(worst, gap);
        ok = ok && gap <= 2e-6;
      }
      if (!ok) ++bad;
    }
    return {bad == 0 && probes.size() == 1000,
            to_string(cfg_.safe_set) + " set, " + std::to_string(probes.size()) + " instances, " +
                std::to_string(restricted) + " restricted, " + std::to_string(passed_through) +
                " pass-through, max grid gap " + fmt(worst) + ", " + std::to_string(bad) +
                " failing"};
  }

  Outcome prop2() {
    OcoOptions moving;
    moving.kind = OcoKind::kScripted;
    for (int t = 0; t < cfg_.T; ++t) {
      moving.script.push_back(
          cfg_.window.clamp(cfg_.r0 + 0.05 * std::sin(2.0 * std::numbers::pi * t / 400.0)));
    }
    const auto adv = adversarial_lower_bound(cal_.ctrl, moving, cfg_.T, cfg_.r0, cfg_.x0);
    const double gap = adv.regret - adv.oco_regret;
    OcoOptions still;
    still.kind = OcoKind::kScripted;
    still.script = {cfg_.r0};
    const auto flat =
        adversarial_lower_bound(cal_.ctrl, still, cfg_.T, cfg_.r0, cal_.ctrl->h(cfg_.r0));
    const double flat_gap = flat.regret - flat.oco_regret;
    const double tol = 1e-9 * cfg_.T;
    return {gap >= -tol && gap > 0.0 && flat_gap >= -tol,
            "moving reference R_T - R_OCO = " + fmt(gap) + "; still reference " + fmt(flat_gap)};
  }

  Outcome prop1() {
    const double kappa = ogd_kappa_grid(cal_.ctrl->steady_state_ptr(), cfg_.oco.step_size);
    Outcome out{kappa < 1.0, "OGD kappa " + fmt(kappa) + "; "};
    for (const auto& r : runs_) {
      const double k = r.oco == OcoKind::kPrevOpt ? 0.0 : kappa;
      if (!(k < 1.0)) continue;
      for (const auto& rep :
           verify_prop1(r.result.ledger, certificate(r.set), cal_.ctrl->steady_state(), k)) {
        if (rep.name != "prop1_oco_printed") continue;
        out.pass = out.pass && rep.holds;
        out.detail += label(r) + " " + fmt(rep.lhs) + " <= " + fmt(rep.rhs) + "; ";
      }
    }
    return out;
  }

  Outcome lemma2() {
    Outcome out{true, ""};
    for (const auto& r : runs_) {
      const Certificate& cert = certificate(r.set);
      const LemmaReport rep = lemma_diagnostics(r.result.ledger, cert, 50, 1e-9);
      out.pass = out.pass && rep.recursion_failures == 0 && rep.vbar_failures == 0 && rep.windows > 0;
      out.detail += label(r) + " " + std::to_string(rep.recursion_failures + rep.vbar_failures) +
                    " failing of " + std::to_string(rep.windows) + ", max V " + fmt(rep.max_V) +
                    " <= " + fmt(cert.V_bar) + "; ";
    }
    return out;
  }

  Outcome oco_m() {
    const ScenarioConfig reg = load_config(fs::path(OCORG_SOURCE_DIR) / "configs" / "oco_m.ini");
    const OcoMResult res = run_register(reg);
    return {res.bound.holds && res.diagonal_mismatch == 0.0 && res.run.ledger.violations() == 0,
            "p = " + std::to_string(reg.register_memory) + ", " + fmt(res.bound.lhs) + " <= " +
                fmt(res.bound.rhs) + ", diagonal mismatch " + fmt(res.diagonal_mismatch)};
  }

  Outcome determinism() {
    std::random_device rd;
    const fs::path root = fs::temp_directory_path() / ("ocorg_accept_" + std::to_string(rd()));
    ScenarioConfig cfg = cfg_;
    std::vector<fs::path> dirs = {root / "a", root / "b"};
    bool ok = true;
    for (const auto& d : dirs) {
      cfg.out_dir = d;
      ok = ok && cmd_simulate(cfg) == 0;
    }
    std::string detail;
    for (const char* name : {"trajectory.csv", "report.json"}) {
      const std::string a = slurp(dirs[0] / name);
      const bool same = !a.empty() && a == slurp(dirs[1] / name);
      ok = ok && same;
      detail += std::string(name) + (same ? " identical" : " differs") + "; ";
    }
    std::error_code ec;
    fs::remove_all(root, ec);
    return {ok, detail + "timings.json holds wall times and is excluded"};
  }

 private:
  static ScenarioConfig default_config() {
    std::istringstream empty;
    return parse_config(empty, "<defaults>");
  }

  const Run* find(OcoKind oco, SafeSetKind set) const {
    for (const auto& r : runs_) {
      if (r.oco == oco && r.set == set) return &r;
    }
    throw std::runtime_error("run " + to_string(oco) + "/" + to_string(set) + " missing");
  }

  const Certificate& certificate(SafeSetKind kind) {
    auto& slot = certs_[kind];
    if (!slot) {
      CertificateInputs in;
      in.ctrl = cal_.ctrl;
      in.set = cal_.set(kind);
      in.cost_box = cal_.box;
      in.costs = std::make_shared<CstrCostSchedule>(cfg_.cost);
      in.x0 = cfg_.x0;
      CertificateOptions opt;
      opt.seed = cfg_.seed;
      opt.cost_horizon = cfg_.T;
      slot = estimate_certificate(in, opt);
    }
    return *slot;
  }

  ScenarioConfig cfg_;
  Calibration cal_;
  std::vector<Run> runs_;
  std::map<SafeSetKind, std::optional<Certificate>> certs_;
};

}  // namespace

int main() {
  Suite suite;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"constraint safety", [&] { return suite.constraint_safety(); }},
      {"table shape", [&] { return suite.table_shape(); }},
      {"tracking sanity", [&] { return suite.tracking_sanity(); }},
      {"safe-set soundness", [&] { return suite.soundness(); }},
      {"converse Lyapunov", [&] { return suite.converse_lyapunov(); }},
      {"governor maximality", [&] { return suite.governor_maximality(); }},
      {"adversarial lower bound", [&] { return suite.prop2(); }},
      {"Q-linear OCO bound", [&] { return suite.prop1(); }},
      {"Lyapunov windows", [&] { return suite.lemma2(); }},
      {"OCO with memory", [&] { return suite.oco_m(); }},
      {"determinism", [&] { return suite.determinism(); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    while (!out.detail.empty() && (out.detail.back() == ' ' || out.detail.back() == ';')) {
      out.detail.pop_back();
    }
    if (!out.pass) ++failed;
    std::printf("%s %2zu %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), out.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
