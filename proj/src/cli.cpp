#include "ocorg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ocorg/errors.hpp"

namespace ocorg {

namespace {

using json = nlohmann::ordered_json;
namespace pt = boost::property_tree;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Finite values as numbers, the rest as strings so the JSON stays valid.
json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Line numbers of "section.key" entries, for diagnostics.
std::map<std::string, int> key_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    line = trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    lines.emplace(section + "." + trim(line.substr(0, eq)), no);
  }
  return lines;
}

class ConfigReader {
 public:
  ConfigReader(pt::ptree tree, std::map<std::string, int> lines, std::string source)
      : tree_(std::move(tree)), lines_(std::move(lines)), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::ostringstream msg;
    msg << source_;
    const auto it = lines_.find(key);
    if (it != lines_.end()) msg << ":" << it->second;
    msg << ": [" << key.substr(0, key.find('.')) << "] " << key.substr(key.find('.') + 1)
        << ": " << what;
    throw ConfigError(msg.str());
  }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(strip_comment(*v));
  }

  bool has(const std::string& key) const {
    return static_cast<bool>(tree_.get_optional<std::string>(pt::ptree::path_type(key, '.')));
  }

  void number(const std::string& key, double& out) {
    if (auto s = raw(key)) out = to_double(key, *s);
  }

  void integer(const std::string& key, int& out) {
    if (auto s = raw(key)) {
      const double d = to_double(key, *s);
      if (d != std::floor(d) || std::abs(d) > 1e9) fail(key, "expected an integer, got '" + *s + "'");
      out = static_cast<int>(d);
    }
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (auto s = raw(key)) {
      try {
        std::size_t pos = 0;
        out = std::stoull(*s, &pos);
        if (pos != s->size()) throw std::invalid_argument(*s);
      } catch (const std::exception&) {
        fail(key, "expected an unsigned integer, got '" + *s + "'");
      }
    }
  }

  void vector(const std::string& key, Vec& out) {
    if (auto s = raw(key)) {
      const auto parts = split(*s, ',');
      if (parts.empty() || static_cast<int>(parts.size()) > kMaxDim) {
        fail(key, "expected 1 to " + std::to_string(kMaxDim) + " comma-separated numbers");
      }
      out.resize(static_cast<int>(parts.size()));
      for (std::size_t i = 0; i < parts.size(); ++i) out(static_cast<int>(i)) = to_double(key, parts[i]);
    }
  }

  template <typename F>
  void kind(const std::string& key, F parse) {
    if (auto s = raw(key)) {
      try {
        parse(*s);
      } catch (const ConfigError& e) {
        fail(key, e.what());
      }
    }
  }

  void breakpoints(const std::string& key, std::vector<std::pair<double, double>>& out) {
    if (auto s = raw(key)) {
      out.clear();
      for (const auto& item : split(*s, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail(key, "expected step:value pairs, got '" + item + "'");
        out.emplace_back(to_double(key, trim(item.substr(0, colon))),
                         to_double(key, trim(item.substr(colon + 1))));
      }
      if (out.empty()) fail(key, "needs at least one breakpoint");
      for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].first < out[i - 1].first) fail(key, "breakpoints must be sorted by step");
      }
    }
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) fail(section + ".", "key outside any section");
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!used_.count(full)) fail(full, "unknown key");
      }
    }
  }

 private:
  static std::string strip_comment(const std::string& s) {
    const auto pos = s.find_first_of(";#");
    return pos == std::string::npos ? s : s.substr(0, pos);
  }

  double to_double(const std::string& key, const std::string& s) const {
    try {
      std::size_t pos = 0;
      const double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return d;
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + s + "'");
    }
  }

  pt::ptree tree_;
  std::map<std::string, int> lines_;
  std::string source_;
  std::set<std::string> used_;
};

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<long>(mid), xs.end());
  double m = xs[mid];
  if (xs.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(xs.begin(), xs.begin() + static_cast<long>(mid)));
  }
  return m;
}

json timing_json(const std::vector<double>& seconds) {
  return {{"mean_ms", 1e3 * mean(seconds)},
          {"std_ms", 1e3 * stddev(seconds)},
          {"median_ms", 1e3 * median(seconds)}};
}

json report_json(const InequalityReport& r) {
  return {{"name", r.name},
          {"lhs", num(r.lhs)},
          {"rhs", num(r.rhs)},
          {"margin", num(r.margin)},
          {"status", r.status}};
}

json certificate_json(const Certificate& c) {
  return {{"l", num(c.l)},
          {"l_f", num(c.l_f)},
          {"l_g", num(c.l_g)},
          {"l_h", num(c.l_h)},
          {"l_s", num(c.l_s)},
          {"c_phi", num(c.c_phi)},
          {"lambda", num(c.lambda)},
          {"N", c.N},
          {"lambda1", num(c.lambda1)},
          {"lambda2", num(c.lambda2)},
          {"lambda3", num(c.lambda3)},
          {"lambda_tilde", num(c.lambda_tilde)},
          {"l_V", num(c.l_V)},
          {"lambda_bar", num(c.lambda_bar)},
          {"V_bar", num(c.V_bar)},
          {"d_window", num(c.d_window)},
          {"delta", num(c.delta)},
          {"mu", num(c.mu)},
          {"window_M", num(c.window_M)},
          {"epsilon", num(c.epsilon)},
          {"best_effort", c.best_effort},
          {"c_PL", num(c.c_PL)},
          {"c_lambda", num(c.c_lambda)},
          {"c_epsilon", num(c.c_epsilon)},
          {"lambda_dec", num(c.lambda_dec)},
          {"rho_samples", c.rho.size()}};
}

json lemma_json(const LemmaReport& r) {
  return {{"windows", r.windows},
          {"recursion_failures", r.recursion_failures},
          {"vbar_failures", r.vbar_failures},
          {"worst_recursion_margin", num(r.worst_recursion_margin)},
          {"worst_window", {r.worst_tau1, r.worst_tau2}},
          {"max_V", num(r.max_V)},
          {"worst_rho_product", num(r.worst_rho_product)}};
}

json deviations_json(const ScenarioConfig& cfg) {
  json out = json::array();
  for (const auto& d : deviations(cfg)) out.push_back({{"id", d.id}, {"description", d.description}});
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

std::string run_label(OcoKind oco, SafeSetKind set) {
  return to_string(oco) + "/" + to_string(set);
}

BoxConstraints box_from(const ScenarioConfig& cfg) {
  BoxConstraints box = BoxConstraints::cstr();
  if (cfg.x_lo.size() > 0) box.x_lo = cfg.x_lo;
  if (cfg.x_hi.size() > 0) box.x_hi = cfg.x_hi;
  if (cfg.u_lo.size() > 0) box.u_lo = cfg.u_lo;
  if (cfg.u_hi.size() > 0) box.u_hi = cfg.u_hi;
  return box;
}

CertificateInputs certificate_inputs(const ScenarioConfig& cfg, const Calibration& cal,
                                     SafeSetKind kind,
                                     std::shared_ptr<const CostSchedule> costs) {
  CertificateInputs ci;
  ci.ctrl = cal.ctrl;
  ci.set = cal.set(kind);
  ci.cost_box = cal.box;
  ci.costs = std::move(costs);
  ci.x0 = cfg.x0;
  return ci;
}

CertificateOptions certificate_options(const ScenarioConfig& cfg) {
  CertificateOptions opt;
  opt.seed = cfg.seed;
  opt.cost_horizon = cfg.T;
  return opt;
}

}  // namespace

std::string to_string(SafeSetKind kind) {
  switch (kind) {
    case SafeSetKind::kFixed: return "fixed";
    case SafeSetKind::kVariable: return "variable";
    case SafeSetKind::kExplicitHorizon: return "explicit";
  }
  return "?";
}

std::string to_string(GovernorKind kind) {
  return kind == GovernorKind::kScalar ? "scalar" : "command";
}

std::string to_string(OcoKind kind) {
  switch (kind) {
    case OcoKind::kOgd: return "ogd";
    case OcoKind::kPrevOpt: return "prev-opt";
    case OcoKind::kScripted: return "scripted";
  }
  return "?";
}

SafeSetKind parse_safe_set_kind(const std::string& s) {
  if (s == "fixed") return SafeSetKind::kFixed;
  if (s == "variable") return SafeSetKind::kVariable;
  throw ConfigError("unknown safe-set kind '" + s + "' (fixed | variable)");
}

GovernorKind parse_governor_kind(const std::string& s) {
  if (s == "scalar") return GovernorKind::kScalar;
  if (s == "command") return GovernorKind::kCommand;
  throw ConfigError("unknown governor kind '" + s + "' (scalar | command)");
}

OcoKind parse_oco_kind(const std::string& s) {
  if (s == "ogd") return OcoKind::kOgd;
  if (s == "prev-opt") return OcoKind::kPrevOpt;
  throw ConfigError("unknown oco kind '" + s + "' (ogd | prev-opt)");
}

ScenarioConfig parse_config(std::istream& in, const std::string& source) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.line() << ": " << e.message();
    throw ConfigError(msg.str());
  }

  ConfigReader r(std::move(tree), key_lines(text), source);
  ScenarioConfig cfg;

  r.kind("plant.kind", [&](const std::string& s) {
    if (s == "cstr") {
      cfg.plant = PlantKind::kCstr;
    } else if (s == "register") {
      cfg.plant = PlantKind::kRegister;
    } else {
      throw ConfigError("unknown plant kind '" + s + "' (cstr | register)");
    }
  });
  if (cfg.plant == PlantKind::kRegister) {
    cfg.window = {-1.0, 1.0};
    cfg.r0 = 0.0;
    cfg.T = 1000;
  }
  r.number("plant.theta_f", cfg.cstr.theta_f);
  r.number("plant.k", cfg.cstr.k_rate);
  r.number("plant.M_act", cfg.cstr.M_act);
  r.number("plant.x_f", cfg.cstr.x_f);
  r.number("plant.x_c", cfg.cstr.x_c);
  r.number("plant.alpha_f", cfg.cstr.alpha_f);
  r.number("plant.tau", cfg.cstr.tau);
  r.vector("plant.x0", cfg.x0);

  r.vector("constraints.x_lo", cfg.x_lo);
  r.vector("constraints.x_hi", cfg.x_hi);
  r.vector("constraints.u_lo", cfg.u_lo);
  r.vector("constraints.u_hi", cfg.u_hi);

  r.number("reference.lo", cfg.window.lo);
  r.number("reference.hi", cfg.window.hi);
  r.number("reference.r0", cfg.r0);

  r.integer("controller.schedule_points", cfg.schedule_points);

  r.kind("safe_set.kind", [&](const std::string& s) { cfg.safe_set = parse_safe_set_kind(s); });
  r.integer("safe_set.rings", cfg.scan.rings);
  r.integer("safe_set.directions", cfg.scan.directions);
  r.number("safe_set.shrink", cfg.scan.shrink);
  r.number("safe_set.level_scale", cfg.level_scale);

  r.kind("governor.kind", [&](const std::string& s) { cfg.governor = parse_governor_kind(s); });

  r.kind("oco.kind", [&](const std::string& s) { cfg.oco.kind = parse_oco_kind(s); });
  r.number("oco.step_size", cfg.oco.step_size);
  r.number("oco.grad_tol", cfg.oco.grad_tol);

  r.integer("run.T", cfg.T);
  r.unsigned64("run.seed", cfg.seed);
  r.integer("run.jobs", cfg.jobs);
  if (auto s = r.raw("run.out")) cfg.out_dir = *s;

  r.number("cost.q_offset", cfg.cost.q_offset);
  r.number("cost.q_amplitude", cfg.cost.q_amplitude);
  r.number("cost.q_period", cfg.cost.q_period);
  r.breakpoints("cost.cbar", cfg.cost.cbar_points);

  r.integer("register.memory", cfg.register_memory);
  r.integer("register.inputs", cfg.register_inputs);
  r.number("register.target_offset", cfg.switching.offset);
  r.number("register.target_amplitude", cfg.switching.amplitude);
  r.number("register.target_period", cfg.switching.period);
  r.number("register.switch_weight", cfg.switching.weight);

  r.integer("verify.samples", cfg.verify_samples);
  r.integer("verify.rollout", cfg.verify_rollout);
  r.integer("verify.lyapunov_samples", cfg.lyapunov_samples);
  r.integer("verify.governor_instances", cfg.governor_instances);
  r.integer("verify.max_converse_horizon", cfg.max_converse_horizon);

  r.reject_unknown();
  if (cfg.x0.size() == 0) {
    cfg.x0 = cfg.plant == PlantKind::kCstr ? Vec(Eigen::Vector2d(0.2632, 0.6519))
                                           : Vec::Constant(cfg.register_memory, cfg.r0);
  }
  try {
    validate_config(cfg);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

void validate_config(const ScenarioConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("[run] T must be at least 1");
  if (!(cfg.window.lo < cfg.window.hi)) throw ConfigError("[reference] needs lo < hi");
  if (!cfg.window.contains(cfg.r0)) throw ConfigError("[reference] r0 outside the reference window");
  if (cfg.oco.kind == OcoKind::kScripted) throw ConfigError("[oco] kind must be ogd or prev-opt");
  if (!(cfg.oco.step_size > 0.0)) throw ConfigError("[oco] step_size must be positive");
  if (!(cfg.level_scale > 0.0)) throw ConfigError("[safe_set] level_scale must be positive");
  if (cfg.safe_set == SafeSetKind::kExplicitHorizon) throw ConfigError("[safe_set] kind must be fixed or variable");
  if (cfg.scan.rings < 1 || cfg.scan.directions < 1 || !(cfg.scan.shrink > 0.0 && cfg.scan.shrink <= 1.0)) {
    throw ConfigError("[safe_set] needs rings, directions >= 1 and shrink in (0, 1]");
  }
  if (cfg.jobs < 1) throw ConfigError("[run] jobs must be at least 1");
  if (cfg.verify_samples < 1 || cfg.verify_rollout < 1 || cfg.lyapunov_samples < 1 ||
      cfg.governor_instances < 1 || cfg.max_converse_horizon < 1) {
    throw ConfigError("[verify] sample counts must be at least 1");
  }
  if (cfg.plant == PlantKind::kCstr) {
    if (cfg.x0.size() != 2) throw ConfigError("[plant] x0 needs 2 entries for the reactor");
    try {
      cfg.cstr.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("[plant] ") + e.what());
    }
    if (cfg.schedule_points < 2) throw ConfigError("[controller] schedule_points must be at least 2");
    const auto check = [](const Vec& v, int n, const char* name) {
      if (v.size() != 0 && v.size() != n) {
        throw ConfigError(std::string("[constraints] ") + name + " needs " + std::to_string(n) + " entries");
      }
    };
    check(cfg.x_lo, 2, "x_lo");
    check(cfg.x_hi, 2, "x_hi");
    check(cfg.u_lo, 1, "u_lo");
    check(cfg.u_hi, 1, "u_hi");
  } else {
    if (cfg.register_inputs != 1) throw ConfigError("[register] only inputs = 1 is supported");
    if (cfg.register_memory < 1 || cfg.register_memory > kMaxDim) {
      throw ConfigError("[register] memory must be in 1.." + std::to_string(kMaxDim));
    }
    if (cfg.x0.size() != cfg.register_memory) throw ConfigError("[plant] x0 needs one entry per register slot");
    if (!(cfg.switching.period > 0.0)) throw ConfigError("[register] target_period must be positive");
  }
}

std::shared_ptr<const SafeSet> Calibration::set(SafeSetKind kind) const {
  return kind == SafeSetKind::kVariable ? variable : fixed;
}

Calibration calibrate(const ScenarioConfig& cfg) {
  if (cfg.plant != PlantKind::kCstr) throw ConfigError("calibration needs the reactor plant");
  Calibration cal;
  auto plant = std::make_shared<CstrPlant>(cfg.cstr, Eigen::Vector2d(cfg.x0(0), cfg.x0(1)));
  auto ss = std::make_shared<CstrSteadyState>(cfg.cstr, cfg.window);
  auto schedule =
      GainSchedule::synthesize(*plant, *ss, LqrWeights::identity(2, 1), cfg.schedule_points);
  auto ctrl = std::make_shared<TrackingController>(plant, ss, std::move(schedule));
  cal.ctrl = ctrl;
  cal.box = box_from(cfg);
  const PolytopeFamily family = closed_loop_family(cal.box, ctrl);
  cal.nodes = decrease_verified_levels(family, *ctrl, ctrl->schedule().grid(), cfg.scan);
  std::tie(cal.V_max, cal.level_cert) = fixed_level_from_nodes(cal.nodes, *ctrl);
  SafeSet fixed = SafeSet::fixed(ctrl, cal.V_max);
  SafeSet variable = SafeSet::variable(ctrl, cal.nodes, family);
  if (cfg.level_scale != 1.0) {
    fixed = fixed.scaled(cfg.level_scale);
    variable = variable.scaled(cfg.level_scale);
  }
  cal.fixed = std::make_shared<SafeSet>(std::move(fixed));
  cal.variable = std::make_shared<SafeSet>(std::move(variable));
  spdlog::debug("calibrated: V_max = {}, delta = {}", cal.V_max, cal.level_cert.delta);
  return cal;
}

Scenario make_scenario(const ScenarioConfig& cfg, const Calibration& cal, OcoKind oco,
                       SafeSetKind set) {
  Scenario sc;
  sc.ctrl = cal.ctrl;
  sc.set = cal.set(set);
  sc.box = cal.box;
  sc.costs = std::make_shared<CstrCostSchedule>(cfg.cost);
  sc.governor = cfg.governor;
  sc.oco = cfg.oco;
  sc.oco.kind = oco;
  sc.T = cfg.T;
  sc.x0 = cfg.x0;
  sc.r0 = cfg.r0;
  return sc;
}

Scenario make_scenario(const ScenarioConfig& cfg, const Calibration& cal) {
  return make_scenario(cfg, cal, cfg.oco.kind, cfg.safe_set);
}

OcoMResult run_register(const ScenarioConfig& cfg) {
  if (cfg.plant != PlantKind::kRegister) throw ConfigError("not a register scenario");
  OcoMResult res = oco_m_run(cfg.register_inputs, cfg.register_memory, cfg.switching, cfg.oco,
                             cfg.T, cfg.window, cfg.r0, cfg.seed);
  return res;
}

void write_trajectory_csv(std::ostream& os, const RegretLedger& ledger, const Plant& plant) {
  os << "t";
  for (const auto& n : plant.state_names()) os << "," << n;
  for (const auto& n : plant.input_names()) os << "," << n;
  os << ",r,v,eta,beta,L_stage,Ls_r,Ls_v,Ls_eta,V,level,margin_worst\n";
  for (const auto& rec : ledger.records()) {
    os << rec.t;
    for (int i = 0; i < rec.x.size(); ++i) os << "," << fmt17(rec.x(i));
    for (int i = 0; i < rec.u.size(); ++i) os << "," << fmt17(rec.u(i));
    for (double x : {rec.r, rec.v, rec.eta, rec.beta, rec.stage_cost, rec.ls_r, rec.ls_v,
                     rec.ls_eta, rec.V, rec.level, rec.margin}) {
      os << "," << fmt17(x);
    }
    os << "\n";
  }
}

std::vector<Deviation> deviations(const ScenarioConfig& cfg) {
  std::vector<Deviation> out;
  if (cfg.plant == PlantKind::kCstr) {
    out.push_back({"controller_synthesis",
                   "gain-scheduled LQR (Q = I, R = 1) on " + std::to_string(cfg.schedule_points) +
                       " linearizations with quadratic V = |x - h(v)|^2_P(v), in place of the "
                       "original offline design"});
    out.push_back({"riccati_solver",
                   "Riccati value iteration evaluated in doubling form with a tolerance relative "
                   "to max(1, |P|_max)"});
    out.push_back({"safe_set_levels",
                   "set levels are min(Gamma(v), " + fmt17(cfg.scan.shrink) +
                       " x first V with sampled one-step increase), because the closed-form level "
                       "alone is not invariant under the LQR substitute"});
    if (cfg.cost.q_period != 24000.0) {
      out.push_back({"q_period", "q_t sine period is " + fmt17(cfg.cost.q_period) +
                                     " steps; the literal formula gives 24000"});
    }
  }
  if (cfg.oco.kind == OcoKind::kOgd) {
    out.push_back({"ogd_gradient_index",
                   "OGD steps with the gradient of the cost revealed at t - 1, evaluated at "
                   "r_{t-1}, as the information structure requires"});
  }
  out.push_back({"prop1_patch",
                 "Q-linear bounds use 1/(1 - kappa) on the optimizer path length in place of "
                 "kappa/(1 - kappa)"});
  out.push_back({"certificate_best_effort",
                 "window_M and epsilon come from an empirical contraction envelope; dependent "
                 "checks are diagnostic"});
  if (cfg.level_scale != 1.0) {
    out.push_back({"fault_injection", "set levels scaled by " + fmt17(cfg.level_scale)});
  }
  return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int cmd_simulate(const ScenarioConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  json report;
  json timings;
  RunResult run;
  std::shared_ptr<const Plant> plant;
  report["scenario"] = {{"plant", cfg.plant == PlantKind::kCstr ? "cstr" : "register"},
                        {"oco", to_string(cfg.oco.kind)},
                        {"governor", to_string(cfg.governor)},
                        {"T", cfg.T},
                        {"seed", cfg.seed}};
  try {
    if (cfg.plant == PlantKind::kRegister) {
      OcoMResult res = run_register(cfg);
      run = std::move(res.run);
      plant = std::make_shared<ShiftRegisterPlant>(cfg.register_inputs, cfg.register_memory, cfg.x0);
      report["certificate"] = certificate_json(res.cert);
      report["inequalities"] = json::array({report_json(res.bound)});
      report["diagonal_mismatch"] = num(res.diagonal_mismatch);
    } else {
      report["scenario"]["safe_set"] = to_string(cfg.safe_set);
      const Calibration cal = calibrate(cfg);
      Scenario sc = make_scenario(cfg, cal);
      run = run_closed_loop(sc);
      plant = cal.ctrl->plant_ptr();
      report["safe_set"] = {{"V_max", num(cal.V_max)},
                            {"delta", num(cal.level_cert.delta)},
                            {"k_star", cal.level_cert.k_star}};
      const Certificate cert = estimate_certificate(
          certificate_inputs(cfg, cal, cfg.safe_set, sc.costs), certificate_options(cfg));
      report["certificate"] = certificate_json(cert);
      json ineq = json::array({report_json(verify_theorem1(run.ledger, cert, cal.ctrl->steady_state()))});
      if (cfg.oco.kind == OcoKind::kPrevOpt) {
        for (const auto& r : verify_prop1(run.ledger, cert, cal.ctrl->steady_state(), 0.0)) {
          ineq.push_back(report_json(r));
        }
      }
      report["inequalities"] = ineq;
      report["lemma2"] = lemma_json(lemma_diagnostics(run.ledger, cert));
    }
  } catch (const RunError& e) {
    spdlog::error("run failed: {}", e.what());
    return 1;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    spdlog::error("run failed: {}", e.what());
    return 1;
  }

  const RegretLedger& ledger = run.ledger;
  report["regret"] = {{"R_T", num(ledger.regret())},
                      {"R_OCO", num(ledger.oco_regret())},
                      {"R_PL", num(ledger.path_length())},
                      {"eta_path_length", num(ledger.eta_path_length())},
                      {"stage_cost_sum", num(ledger.stage_cost_sum())}};
  report["violations"] = ledger.violations();
  report["causality"] = {{"cost_reads", run.cost_reads}, {"max_cost_lead", run.max_cost_lead}};
  report["deviations"] = deviations_json(cfg);

  {
    std::ostringstream csv;
    write_trajectory_csv(csv, ledger, *plant);
    write_file(cfg.out_dir / "trajectory.csv", csv.str());
  }
  write_json(cfg.out_dir / "report.json", report);
  timings["oco"] = timing_json(run.oco_seconds);
  timings["rg"] = timing_json(run.rg_seconds);
  write_json(cfg.out_dir / "timings.json", timings);

  spdlog::info("R_T = {}, R_OCO = {}, R_PL = {}, violations = {}", ledger.regret(),
               ledger.oco_regret(), ledger.path_length(), ledger.violations());
  return ledger.violations() == 0 ? 0 : 1;
}

int cmd_table1(const ScenarioConfig& cfg) {
  if (cfg.plant != PlantKind::kCstr) throw ConfigError("table1 needs the reactor plant");
  std::filesystem::create_directories(cfg.out_dir);
  const Calibration cal = calibrate(cfg);
  struct Row {
    OcoKind oco;
    SafeSetKind set;
    std::optional<RunResult> result;
    std::string error;
  };
  std::vector<Row> rows = {{OcoKind::kOgd, SafeSetKind::kFixed, {}, {}},
                           {OcoKind::kPrevOpt, SafeSetKind::kFixed, {}, {}},
                           {OcoKind::kOgd, SafeSetKind::kVariable, {}, {}},
                           {OcoKind::kPrevOpt, SafeSetKind::kVariable, {}, {}}};
  parallel_for(static_cast<int>(rows.size()), cfg.jobs, [&](int i) {
    Row& row = rows[static_cast<std::size_t>(i)];
    try {
      row.result = run_closed_loop(make_scenario(cfg, cal, row.oco, row.set));
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  double max_regret = -kInf;
  bool partial = false;
  for (const auto& row : rows) {
    if (row.result) {
      max_regret = std::max(max_regret, row.result->ledger.regret());
    } else {
      partial = true;
    }
  }
  json table = json::array();
  std::ostringstream csv;
  csv << "oco,safe_set,R_T,normalized_pct,violations,oco_mean_ms,oco_std_ms,oco_median_ms,"
         "rg_mean_ms,rg_std_ms,rg_median_ms\n";
  std::printf("%-9s %-9s %12s %10s %24s %24s\n", "oco", "safe set", "R_T", "normalized",
              "OCO ms mean+-std (med)", "RG ms mean+-std (med)");
  bool violations = false;
  for (const auto& row : rows) {
    if (!row.result) {
      std::printf("%-9s %-9s FAILED: %s\n", to_string(row.oco).c_str(), to_string(row.set).c_str(),
                  row.error.c_str());
      table.push_back({{"oco", to_string(row.oco)}, {"safe_set", to_string(row.set)}, {"error", row.error}});
      continue;
    }
    const auto& res = *row.result;
    const double R = res.ledger.regret();
    const double pct = 100.0 * R / max_regret;
    const json to = timing_json(res.oco_seconds);
    const json tr = timing_json(res.rg_seconds);
    violations = violations || res.ledger.violations() != 0;
    std::printf("%-9s %-9s %12.6g %9.2f%% %9.4f+-%.4f (%.4f) %9.4f+-%.4f (%.4f)\n",
                to_string(row.oco).c_str(), to_string(row.set).c_str(), R, pct,
                to["mean_ms"].get<double>(), to["std_ms"].get<double>(),
                to["median_ms"].get<double>(), tr["mean_ms"].get<double>(),
                tr["std_ms"].get<double>(), tr["median_ms"].get<double>());
    csv << to_string(row.oco) << "," << to_string(row.set) << "," << fmt17(R) << "," << fmt17(pct)
        << "," << res.ledger.violations() << "," << fmt17(to["mean_ms"].get<double>()) << ","
        << fmt17(to["std_ms"].get<double>()) << "," << fmt17(to["median_ms"].get<double>()) << ","
        << fmt17(tr["mean_ms"].get<double>()) << "," << fmt17(tr["std_ms"].get<double>()) << ","
        << fmt17(tr["median_ms"].get<double>()) << "\n";
    table.push_back({{"oco", to_string(row.oco)},
                     {"safe_set", to_string(row.set)},
                     {"R_T", num(R)},
                     {"normalized_pct", num(pct)},
                     {"violations", res.ledger.violations()},
                     {"oco_timing", to},
                     {"rg_timing", tr}});
  }
  if (partial) std::printf("table is partial: at least one run failed\n");
  write_file(cfg.out_dir / "table1.csv", csv.str());
  write_json(cfg.out_dir / "table1.json",
             {{"rows", table}, {"partial", partial}, {"deviations", deviations_json(cfg)}});
  return partial || violations ? 1 : 0;
}

namespace {

struct Check {
  std::string category;
  std::string name;
  bool passed = false;
  bool diagnostic = false;
  std::string detail;
};

std::string point_string(const Vec& x, double v) {
  std::ostringstream os;
  os << "x = [";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << fmt17(x(i));
  os << "], v = " << fmt17(v);
  return os.str();
}

Check check_steady_states(const Calibration& cal) {
  Check c{"plant", "steady_state", true, false, {}};
  const TrackingController& ctrl = *cal.ctrl;
  double worst = 0.0;
  for (double v : ctrl.window().grid(181)) {
    const Vec h = ctrl.h(v);
    const double err = (ctrl.plant().step(h, ctrl.steady_state().input(v)) - h).norm();
    if (err > worst) worst = err;
    if (err > 1e-12 && c.passed) {
      c.passed = false;
      c.detail = "residual " + fmt17(err) + " at v = " + fmt17(v);
    }
  }
  if (c.passed) c.detail = "max residual " + fmt17(worst);
  return c;
}

std::vector<Check> check_lyapunov(const ScenarioConfig& cfg, const Calibration& cal,
                                  const Certificate& cert) {
  Check sandwich{"tracking", "lyapunov_sandwich", true, false, {}};
  Check decrease{"tracking", "lyapunov_decrease", true, false, {}};
  std::mt19937_64 rng(cfg.seed + 101);
  const auto samples = sample_safe_set(*cal.set(cfg.safe_set), cfg.lyapunov_samples, rng);
  const TrackingController& ctrl = *cal.ctrl;
  const ConverseLyapunov& V = *cert.converse;
  constexpr double slack = 1e-9;
  for (const auto& s : samples) {
    const double d = (s.x - ctrl.h(s.v)).norm();
    const double Vx = V.evaluate(s.x, s.v);
    if (sandwich.passed && (Vx < cert.lambda1 * d - slack || Vx > cert.lambda2 * d + slack)) {
      sandwich.passed = false;
      sandwich.detail = "V = " + fmt17(Vx) + " outside [" + fmt17(cert.lambda1 * d) + ", " +
                        fmt17(cert.lambda2 * d) + "] at " + point_string(s.x, s.v);
    }
    const double Vn = V.evaluate(ctrl.closed_loop(s.x, s.v), s.v);
    if (decrease.passed && Vn - Vx > -cert.lambda3 * d + slack) {
      decrease.passed = false;
      decrease.detail = "decrease " + fmt17(Vn - Vx) + " > " + fmt17(-cert.lambda3 * d) + " at " +
                        point_string(s.x, s.v);
    }
  }
  if (sandwich.passed) sandwich.detail = std::to_string(samples.size()) + " samples";
  if (decrease.passed) decrease.detail = std::to_string(samples.size()) + " samples";
  return {sandwich, decrease};
}

Check check_soundness(const ScenarioConfig& cfg, const SafeSet& set, const BoxConstraints& box,
                      const std::string& name) {
  Check c{"safeset", "soundness_" + name, true, false, {}};
  std::mt19937_64 rng(cfg.seed + 202);
  const auto samples = sample_safe_set(set, cfg.verify_samples, rng);
  const TrackingController& ctrl = set.controller();
  for (const auto& s : samples) {
    const double level = set.level(s.v);
    Vec x = s.x;
    for (int k = 0; k <= cfg.verify_rollout; ++k) {
      std::string why;
      try {
        const Vec u = ctrl.input(x, s.v);
        if (box.worst_margin(x, u) < 0.0) {
          why = "constraint violated at step " + std::to_string(k);
        } else if (ctrl.lyapunov(x, s.v) > level * (1.0 + 1e-12)) {
          why = "left the sublevel set at step " + std::to_string(k);
        } else {
          x = ctrl.plant().step(x, u);
        }
      } catch (const std::exception& e) {
        why = std::string("model error at step ") + std::to_string(k) + ": " + e.what();
      }
      if (!why.empty()) {
        c.passed = false;
        c.detail = why + " from " + point_string(s.x, s.v);
        return c;
      }
    }
  }
  c.detail = std::to_string(samples.size()) + " rollouts of " + std::to_string(cfg.verify_rollout) + " steps";
  return c;
}

Check check_delta_ball(const Calibration& cal) {
  Check c{"safeset", "delta_ball", true, false, {}};
  const TrackingController& ctrl = *cal.ctrl;
  const double delta = cal.level_cert.delta;
  for (double v : ctrl.window().grid(91)) {
    for (int j = 0; j < 64; ++j) {
      const double a = 2.0 * std::numbers::pi * j / 64;
      Vec d(2);
      d << std::cos(a), std::sin(a);
      const Vec x = ctrl.h(v) + d * (delta * (1.0 - 1e-9));
      if (!cal.fixed->contains(x, v)) {
        c.passed = false;
        c.detail = "ball point outside the fixed set at " + point_string(x, v);
        return c;
      }
    }
  }
  c.detail = "delta = " + fmt17(delta);
  return c;
}

Check check_governor(const ScenarioConfig& cfg, const SafeSet& set) {
  Check c{"governor", "maximality", true, false, {}};
  std::mt19937_64 rng(cfg.seed + 303);
  const auto probes = sample_safe_set(set, cfg.governor_instances, rng);
  std::uniform_real_distribution<double> unif(set.window().lo, set.window().hi);
  constexpr int kGrid = 1000000;
  double worst = 0.0;
  int restricted = 0;
  for (const auto& p : probes) {
    const double r = unif(rng);
    GovernorState st;
    st.v_prev = p.v;
    const double v = scalar_rg(p.x, r, st, set);
    const double beta = st.beta.back();
    const auto at = [&](double b) { return p.v + b * (r - p.v); };
    std::string why;
    if (set.contains(p.x, r) && beta != 1.0) why = "admissible r not passed through";
    if (beta < 1.0) {
      ++restricted;
      if (beta + 1e-8 <= 1.0 && set.contains(p.x, at(beta + 1e-8))) why = "beta + 1e-8 is admissible";
      // Largest admissible grid point; beta = 0 is admissible by construction.
      int k = kGrid - 1;
      while (k > 0 && !set.contains(p.x, at(static_cast<double>(k) / kGrid))) --k;
      const double oracle = static_cast<double>(k) / kGrid;
      worst = std::max(worst, std::abs(beta - oracle));
      if (std::abs(beta - oracle) > 2e-6) why = "beta " + fmt17(beta) + " vs grid " + fmt17(oracle);
    }
    if (!set.contains(p.x, v)) why = "governed reference is inadmissible";
    if (!why.empty()) {
      c.passed = false;
      c.detail = why + " at " + point_string(p.x, p.v) + ", r = " + fmt17(r);
      return c;
    }
  }
  c.detail = std::to_string(probes.size()) + " instances, " + std::to_string(restricted) +
             " restricted, max grid gap " + fmt17(worst);
  return c;
}

Check from_report(const std::string& category, const InequalityReport& r) {
  Check c{category, r.name, r.holds, r.status == "diagnostic", {}};
  c.detail = fmt17(r.lhs) + " <= " + fmt17(r.rhs) + " (" + r.status + ")";
  return c;
}

void print_check(const Check& c) {
  const char* tag = c.passed ? "PASS" : (c.diagnostic ? "DIAG" : "FAIL");
  std::printf("[%s] %s/%s: %s\n", tag, c.category.c_str(), c.name.c_str(), c.detail.c_str());
}

int finish_verify(const ScenarioConfig& cfg, std::vector<Check> checks) {
  json out = json::array();
  bool ok = true;
  for (const auto& c : checks) {
    print_check(c);
    ok = ok && (c.passed || c.diagnostic);
    out.push_back({{"category", c.category},
                   {"name", c.name},
                   {"passed", c.passed},
                   {"diagnostic", c.diagnostic},
                   {"detail", c.detail}});
  }
  std::filesystem::create_directories(cfg.out_dir);
  write_json(cfg.out_dir / "verify.json",
             {{"checks", out}, {"passed", ok}, {"deviations", deviations_json(cfg)}});
  std::printf("%s\n", ok ? "verify: all checks passed" : "verify: FAILED");
  return ok ? 0 : 1;
}

int verify_register(const ScenarioConfig& cfg) {
  std::vector<Check> checks;
  const OcoMResult res = run_register(cfg);
  checks.push_back({"harness", "register_violations", res.run.ledger.violations() == 0, false,
                    std::to_string(res.run.ledger.violations()) + " violations"});
  checks.push_back({"oco", "causality", res.run.max_cost_lead < 0, false,
                    "max cost lead " + std::to_string(res.run.max_cost_lead)});
  checks.push_back({"harness", "diagonal_cost", res.diagonal_mismatch == 0.0, false,
                    "max mismatch " + fmt17(res.diagonal_mismatch)});
  checks.push_back(from_report("harness", res.bound));

  OcoOptions constant;
  constant.kind = OcoKind::kScripted;
  constant.script = {cfg.r0};
  const OcoMResult still = oco_m_run(cfg.register_inputs, cfg.register_memory, cfg.switching,
                                     constant, cfg.T, cfg.window, cfg.r0, cfg.seed);
  const double a = still.run.ledger.regret();
  const double b = still.run.ledger.oco_regret();
  checks.push_back({"harness", "register_constant_reference", a == b, false,
                    "R_T = " + fmt17(a) + ", R_OCO = " + fmt17(b)});
  return finish_verify(cfg, std::move(checks));
}

}  // namespace

int cmd_verify(const ScenarioConfig& cfg) {
  if (cfg.plant == PlantKind::kRegister) return verify_register(cfg);
  const Calibration cal = calibrate(cfg);
  const SteadyStateMap& ss = cal.ctrl->steady_state();

  struct RunSlot {
    OcoKind oco;
    SafeSetKind set;
    std::optional<RunResult> result;
    std::string error;
  };
  std::vector<RunSlot> runs = {{OcoKind::kOgd, SafeSetKind::kFixed, {}, {}},
                               {OcoKind::kPrevOpt, SafeSetKind::kFixed, {}, {}},
                               {OcoKind::kOgd, SafeSetKind::kVariable, {}, {}},
                               {OcoKind::kPrevOpt, SafeSetKind::kVariable, {}, {}}};
  std::vector<std::optional<Certificate>> certs(2);
  std::vector<std::vector<Check>> groups(5);
  double kappa = 0.0;

  // Tasks 0..3: runs; 4, 5: certificates; then the independent check groups.
  const int nr = static_cast<int>(runs.size());
  const int n_tasks = nr + 2 + static_cast<int>(groups.size());
  parallel_for(n_tasks, cfg.jobs, [&](int i) {
    if (i < nr) {
      auto& slot = runs[static_cast<std::size_t>(i)];
      try {
        slot.result = run_closed_loop(make_scenario(cfg, cal, slot.oco, slot.set));
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
      return;
    }
    if (i < nr + 2) {
      const SafeSetKind kind = i == nr ? SafeSetKind::kFixed : SafeSetKind::kVariable;
      try {
        certs[static_cast<std::size_t>(i - nr)] = estimate_certificate(
            certificate_inputs(cfg, cal, kind, std::make_shared<CstrCostSchedule>(cfg.cost)),
            certificate_options(cfg));
      } catch (const std::exception& e) {
        groups[4].push_back({"harness", "certificate " + to_string(kind), false, false, e.what()});
      }
      return;
    }
    const int g = i - nr - 2;
    auto& out = groups[static_cast<std::size_t>(g)];
    const auto guarded = [&](const std::string& category, const std::string& name, auto fn) {
      try {
        fn();
      } catch (const std::exception& e) {
        out.push_back({category, name, false, false, e.what()});
      }
    };
    switch (g) {
      case 0:
        guarded("plant", "steady_state", [&] { out.push_back(check_steady_states(cal)); });
        guarded("safeset", "delta_ball", [&] { out.push_back(check_delta_ball(cal)); });
        guarded("safeset", "soundness_fixed",
                [&] { out.push_back(check_soundness(cfg, *cal.fixed, cal.box, "fixed")); });
        break;
      case 1:
        guarded("safeset", "soundness_variable",
                [&] { out.push_back(check_soundness(cfg, *cal.variable, cal.box, "variable")); });
        break;
      case 2:
        guarded("governor", "maximality",
                [&] { out.push_back(check_governor(cfg, *cal.set(cfg.safe_set))); });
        break;
      case 3:
        guarded("oco", "ogd_kappa", [&] {
          kappa = ogd_kappa_grid(cal.ctrl->steady_state_ptr(), cfg.oco.step_size);
          out.push_back({"oco", "ogd_kappa", kappa < 1.0, false, "kappa = " + fmt17(kappa)});
        });
        guarded("harness", "prop2", [&] {
          OcoOptions script;
          script.kind = OcoKind::kScripted;
          for (int t = 0; t < cfg.T; ++t) {
            script.script.push_back(cfg.window.clamp(
                cfg.r0 + 0.05 * std::sin(2.0 * std::numbers::pi * t / 400.0)));
          }
          const auto adv = adversarial_lower_bound(cal.ctrl, script, cfg.T, cfg.r0, cfg.x0);
          const double gap = adv.regret - adv.oco_regret;
          out.push_back({"harness", "prop2", gap >= -1e-9 * cfg.T && gap > 0.0, false,
                         "R_T - R_OCO = " + fmt17(gap)});
        });
        break;
      default:
        break;
    }
  });

  std::vector<Check> checks;
  for (auto& group : groups) {
    for (auto& c : group) checks.push_back(std::move(c));
  }
  const auto cert_for = [&](SafeSetKind kind) -> const Certificate* {
    const auto& c = certs[kind == SafeSetKind::kVariable ? 1 : 0];
    return c ? &*c : nullptr;
  };
  const auto too_long = [&](const Certificate& cert) {
    return cert.N > cfg.max_converse_horizon;
  };
  const auto horizon_note = [&](const Certificate& cert) {
    return "converse horizon N = " + std::to_string(cert.N) + " exceeds the budget " +
           std::to_string(cfg.max_converse_horizon);
  };
  if (const Certificate* cert = cert_for(cfg.safe_set); cert && too_long(*cert)) {
    checks.push_back({"tracking", "lyapunov", false, false, horizon_note(*cert)});
  } else if (cert) {
    try {
      for (auto& c : check_lyapunov(cfg, cal, *cert)) checks.push_back(std::move(c));
    } catch (const std::exception& e) {
      checks.push_back({"tracking", "lyapunov", false, false, e.what()});
    }
  }
  for (const auto& slot : runs) {
    const std::string label = run_label(slot.oco, slot.set);
    if (!slot.result) {
      checks.push_back({"harness", "run " + label, false, false, slot.error});
      continue;
    }
    const RegretLedger& ledger = slot.result->ledger;
    checks.push_back({"harness", "violations " + label, ledger.violations() == 0, false,
                      std::to_string(ledger.violations()) + " violations"});
    checks.push_back({"oco", "causality " + label, slot.result->max_cost_lead < 0, false,
                      "max cost lead " + std::to_string(slot.result->max_cost_lead)});
    const Certificate* cert = cert_for(slot.set);
    if (!cert) continue;
    if (too_long(*cert)) {
      checks.push_back({"harness", "lemma2 " + label, false, false, horizon_note(*cert)});
      continue;
    }
    const LemmaReport lem = lemma_diagnostics(ledger, *cert);
    checks.push_back({"harness", "lemma2 " + label,
                      lem.recursion_failures == 0 && lem.vbar_failures == 0, false,
                      std::to_string(lem.windows) + " windows, worst margin " +
                          fmt17(lem.worst_recursion_margin) + " at [" +
                          std::to_string(lem.worst_tau1) + ", " + std::to_string(lem.worst_tau2) +
                          "], max V " + fmt17(lem.max_V) + " <= V_bar " + fmt17(cert->V_bar)});
    Check thm = from_report("harness", verify_theorem1(ledger, *cert, ss));
    thm.name += " " + label;
    checks.push_back(thm);
    const double k = slot.oco == OcoKind::kPrevOpt ? 0.0 : kappa;
    if (k < 1.0) {
      for (const auto& r : verify_prop1(ledger, *cert, ss, k)) {
        Check c = from_report("oco", r);
        c.name += " " + label;
        checks.push_back(c);
      }
    }
  }
  return finish_verify(cfg, std::move(checks));
}

int cmd_constants(const ScenarioConfig& cfg) {
  if (cfg.plant != PlantKind::kCstr) {
    std::filesystem::create_directories(cfg.out_dir);
    const OcoMResult res = run_register(cfg);
    write_json(cfg.out_dir / "certificate.json",
               {{"certificate", certificate_json(res.cert)}, {"deviations", deviations_json(cfg)}});
    return 0;
  }
  Calibration cal;
  Certificate cert;
  try {
    cal = calibrate(cfg);
    cert = estimate_certificate(
        certificate_inputs(cfg, cal, cfg.safe_set, std::make_shared<CstrCostSchedule>(cfg.cost)),
        certificate_options(cfg));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    spdlog::error("calibration failed: {}", e.what());
    return 1;
  }
  std::filesystem::create_directories(cfg.out_dir);
  json j;
  j["safe_set"] = {{"kind", to_string(cfg.safe_set)},
                   {"V_max", num(cal.V_max)},
                   {"V_min", num(cal.level_cert.V_min)},
                   {"delta", num(cal.level_cert.delta)},
                   {"k_star", cal.level_cert.k_star}};
  j["certificate"] = certificate_json(cert);
  j["deviations"] = deviations_json(cfg);
  write_json(cfg.out_dir / "certificate.json", j);

  std::ostringstream csv;
  csv << "v,gamma,cap,level,K_c,K_theta,P_cc,P_ctheta,P_thetatheta\n";
  const auto& grid = cal.ctrl->schedule().grid();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const GainPoint gp = cal.ctrl->schedule().at(grid[i]);
    const NodeLevel& n = cal.nodes[i];
    csv << fmt17(grid[i]) << "," << fmt17(n.gamma) << "," << fmt17(n.cap) << "," << fmt17(n.level)
        << "," << fmt17(gp.K(0, 0)) << "," << fmt17(gp.K(0, 1)) << "," << fmt17(gp.P(0, 0)) << ","
        << fmt17(gp.P(0, 1)) << "," << fmt17(gp.P(1, 1)) << "\n";
  }
  write_file(cfg.out_dir / "schedule.csv", csv.str());
  std::printf("V_max = %.17g\nlambda_tilde = %.17g\nV_bar = %.17g\nc_PL = %.17g\n", cal.V_max,
              cert.lambda_tilde, cert.V_bar, cert.c_PL);
  return 0;
}

}  // namespace ocorg
