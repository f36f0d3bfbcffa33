#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ocorg/cli.hpp"
#include "ocorg/errors.hpp"
#include "reactor_fixture.hpp"

using namespace ocorg;
using ocorg::testing::reactor_config;

namespace fs = std::filesystem;

namespace {

ScenarioConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "cfg.ini");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("ocorg_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

TEST(ParseConfig, EmptyFileGivesReactorDefaults) {
  const ScenarioConfig cfg = reactor_config();
  EXPECT_EQ(cfg.plant, PlantKind::kCstr);
  EXPECT_EQ(cfg.T, 2400);
  EXPECT_EQ(cfg.r0, 0.6519);
  EXPECT_EQ(cfg.window.lo, 0.4);
  EXPECT_EQ(cfg.window.hi, 0.85);
  ASSERT_EQ(cfg.x0.size(), 2);
  EXPECT_EQ(cfg.x0(0), 0.2632);
  EXPECT_EQ(cfg.x0(1), 0.6519);
  EXPECT_EQ(cfg.safe_set, SafeSetKind::kFixed);
  EXPECT_EQ(cfg.governor, GovernorKind::kScalar);
  EXPECT_EQ(cfg.oco.kind, OcoKind::kOgd);
  EXPECT_EQ(cfg.oco.step_size, 2.5e-4);
  EXPECT_EQ(cfg.schedule_points, 181);
  EXPECT_EQ(cfg.cstr.tau, 0.1);
  EXPECT_EQ(cfg.cost.q_period, 2400.0);
  EXPECT_EQ(cfg.verify_samples, 10000);
  EXPECT_EQ(cfg.verify_rollout, 50);
  EXPECT_EQ(cfg.governor_instances, 1000);
}

TEST(ParseConfig, ReadsEverySection) {
  const ScenarioConfig cfg = parse(
      "; comment\n"
      "[plant]\nx0 = 0.3, 0.6 ; trailing\n"
      "[reference]\nlo = 0.45\nhi = 0.8\nr0 = 0.6\n"
      "[safe_set]\nkind = variable\n"
      "[governor]\nkind = command\n"
      "[oco]\nkind = prev-opt\nstep_size = 1e-3\n"
      "[run]\nT = 12\nseed = 99\njobs = 3\nout = somewhere\n"
      "[cost]\ncbar = 0:0.3, 100:0.5\n");
  EXPECT_EQ(cfg.x0(0), 0.3);
  EXPECT_EQ(cfg.window.lo, 0.45);
  EXPECT_EQ(cfg.r0, 0.6);
  EXPECT_EQ(cfg.safe_set, SafeSetKind::kVariable);
  EXPECT_EQ(cfg.governor, GovernorKind::kCommand);
  EXPECT_EQ(cfg.oco.kind, OcoKind::kPrevOpt);
  EXPECT_EQ(cfg.oco.step_size, 1e-3);
  EXPECT_EQ(cfg.T, 12);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.jobs, 3);
  EXPECT_EQ(cfg.out_dir, fs::path("somewhere"));
  ASSERT_EQ(cfg.cost.cbar_points.size(), 2u);
  EXPECT_EQ(cfg.cost.cbar_points[1].first, 100.0);
  EXPECT_EQ(cfg.cost.cbar_points[1].second, 0.5);
}

TEST(ParseConfig, RegisterDefaults) {
  const ScenarioConfig cfg = parse("[plant]\nkind = register\n[register]\nmemory = 3\n");
  EXPECT_EQ(cfg.plant, PlantKind::kRegister);
  EXPECT_EQ(cfg.window.lo, -1.0);
  EXPECT_EQ(cfg.window.hi, 1.0);
  EXPECT_EQ(cfg.r0, 0.0);
  EXPECT_EQ(cfg.T, 1000);
  EXPECT_EQ(cfg.x0.size(), 3);
}

TEST(ParseConfig, ErrorsNameSectionKeyAndLine) {
  std::string msg = config_error("[run]\nT = 10\n[oco]\nkind = sgd\n");
  EXPECT_NE(msg.find("cfg.ini:4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("[oco] kind"), std::string::npos) << msg;
  EXPECT_NE(msg.find("sgd"), std::string::npos) << msg;

  msg = config_error("[run]\nT = abc\n");
  EXPECT_NE(msg.find("cfg.ini:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expected a number"), std::string::npos) << msg;

  msg = config_error("[run]\nT = 2.5\n");
  EXPECT_NE(msg.find("expected an integer"), std::string::npos) << msg;

  msg = config_error("[cost]\ncbar = 0:0.3, 0.5\n");
  EXPECT_NE(msg.find("step:value"), std::string::npos) << msg;
}

TEST(ParseConfig, UnknownKeyRejected) {
  const std::string msg = config_error("[run]\nT = 10\n\nbogus = 1\n");
  EXPECT_NE(msg.find("cfg.ini:4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key"), std::string::npos) << msg;
  EXPECT_NE(config_error("[nosuch]\nkey = 1\n").find("unknown key"), std::string::npos);
}

TEST(ParseConfig, ValidationFailures) {
  EXPECT_NE(config_error("[run]\nT = 0\n").find("T must be at least 1"), std::string::npos);
  EXPECT_NE(config_error("[reference]\nr0 = 0.9\n").find("r0 outside"), std::string::npos);
  EXPECT_NE(config_error("[reference]\nlo = 0.8\nhi = 0.5\nr0 = 0.6\n").find("lo < hi"),
            std::string::npos);
  EXPECT_NE(config_error("[oco]\nstep_size = -1\n").find("step_size"), std::string::npos);
  EXPECT_NE(config_error("[plant]\nx0 = 0.3\n").find("x0 needs 2"), std::string::npos);
  EXPECT_NE(config_error("[plant]\ntau = 0\n").find("[plant]"), std::string::npos);
  EXPECT_NE(config_error("[plant]\nkind = register\n[register]\ninputs = 2\n").find("inputs = 1"),
            std::string::npos);
}

TEST(LoadConfig, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/dir/cfg.ini"), ConfigError);
}

TEST(LoadConfig, ShippedConfigsParse) {
  const fs::path root = fs::path(OCORG_SOURCE_DIR) / "configs";
  const ScenarioConfig cstr = load_config(root / "cstr.ini");
  EXPECT_EQ(cstr.plant, PlantKind::kCstr);
  EXPECT_EQ(cstr.T, 2400);
  const ScenarioConfig reg = load_config(root / "oco_m.ini");
  EXPECT_EQ(reg.plant, PlantKind::kRegister);
  EXPECT_EQ(reg.register_memory, 1);
}

TEST(Kinds, RoundTrip) {
  for (auto k : {SafeSetKind::kFixed, SafeSetKind::kVariable}) {
    EXPECT_EQ(parse_safe_set_kind(to_string(k)), k);
  }
  for (auto k : {GovernorKind::kScalar, GovernorKind::kCommand}) {
    EXPECT_EQ(parse_governor_kind(to_string(k)), k);
  }
  for (auto k : {OcoKind::kOgd, OcoKind::kPrevOpt}) EXPECT_EQ(parse_oco_kind(to_string(k)), k);
  EXPECT_THROW(parse_oco_kind("scripted"), ConfigError);
  EXPECT_THROW(parse_safe_set_kind("explicit"), ConfigError);
}

TEST(Deviations, DependOnConfig) {
  ScenarioConfig cfg = reactor_config();
  const auto has = [](const std::vector<Deviation>& ds, const std::string& id) {
    return std::any_of(ds.begin(), ds.end(), [&](const Deviation& d) { return d.id == id; });
  };
  auto ds = deviations(cfg);
  EXPECT_TRUE(has(ds, "controller_synthesis"));
  EXPECT_TRUE(has(ds, "ogd_gradient_index"));
  EXPECT_TRUE(has(ds, "prop1_patch"));
  EXPECT_FALSE(has(ds, "fault_injection"));
  EXPECT_TRUE(has(ds, "q_period"));
  cfg.oco.kind = OcoKind::kPrevOpt;
  cfg.level_scale = 2.0;
  cfg.cost.q_period = 24000.0;
  ds = deviations(cfg);
  EXPECT_FALSE(has(ds, "ogd_gradient_index"));
  EXPECT_TRUE(has(ds, "fault_injection"));
  EXPECT_FALSE(has(ds, "q_period"));
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  for (int jobs : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(37, jobs, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  EXPECT_THROW(parallel_for(10, 4, [](int i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
  EXPECT_NO_THROW(parallel_for(0, 4, [](int) { throw std::runtime_error("never"); }));
}

TEST(CmdSimulate, SingleStepWritesOneRow) {
  TempDir dir;
  ScenarioConfig cfg = reactor_config();
  cfg.T = 1;
  cfg.out_dir = dir.path();
  EXPECT_EQ(cmd_simulate(cfg), 0);
  const std::string csv = slurp(dir.path() / "trajectory.csv");
  EXPECT_EQ(count_lines(csv), 2u);
  EXPECT_EQ(csv.rfind("t,c,theta,u,r,v,eta,beta,L_stage,Ls_r,Ls_v,Ls_eta,V,level,margin_worst\n", 0), 0u)
      << csv.substr(0, csv.find('\n'));
  EXPECT_EQ(csv.substr(csv.find('\n') + 1, 2), "0,");
  const std::string report = slurp(dir.path() / "report.json");
  EXPECT_NE(report.find("\"deviations\""), std::string::npos);
  EXPECT_NE(report.find("\"violations\": 0"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path() / "timings.json"));
}

TEST(CmdSimulate, DeterministicOutputs) {
  TempDir a, b;
  ScenarioConfig cfg = reactor_config();
  cfg.T = 60;
  cfg.oco.kind = OcoKind::kPrevOpt;
  cfg.safe_set = SafeSetKind::kVariable;
  cfg.out_dir = a.path();
  ASSERT_EQ(cmd_simulate(cfg), 0);
  cfg.out_dir = b.path();
  ASSERT_EQ(cmd_simulate(cfg), 0);
  for (const char* name : {"trajectory.csv", "report.json"}) {
    const std::string x = slurp(a.path() / name);
    EXPECT_FALSE(x.empty());
    EXPECT_EQ(x, slurp(b.path() / name)) << name;
  }
}

TEST(CmdSimulate, RegisterScenario) {
  TempDir dir;
  ScenarioConfig cfg = parse("[plant]\nkind = register\n[oco]\nstep_size = 0.1\n[run]\nT = 30\n");
  cfg.out_dir = dir.path();
  EXPECT_EQ(cmd_simulate(cfg), 0);
  const std::string csv = slurp(dir.path() / "trajectory.csv");
  EXPECT_EQ(count_lines(csv), 31u);
  EXPECT_EQ(csv.rfind("t,u_lag1,u,r,v,", 0), 0u);
  EXPECT_NE(slurp(dir.path() / "report.json").find("diagonal_mismatch"), std::string::npos);
}

TEST(CmdTable1, NeedsReactor) {
  ScenarioConfig cfg = parse("[plant]\nkind = register\n");
  EXPECT_THROW(cmd_table1(cfg), ConfigError);
}

TEST(WriteTrajectoryCsv, FullPrecisionRoundTrip) {
  RegretLedger ledger;
  StepRecord rec;
  rec.t = 0;
  rec.x = Vec::Constant(1, 0.1);
  rec.u = Vec::Constant(1, 1.0 / 3.0);
  rec.margin = 1.0;
  ledger.append(rec);
  const ShiftRegisterPlant plant = shift_register_plant(1, 1);
  std::ostringstream os;
  write_trajectory_csv(os, ledger, plant);
  const std::string row = os.str().substr(os.str().find('\n') + 1);
  std::istringstream in(row);
  std::string cell;
  std::getline(in, cell, ',');
  std::getline(in, cell, ',');
  EXPECT_EQ(std::stod(cell), 0.1);
  std::getline(in, cell, ',');
  EXPECT_EQ(std::stod(cell), 1.0 / 3.0);
}
