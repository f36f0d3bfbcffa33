#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ocorg/harness.hpp"

namespace ocorg {

enum class PlantKind { kCstr, kRegister };

/// Everything a command needs. Every field defaults to the reactor experiment,
/// so an empty file reproduces it.
struct ScenarioConfig {
  PlantKind plant = PlantKind::kCstr;
  CstrParams cstr;
  Vec x0 = Vec::Zero(0);

  /// Constraint box; empty vectors mean the reactor box.
  Vec x_lo = Vec::Zero(0), x_hi = Vec::Zero(0), u_lo = Vec::Zero(0), u_hi = Vec::Zero(0);

  ReferenceWindow window{0.4, 0.85};
  double r0 = 0.6519;

  int schedule_points = 181;
  SafeSetKind safe_set = SafeSetKind::kFixed;
  DecreaseScan scan;
  /// Multiplies every set level. Values above 1 inject an unsound set.
  double level_scale = 1.0;

  GovernorKind governor = GovernorKind::kScalar;
  OcoOptions oco;

  int T = 2400;
  CstrCostParams cost;

  int register_memory = 1;
  int register_inputs = 1;
  SwitchingCostParams switching;

  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 1;
  int jobs = 1;

  /// Sample counts of the verification suite.
  int verify_samples = 10000;
  int verify_rollout = 50;
  int lyapunov_samples = 1000;
  int governor_instances = 1000;
  /// Checks that evaluate the converse Lyapunov function fail instead of
  /// running when its horizon N exceeds this.
  int max_converse_horizon = 100000;
};

/// Reads an INI file. Throws ConfigError naming the section, key and line.
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(std::istream& in, const std::string& source = "<config>");

/// Throws ConfigError on unknown kinds, T < 1 or r0 outside the window.
void validate_config(const ScenarioConfig& cfg);

std::string to_string(SafeSetKind kind);
std::string to_string(GovernorKind kind);
std::string to_string(OcoKind kind);
SafeSetKind parse_safe_set_kind(const std::string& s);
GovernorKind parse_governor_kind(const std::string& s);
OcoKind parse_oco_kind(const std::string& s);

/// Reactor controller and both calibrated sets.
struct Calibration {
  std::shared_ptr<const TrackingController> ctrl;
  BoxConstraints box;
  std::vector<NodeLevel> nodes;
  double V_max = 0.0;
  LevelCertificate level_cert;
  std::shared_ptr<const SafeSet> fixed;
  std::shared_ptr<const SafeSet> variable;

  std::shared_ptr<const SafeSet> set(SafeSetKind kind) const;
};

/// Gain schedule, decrease-verified node levels, fixed and variable sets.
/// Throws SynthesisError or InfeasibleError on calibration failure.
Calibration calibrate(const ScenarioConfig& cfg);

Scenario make_scenario(const ScenarioConfig& cfg, const Calibration& cal);
Scenario make_scenario(const ScenarioConfig& cfg, const Calibration& cal, OcoKind oco,
                       SafeSetKind set);

/// Register (input-memory) experiment of the config.
OcoMResult run_register(const ScenarioConfig& cfg);

/// Trajectory CSV with state and input columns named by the plant.
void write_trajectory_csv(std::ostream& os, const RegretLedger& ledger, const Plant& plant);

/// One entry of the deviations block in every report.
struct Deviation {
  std::string id;
  std::string description;
};
std::vector<Deviation> deviations(const ScenarioConfig& cfg);

/// Exit codes: 0 success, 1 runtime failure or failed check, 2 config error.
int cmd_simulate(const ScenarioConfig& cfg);
int cmd_table1(const ScenarioConfig& cfg);
int cmd_verify(const ScenarioConfig& cfg);
int cmd_constants(const ScenarioConfig& cfg);

/// Runs fn(0..n-1) on up to `jobs` worker threads; rethrows the first error.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace ocorg
