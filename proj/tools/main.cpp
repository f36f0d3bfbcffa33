// Command-line front end: simulate, table1, verify, constants.

#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ocorg/cli.hpp"
#include "ocorg/errors.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("ocorg");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("OCO_RG_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("OCO_RG_LOG='{}' is not a log level; keeping info", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Online reference optimization with a reference governor"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string governor;
  std::string safe_set;
  std::string oco;

  std::vector<CLI::Option*> seed_options;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Scenario INI file")->required();
    cmd->add_option("--out", out_dir, "Output directory");
    seed_options.push_back(cmd->add_option("--seed", seed, "Seed for sampling-based checks"));
    cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--governor", governor, "scalar | command");
    cmd->add_option("--safe-set", safe_set, "fixed | variable");
    cmd->add_option("--oco", oco, "ogd | prev-opt");
  };
  auto* simulate = app.add_subcommand("simulate", "Run one closed loop and write trajectory and report");
  auto* table1 = app.add_subcommand("table1", "Run the four OCO x safe-set combinations");
  auto* verify = app.add_subcommand("verify", "Run the property suite");
  auto* constants = app.add_subcommand("constants", "Emit the certificate and the gain schedule");
  for (auto* cmd : {simulate, table1, verify, constants}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ocorg::ScenarioConfig cfg = ocorg::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    for (const auto* opt : seed_options) {
      if (opt->count() > 0) cfg.seed = seed;
    }
    if (jobs > 0) cfg.jobs = jobs;
    if (!governor.empty()) cfg.governor = ocorg::parse_governor_kind(governor);
    if (!safe_set.empty()) cfg.safe_set = ocorg::parse_safe_set_kind(safe_set);
    if (!oco.empty()) cfg.oco.kind = ocorg::parse_oco_kind(oco);
    ocorg::validate_config(cfg);

    if (app.got_subcommand(simulate)) return ocorg::cmd_simulate(cfg);
    if (app.got_subcommand(table1)) return ocorg::cmd_table1(cfg);
    if (app.got_subcommand(verify)) return ocorg::cmd_verify(cfg);
    return ocorg::cmd_constants(cfg);
  } catch (const ocorg::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
