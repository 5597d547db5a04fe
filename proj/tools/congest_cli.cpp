// congest: run a scenario from a JSON configuration and write its artifacts.
//
//   congest <command> [--config path] [--out dir] [--seed n] [--quiet]
//
// Exit status: 0 when every selected check passes, 1 when a check fails,
// 2 on invalid configuration or usage, 3 when a solver throws.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "congest/run.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw congest::ConfigError("", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd motion and density-constrained mean field game solvers"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "Scenario configuration (JSON, schema_version 1)");
  app.add_option("--out", out_dir, "Output directory (default: the config 'output' field, else out/<command>)");
  app.add_option("--seed", seed, "Seed overriding the config value");
  app.add_flag("--quiet", quiet, "Only report failures");

  const std::vector<std::pair<std::string, std::string>> help{
      {"crowd", "gradient flow of a crowd: JKO in 1D, projected transport in 2D"},
      {"mfg-penalized", "MFG with the soft congestion penalty rho^(m-1)"},
      {"mfg-constrained", "MFG with the hard constraint rho <= 1 and a pressure"},
      {"variational", "Benamou-Brenier problem with rho <= 1 by Chambolle-Pock"},
      {"verify-example", "the nothing-moves equilibrium with full verification"},
      {"m-sweep", "penalized flows for several m against the constrained flow"}};
  for (const auto& [name, desc] : help) app.add_subcommand(name, desc);

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  const congest::Command cmd = *congest::parse_command(name);

  congest::ScenarioConfig cfg;
  try {
    if (!config_path.empty()) {
      cfg = congest::parse_config_text(read_file(config_path));
    } else if (cmd == congest::Command::VerifyExample) {
      cfg = congest::nothing_moves_config();
    } else {
      std::cerr << "error: " << name << " needs --config\n";
      return 2;
    }
  } catch (const congest::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (seed) cfg.seed = *seed;
  const std::string out = !out_dir.empty() ? out_dir : !cfg.output.empty() ? cfg.output : "out/" + name;

  try {
    const congest::RunResult r = congest::run_scenario(cmd, cfg, out);
    if (!quiet) {
      std::cout << r.summary << "artifacts: " << out << "\n";
    } else {
      for (const auto& c : r.checks) {
        if (!c.passed()) std::cout << "FAIL " << c.name << " = " << congest::format_double(c.value) << "\n";
      }
    }
    return r.ok() ? 0 : 1;
  } catch (const congest::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    std::ofstream(std::filesystem::path(out) / "summary.txt") << "command: " << name << "\nsolver failure: " << e.what()
                                                              << "\nresult: FAIL\n";
    return 3;
  }
}
