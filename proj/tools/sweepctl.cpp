// sweepctl: solver and verifier workflows for optimal control of perturbed
// sweeping processes via exponential penalization.
//
// Subcommands: simulate | optimize | certify | sweep | oracle-compare.
// Exit codes: 0 ok, 1 certificate fail, 2 integration fail, 3 config
// violation, 4 optimizer stall, 5 I/O or parse error.

#include "sweep/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

sweep::RunConfig build_config(const std::string& config_file,
                              const std::vector<std::string>& sets) {
  sweep::RunConfig cfg;
  if (!config_file.empty()) cfg = sweep::RunConfig::from_file(config_file);
  for (const auto& s : sets) cfg.set(s);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimal control of perturbed sweeping processes via exponential penalization"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> sets;
  std::string out_dir = "out";
  app.add_option("--config", config_file, "key=value config file");
  app.add_option("--set", sets, "override a config key (key=value), repeatable");
  app.add_option("--out", out_dir, "output directory");

  auto* sim = app.add_subcommand("simulate", "integrate the penalized dynamic for one gamma");
  std::string control_file;
  sim->add_option("--control", control_file, "control CSV (t,u1..um); default: reference control");

  auto* opt = app.add_subcommand("optimize", "run the gamma-continuation solve");

  auto* cert = app.add_subcommand("certify", "check a candidate against the optimality conditions");
  bool analytic = false;
  std::string candidate_dir;
  cert->add_flag("--analytic", analytic, "certify the built-in closed-form candidate");
  cert->add_option("--candidate", candidate_dir,
                   "directory with candidate_trajectory.csv and candidate_multipliers.json");

  auto* swp = app.add_subcommand("sweep", "integrate the reference control across the schedule");
  auto* orc = app.add_subcommand("oracle-compare", "penalty vs catching-up cross-validation");

  CLI11_PARSE(app, argc, argv);

  try {
    const sweep::RunConfig cfg = build_config(config_file, sets);
    if (sim->parsed()) return sweep::cmd::cmd_simulate(cfg, out_dir, control_file);
    if (opt->parsed()) return sweep::cmd::cmd_optimize(cfg, out_dir);
    if (cert->parsed()) {
      if (!analytic && candidate_dir.empty()) {
        std::cerr << "certify: need --analytic or --candidate <dir>\n";
        return sweep::cmd::Exit::config_violation;
      }
      return sweep::cmd::cmd_certify(cfg, out_dir, analytic, candidate_dir);
    }
    if (swp->parsed()) return sweep::cmd::cmd_sweep(cfg, out_dir);
    if (orc->parsed()) return sweep::cmd::cmd_oracle_compare(cfg, out_dir);
    return sweep::cmd::Exit::config_violation;
  } catch (const sweep::GammaTooSmall& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::config_violation;
  } catch (const sweep::ScheduleNotMonotone& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::config_violation;
  } catch (const sweep::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::config_violation;
  } catch (const sweep::UnknownInstance& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::config_violation;
  } catch (const sweep::Stalled& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::optimizer_stall;
  } catch (const sweep::ParseError& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::io_error;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::io_error;
  } catch (const sweep::Error& e) {
    // BlowUp, LeftC, NonFinite and the other numeric failures
    std::cerr << e.what() << "\n";
    return sweep::cmd::Exit::integration_fail;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return sweep::cmd::Exit::integration_fail;
  }
}
