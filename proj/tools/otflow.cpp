#include "CLI11.hpp"
#include "otflow/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"otflow: parabolic optimal transport flow to steady state"};
  app.require_subcommand(1);

  std::string config, out_dir = "out", run_dir;

  CLI::App* verify = app.add_subcommand(
      "verify", "run the structural audits for a scenario");
  verify->add_option("--config", config, "scenario config file")->required();
  std::string audit_csv;
  verify->add_option("--csv", audit_csv, "write the audit table here");

  CLI::App* run = app.add_subcommand(
      "run", "verify, initialize and march the flow to steady state");
  run->add_option("--config", config, "scenario config file")->required();
  run->add_option("--out", out_dir, "output directory");

  CLI::App* report = app.add_subcommand(
      "report", "recompute verdicts and emit plot-ready slices from a run");
  report->add_option("--dir", run_dir, "run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) return otflow::cmd_verify(config, audit_csv);
  if (run->parsed()) return otflow::cmd_run(config, out_dir);
  if (report->parsed()) return otflow::cmd_report(run_dir);
  return otflow::kExitIo;
}
