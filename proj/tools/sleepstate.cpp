#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sleepstate/error.hpp"
#include "sleepstate/pipeline.hpp"

namespace pl = sleepstate::pipeline;
using sleepstate::ExitCode;

namespace {

int code(ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discover recurring spectral states in long single-channel recordings"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  bool progress = false;
  std::optional<std::size_t> max_sweeps;
  std::string demo_dir = "demo_run";

  auto add_config = [&](CLI::App* sub) { sub->add_option("-c,--config", config_path, "run config (JSON)")->required(); };
  auto* simulate = app.add_subcommand("simulate", "generate the built-in multi-stage synthetic recordings");
  add_config(simulate);
  auto* spectra = app.add_subcommand("spectra", "window, taper and extract band observations");
  add_config(spectra);
  auto* infer = app.add_subcommand("infer", "run the sampler for every subject");
  add_config(infer);
  infer->add_flag("--resume", resume, "continue from the subject checkpoints");
  infer->add_option("--max-sweeps", max_sweeps, "stop after this many sweeps (checkpoint kept)");
  infer->add_flag("--progress", progress, "print progress to stderr");
  auto* cluster = app.add_subcommand("cluster", "cluster states across subjects");
  add_config(cluster);
  auto* report = app.add_subcommand("report", "write the evaluation bundle per subject");
  add_config(report);
  auto* demo = app.add_subcommand("demo", "run every stage on two small simulated subjects");
  demo->add_option("-o,--output", demo_dir, "output directory");
  demo->add_flag("--progress", progress, "print progress to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : code(ExitCode::validation);
  }

  try {
    if (demo->parsed()) {
      std::filesystem::path out = demo_dir;
      if (const char* root = std::getenv(pl::kOutputRootEnv); root != nullptr && *root != '\0') out = root;
      pl::cmd_demo(out, progress);
      std::cout << "demo outputs in " << out.string() << "\n";
      return code(ExitCode::ok);
    }
    const pl::RunConfig config = pl::load_config(config_path);
    if (simulate->parsed()) pl::cmd_simulate(config);
    if (spectra->parsed()) pl::cmd_spectra(config);
    if (infer->parsed()) pl::cmd_infer(config, {resume, max_sweeps, progress});
    if (cluster->parsed()) pl::cmd_cluster(config);
    if (report->parsed()) pl::cmd_report(config);
    return code(ExitCode::ok);
  } catch (const sleepstate::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code(ExitCode::validation);
  } catch (const sleepstate::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return code(ExitCode::numerical);
  } catch (const sleepstate::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return code(ExitCode::invariant);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code(ExitCode::validation);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return code(ExitCode::validation);
  }
}
