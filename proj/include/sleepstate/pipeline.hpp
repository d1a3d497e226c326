#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleepstate/clustering.hpp"
#include "sleepstate/inference.hpp"
#include "sleepstate/signal.hpp"

namespace sleepstate::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Environment variable that, when set, replaces the configured output directory.
inline constexpr const char* kOutputRootEnv = "SLEEPSTATE_OUTPUT_ROOT";

struct SubjectInput {
  std::string id;
  std::string input;           // sample file
  std::string format = "csv";  // "csv" or "f32"
  std::string hypnogram;       // optional label file
  double hypnogram_epoch_seconds = 30.0;
};

struct SimulationConfig {
  std::vector<std::string> subjects{"sim1"};
  std::size_t windows = 2000;
  std::uint64_t seed = 7;
};

struct EvaluationConfig {
  double alpha_lo_hz = 10.5;
  double alpha_hi_hz = 12.5;
  std::vector<int> stages{5, 4, 3, 2, 1};
};

struct RunConfig {
  std::vector<SubjectInput> subjects;
  double fs = 200.0;
  double window_seconds = 15.0;
  std::vector<Band> bands = default_sleep_bands();
  double time_bandwidth = 4.0;
  std::size_t tapers = 5;
  double artifact_percentile = 95.0;
  InferenceConfig inference;
  std::size_t checkpoint_every = 500;
  KMeansConfig clustering;
  std::size_t distortion_sweep_max = 0;  // 0 disables the sweep over C
  EvaluationConfig evaluation;
  SimulationConfig simulation;
  std::string output_dir = "run";
  fs::path base_dir;  // relative paths resolve against this

  void validate() const;
  std::size_t window_length() const;
  fs::path output() const;
  fs::path resolve(const std::string& p) const;
  const SubjectInput& subject(const std::string& id) const;
};

json config_to_json(const RunConfig& config);
RunConfig config_from_json(const json& j, const fs::path& base_dir);
// Reads a config file; relative paths resolve against its directory and the
// output directory honours kOutputRootEnv.
RunConfig load_config(const fs::path& path);

// Stage fingerprints. Each covers the stage's own settings and the
// fingerprint of everything upstream, so stale artifacts are detected.
std::string simulate_hash(const RunConfig& config);
std::string spectra_hash(const RunConfig& config, const SubjectInput& subject);
std::string infer_hash(const RunConfig& config, const SubjectInput& subject);
std::string cluster_hash(const RunConfig& config);
std::string report_hash(const RunConfig& config, const SubjectInput& subject, bool with_clusters);

struct Paths {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path subject_dir(const std::string& id) const { return root / id; }
  fs::path observations(const std::string& id) const { return subject_dir(id) / "observations.jsonl"; }
  fs::path qc(const std::string& id) const { return subject_dir(id) / "qc.json"; }
  fs::path samples(const std::string& id) const { return subject_dir(id) / "samples.jsonl"; }
  fs::path checkpoint(const std::string& id) const { return subject_dir(id) / "checkpoint.json"; }
  fs::path trace(const std::string& id) const { return subject_dir(id) / "trace.csv"; }
  fs::path cluster_trajectory(const std::string& id) const { return subject_dir(id) / "cluster_trajectory.csv"; }
  fs::path report_dir(const std::string& id) const { return subject_dir(id) / "report"; }
  fs::path cluster_manifest() const { return root / "clusters" / "manifest.json"; }
  fs::path run_manifest() const { return root / "manifest.json"; }
};

struct InferOptions {
  bool resume = false;
  std::optional<std::size_t> max_sweeps;  // stop (with a checkpoint) after this many sweeps in this invocation
  bool progress = false;
};

void cmd_simulate(const RunConfig& config);
void cmd_spectra(const RunConfig& config);
void cmd_infer(const RunConfig& config, const InferOptions& options = {});
void cmd_cluster(const RunConfig& config);
// Throws InvariantViolation after writing the bundle if a check failed.
void cmd_report(const RunConfig& config);

// Config used by `demo`: two small simulated subjects.
RunConfig demo_config(const fs::path& output_dir);
void cmd_demo(const fs::path& output_dir, bool progress = false);

// Writes manifest.json (config plus every stage fingerprint computable now).
void write_run_manifest(const RunConfig& config);

}  // namespace sleepstate::pipeline
