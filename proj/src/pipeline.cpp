#include "sleepstate/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "sleepstate/dpss.hpp"
#include "sleepstate/error.hpp"
#include "sleepstate/evaluation.hpp"
#include "sleepstate/io.hpp"
#include "sleepstate/kernels.hpp"
#include "sleepstate/simulator.hpp"

namespace sleepstate::pipeline {

namespace {

using io::format_double;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

json inference_json(const InferenceConfig& c, std::size_t checkpoint_every) {
  const HyperPriors& p = c.priors;
  return {{"k_max", c.k_max},
          {"burn_in", c.burn_in},
          {"n_samples", c.n_samples},
          {"thin", c.thin},
          {"seed", c.seed},
          {"initial_states", c.initial_states},
          {"standardize", c.standardize},
          {"parallel", c.parallel},
          {"checkpoint_every", checkpoint_every},
          {"priors",
           {{"gamma_shape", p.gamma_shape},
            {"gamma_rate", p.gamma_rate},
            {"alpha_shape", p.alpha_shape},
            {"alpha_rate", p.alpha_rate},
            {"rate_shape", p.rate_shape},
            {"rate_rate", p.rate_rate},
            {"psd_shape", p.psd_shape}}}};
}

json bands_json(const std::vector<Band>& bands) {
  json out = json::array();
  for (const auto& b : bands) out.push_back({b.lo_hz, b.hi_hz});
  return out;
}

// Rethrows with the subject id prefixed, preserving the error category.
template <class F>
void for_subject(const SubjectInput& s, F&& body) {
  const std::string prefix = "subject " + s.id + ": ";
  try {
    body();
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const InvariantViolation& e) {
    throw InvariantViolation(prefix + e.what());
  } catch (const json::exception& e) {
    throw ValidationError(prefix + e.what());
  } catch (const fs::filesystem_error& e) {
    throw ValidationError(prefix + e.what());
  }
}

std::string csv_header(const std::string& kind, const std::string& hash) {
  return "# artifact=" + kind + " hash=" + hash + "\n";
}

std::string input_checksum(const RunConfig& config, const std::string& path) {
  if (path.empty()) return "";
  const fs::path p = config.resolve(path);
  if (!fs::exists(p)) throw ValidationError("input file not found: " + p.string());
  return io::sha256_file(p);
}

std::vector<double> load_samples(const RunConfig& config, const SubjectInput& s) {
  const fs::path p = config.resolve(s.input);
  if (s.format == "csv") return io::read_samples_csv(p);
  if (s.format == "f32") return io::read_samples_f32(p);
  throw ValidationError("unknown input format '" + s.format + "'");
}

std::vector<PosteriorSample> load_samples_file(const RunConfig& config, const SubjectInput& s, json* header) {
  const Paths paths{config.output()};
  auto file = io::read_json_lines(paths.samples(s.id), "samples", infer_hash(config, s));
  std::vector<PosteriorSample> out;
  for (const auto& r : file.records) out.push_back(io::sample_from_record(r));
  if (out.empty()) throw ValidationError("no posterior samples in " + paths.samples(s.id).string());
  if (header) *header = file.header;
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  if (!(fs > 0.0)) throw ValidationError("fs must be positive");
  if (!(window_seconds > 0.0)) throw ValidationError("window_seconds must be positive");
  window_length();
  if (bands.empty()) throw ValidationError("at least one band is required");
  if (!(artifact_percentile > 0.0 && artifact_percentile <= 100.0)) {
    throw ValidationError("artifact_percentile must lie in (0, 100]");
  }
  if (tapers < 1) throw ValidationError("taper count must be at least 1");
  inference.validate();
  if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be at least 1");
  clustering.validate();
  if (!(evaluation.alpha_lo_hz < evaluation.alpha_hi_hz)) throw ValidationError("alpha band must have lo < hi");
  std::set<std::string> ids;
  for (const auto& s : subjects) {
    if (s.id.empty()) throw ValidationError("subject id must not be empty");
    if (s.id.find_first_of("/\\") != std::string::npos || s.id == "." || s.id == ".." || s.id == "data" ||
        s.id == "clusters") {
      throw ValidationError("subject id '" + s.id + "' is not usable as a directory name");
    }
    if (!ids.insert(s.id).second) throw ValidationError("duplicate subject id " + s.id);
    if (s.format != "csv" && s.format != "f32") throw ValidationError("subject " + s.id + ": format must be csv or f32");
    if (!(s.hypnogram_epoch_seconds > 0.0)) throw ValidationError("subject " + s.id + ": bad hypnogram epoch length");
  }
  if (simulation.windows < 1) throw ValidationError("simulation.windows must be at least 1");
}

std::size_t RunConfig::window_length() const {
  const double j = fs * window_seconds;
  const auto n = static_cast<std::size_t>(std::llround(j));
  if (n < 1 || std::abs(j - static_cast<double>(n)) > 1e-9 * std::max(1.0, j)) {
    throw ValidationError("fs * window_seconds must be a positive integer");
  }
  return n;
}

fs::path RunConfig::output() const { return resolve(output_dir); }

fs::path RunConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

const SubjectInput& RunConfig::subject(const std::string& id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return s;
  }
  throw ValidationError("no subject with id " + id);
}

json config_to_json(const RunConfig& c) {
  json subjects = json::array();
  for (const auto& s : c.subjects) {
    subjects.push_back({{"id", s.id},
                        {"input", s.input},
                        {"format", s.format},
                        {"hypnogram", s.hypnogram},
                        {"hypnogram_epoch_seconds", s.hypnogram_epoch_seconds}});
  }
  return {{"subjects", subjects},
          {"fs", c.fs},
          {"window_seconds", c.window_seconds},
          {"bands", bands_json(c.bands)},
          {"taper", {{"time_bandwidth", c.time_bandwidth}, {"count", c.tapers}}},
          {"artifact_percentile", c.artifact_percentile},
          {"inference", inference_json(c.inference, c.checkpoint_every)},
          {"clustering",
           {{"clusters", c.clustering.clusters},
            {"restarts", c.clustering.restarts},
            {"max_iterations", c.clustering.max_iterations},
            {"seed", c.clustering.seed},
            {"sweep_max", c.distortion_sweep_max}}},
          {"evaluation",
           {{"alpha_band", {c.evaluation.alpha_lo_hz, c.evaluation.alpha_hi_hz}}, {"stages", c.evaluation.stages}}},
          {"simulation",
           {{"subjects", c.simulation.subjects}, {"windows", c.simulation.windows}, {"seed", c.simulation.seed}}},
          {"output_dir", c.output_dir}};
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"subjects", "fs", "window_seconds", "bands", "taper", "artifact_percentile", "inference", "clustering",
              "evaluation", "simulation", "output_dir"},
             "config");
  RunConfig c;
  c.base_dir = base_dir;
  if (j.contains("subjects")) {
    for (const auto& js : j.at("subjects")) {
      check_keys(js, {"id", "input", "format", "hypnogram", "hypnogram_epoch_seconds"}, "subject entry");
      SubjectInput s;
      s.id = get_or<std::string>(js, "id", "");
      s.input = get_or<std::string>(js, "input", "");
      s.format = get_or<std::string>(js, "format", "csv");
      s.hypnogram = get_or<std::string>(js, "hypnogram", "");
      s.hypnogram_epoch_seconds = get_or<double>(js, "hypnogram_epoch_seconds", 30.0);
      if (s.input.empty()) throw ValidationError("subject " + s.id + " has no input path");
      c.subjects.push_back(std::move(s));
    }
  }
  c.fs = get_or<double>(j, "fs", c.fs);
  c.window_seconds = get_or<double>(j, "window_seconds", c.window_seconds);
  if (j.contains("bands")) {
    c.bands.clear();
    for (const auto& b : j.at("bands")) {
      if (!b.is_array() || b.size() != 2) throw ValidationError("each band must be a [lo, hi] pair");
      c.bands.push_back({b[0].get<double>(), b[1].get<double>()});
    }
  }
  if (j.contains("taper")) {
    const json& t = j.at("taper");
    check_keys(t, {"time_bandwidth", "count"}, "taper");
    c.time_bandwidth = get_or<double>(t, "time_bandwidth", c.time_bandwidth);
    c.tapers = get_or<std::size_t>(t, "count", c.tapers);
  }
  c.artifact_percentile = get_or<double>(j, "artifact_percentile", c.artifact_percentile);
  if (j.contains("inference")) {
    const json& in = j.at("inference");
    check_keys(in,
               {"k_max", "burn_in", "n_samples", "thin", "seed", "initial_states", "standardize", "parallel",
                "checkpoint_every", "priors"},
               "inference");
    InferenceConfig& ic = c.inference;
    ic.k_max = get_or<std::size_t>(in, "k_max", ic.k_max);
    ic.burn_in = get_or<std::size_t>(in, "burn_in", ic.burn_in);
    ic.n_samples = get_or<std::size_t>(in, "n_samples", ic.n_samples);
    ic.thin = get_or<std::size_t>(in, "thin", ic.thin);
    ic.seed = get_or<std::uint64_t>(in, "seed", ic.seed);
    ic.initial_states = get_or<std::size_t>(in, "initial_states", ic.initial_states);
    ic.standardize = get_or<bool>(in, "standardize", ic.standardize);
    ic.parallel = get_or<bool>(in, "parallel", ic.parallel);
    c.checkpoint_every = get_or<std::size_t>(in, "checkpoint_every", c.checkpoint_every);
    if (in.contains("priors")) {
      const json& p = in.at("priors");
      check_keys(p, {"gamma_shape", "gamma_rate", "alpha_shape", "alpha_rate", "rate_shape", "rate_rate", "psd_shape"},
                 "priors");
      HyperPriors& h = ic.priors;
      h.gamma_shape = get_or<double>(p, "gamma_shape", h.gamma_shape);
      h.gamma_rate = get_or<double>(p, "gamma_rate", h.gamma_rate);
      h.alpha_shape = get_or<double>(p, "alpha_shape", h.alpha_shape);
      h.alpha_rate = get_or<double>(p, "alpha_rate", h.alpha_rate);
      h.rate_shape = get_or<double>(p, "rate_shape", h.rate_shape);
      h.rate_rate = get_or<double>(p, "rate_rate", h.rate_rate);
      h.psd_shape = get_or<double>(p, "psd_shape", h.psd_shape);
    }
  }
  if (j.contains("clustering")) {
    const json& cl = j.at("clustering");
    check_keys(cl, {"clusters", "restarts", "max_iterations", "seed", "sweep_max"}, "clustering");
    c.clustering.clusters = get_or<std::size_t>(cl, "clusters", c.clustering.clusters);
    c.clustering.restarts = get_or<std::size_t>(cl, "restarts", c.clustering.restarts);
    c.clustering.max_iterations = get_or<std::size_t>(cl, "max_iterations", c.clustering.max_iterations);
    c.clustering.seed = get_or<std::uint64_t>(cl, "seed", c.clustering.seed);
    c.distortion_sweep_max = get_or<std::size_t>(cl, "sweep_max", c.distortion_sweep_max);
  }
  if (j.contains("evaluation")) {
    const json& ev = j.at("evaluation");
    check_keys(ev, {"alpha_band", "stages"}, "evaluation");
    if (ev.contains("alpha_band")) {
      const auto a = ev.at("alpha_band").get<std::vector<double>>();
      if (a.size() != 2) throw ValidationError("evaluation.alpha_band must be [lo, hi]");
      c.evaluation.alpha_lo_hz = a[0];
      c.evaluation.alpha_hi_hz = a[1];
    }
    c.evaluation.stages = get_or<std::vector<int>>(ev, "stages", c.evaluation.stages);
  }
  if (j.contains("simulation")) {
    const json& sm = j.at("simulation");
    check_keys(sm, {"subjects", "windows", "seed"}, "simulation");
    c.simulation.subjects = get_or<std::vector<std::string>>(sm, "subjects", c.simulation.subjects);
    c.simulation.windows = get_or<std::size_t>(sm, "windows", c.simulation.windows);
    c.simulation.seed = get_or<std::uint64_t>(sm, "seed", c.simulation.seed);
  }
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  fs::path base = path.parent_path();
  if (base.empty()) base = ".";
  RunConfig c = config_from_json(j, base);
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') c.output_dir = fs::absolute(root).string();
  return c;
}

// ---------------------------------------------------------------- hashes

std::string simulate_hash(const RunConfig& c) {
  const json j = {{"stage", "simulate"},
                  {"fs", c.fs},
                  {"window_seconds", c.window_seconds},
                  {"subjects", c.simulation.subjects},
                  {"windows", c.simulation.windows},
                  {"seed", c.simulation.seed}};
  return io::sha256_hex(j.dump());
}

std::string spectra_hash(const RunConfig& c, const SubjectInput& s) {
  const json j = {{"stage", "spectra"},
                  {"subject", s.id},
                  {"format", s.format},
                  {"input_sha256", input_checksum(c, s.input)},
                  {"fs", c.fs},
                  {"window_seconds", c.window_seconds},
                  {"bands", bands_json(c.bands)},
                  {"time_bandwidth", c.time_bandwidth},
                  {"tapers", c.tapers},
                  {"artifact_percentile", c.artifact_percentile}};
  return io::sha256_hex(j.dump());
}

std::string infer_hash(const RunConfig& c, const SubjectInput& s) {
  json inf = inference_json(c.inference, c.checkpoint_every);
  inf.erase("parallel");
  inf.erase("checkpoint_every");
  const json j = {{"stage", "infer"}, {"upstream", spectra_hash(c, s)}, {"inference", inf}};
  return io::sha256_hex(j.dump());
}

std::string cluster_hash(const RunConfig& c) {
  json up = json::array();
  for (const auto& s : c.subjects) up.push_back({s.id, infer_hash(c, s)});
  const json j = {{"stage", "cluster"},
                  {"upstream", up},
                  {"clusters", c.clustering.clusters},
                  {"restarts", c.clustering.restarts},
                  {"max_iterations", c.clustering.max_iterations},
                  {"seed", c.clustering.seed},
                  {"sweep_max", c.distortion_sweep_max}};
  return io::sha256_hex(j.dump());
}

std::string report_hash(const RunConfig& c, const SubjectInput& s, bool with_clusters) {
  const json j = {{"stage", "report"},
                  {"upstream", infer_hash(c, s)},
                  {"clusters", with_clusters ? cluster_hash(c) : ""},
                  {"hypnogram_sha256", input_checksum(c, s.hypnogram)},
                  {"hypnogram_epoch_seconds", s.hypnogram_epoch_seconds},
                  {"alpha_band", {c.evaluation.alpha_lo_hz, c.evaluation.alpha_hi_hz}},
                  {"stages", c.evaluation.stages}};
  return io::sha256_hex(j.dump());
}

void write_run_manifest(const RunConfig& c) {
  json m;
  json cfg = config_to_json(c);
  cfg.erase("output_dir");
  m["config"] = cfg;
  m["simulate_hash"] = simulate_hash(c);
  json subjects = json::object();
  for (const auto& s : c.subjects) {
    json e;
    const fs::path in = c.resolve(s.input);
    if (fs::exists(in)) {
      e["input_sha256"] = io::sha256_file(in);
      e["spectra_hash"] = spectra_hash(c, s);
      e["infer_hash"] = infer_hash(c, s);
    } else {
      e["input_sha256"] = nullptr;
    }
    subjects[s.id] = e;
  }
  m["subjects"] = subjects;
  bool inputs_ready = std::all_of(c.subjects.begin(), c.subjects.end(),
                                  [&](const SubjectInput& s) { return fs::exists(c.resolve(s.input)); });
  m["cluster_hash"] = inputs_ready && !c.subjects.empty() ? json(cluster_hash(c)) : json(nullptr);
  m["run_hash"] = io::sha256_hex(m.dump());
  io::write_file(Paths{c.output()}.run_manifest(), m.dump(2) + "\n");
}

// ---------------------------------------------------------------- simulate

void cmd_simulate(const RunConfig& config) {
  config.validate();
  const Paths paths{config.output()};
  const std::size_t J = config.window_length();
  const auto stages = default_stages(config.fs);
  const Matrix transition = default_transition();
  const std::string hash = simulate_hash(config);

  std::ostringstream tm;
  tm << csv_header("transition_matrix", hash) << "from";
  for (const auto& s : stages) tm << ',' << s.name;
  tm << '\n';
  for (std::size_t i = 0; i < stages.size(); ++i) {
    tm << stages[i].name;
    for (double p : transition[i]) tm << ',' << format_double(p);
    tm << '\n';
  }
  io::write_file(paths.data_dir() / "transition.csv", tm.str());

  std::ostringstream psd;
  psd << csv_header("theoretical_psd", hash) << "bin,freq_hz";
  for (const auto& s : stages) psd << ',' << s.name;
  psd << '\n';
  std::vector<double> freqs;
  for (std::size_t k = 0; k < J / 2; ++k) freqs.push_back(config.fs * static_cast<double>(k) / static_cast<double>(J));
  std::vector<std::vector<double>> table;
  for (const auto& s : stages) table.push_back(theoretical_psd(s, config.fs, freqs, J));
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    psd << k << ',' << format_double(freqs[k]);
    for (const auto& col : table) psd << ',' << format_double(col[k]);
    psd << '\n';
  }
  io::write_file(paths.data_dir() / "theoretical_psd.csv", psd.str());

  for (std::size_t i = 0; i < config.simulation.subjects.size(); ++i) {
    const std::string& id = config.simulation.subjects[i];
    const std::uint64_t seed = config.simulation.seed + 0x9E3779B97F4A7C15ULL * (i + 1);
    const SimGroundTruth gt = simulate(stages, transition, config.simulation.windows, J, config.fs, seed);

    std::string samples = csv_header("simulated_samples", hash);
    samples.reserve(gt.samples.size() * 22);
    for (double v : gt.samples) {
      samples += format_double(v);
      samples += '\n';
    }
    io::write_file(paths.data_dir() / (id + ".csv"), samples);

    std::ostringstream truth, hyp;
    truth << csv_header("ground_truth", hash) << "window,stage_index,stage,label\n";
    for (std::size_t t = 0; t < gt.stages.size(); ++t) {
      const SimStage& s = stages[gt.stages[t]];
      truth << t << ',' << gt.stages[t] << ',' << s.name << ',' << s.label << '\n';
      hyp << s.label << '\n';
    }
    io::write_file(paths.data_dir() / (id + ".truth.csv"), truth.str());
    io::write_file(paths.data_dir() / (id + ".hypnogram.csv"), hyp.str());
  }
}

// ---------------------------------------------------------------- spectra

void cmd_spectra(const RunConfig& config) {
  config.validate();
  if (config.subjects.empty()) throw ValidationError("config lists no subjects");
  const Paths paths{config.output()};
  const std::size_t J = config.window_length();
  const TaperBank bank = compute_dpss(J, config.time_bandwidth, config.tapers);
  const BandLayout layout = make_band_layout(config.bands, config.fs, J);
  const SpectralEngine engine(bank, layout);

  for (const auto& s : config.subjects) {
    for_subject(s, [&] {
      const std::string hash = spectra_hash(config, s);
      const std::vector<double> samples = load_samples(config, s);
      WindowedSeries ws = segment_windows(samples, config.fs, config.window_seconds);
      ws.valid = reject_artifacts(ws, config.artifact_percentile);
      const SpectralObservation obs = kernels::observe_series_parallel(ws, engine);

      const json header = io::artifact_header("observations", hash,
                                              {{"subject", s.id},
                                               {"windows", obs.windows()},
                                               {"bands", obs.bands},
                                               {"tapers", obs.tapers},
                                               {"fs", config.fs},
                                               {"window_length", J},
                                               {"band_edges", bands_json(config.bands)},
                                               {"time_bandwidth", config.time_bandwidth}});
      std::string out = header.dump() + "\n";
      for (std::size_t t = 0; t < obs.windows(); ++t) out += io::observation_record(obs, t).dump() + "\n";
      io::write_file(paths.observations(s.id), out);

      std::size_t rejected = 0;
      for (bool v : obs.valid) rejected += v ? 0 : 1;
      json hist = json::array();
      for (std::size_t b = 0; b < obs.bands; ++b) {
        std::map<std::size_t, std::size_t> h;
        for (std::size_t t = 0; t < obs.windows(); ++t) ++h[obs.selected_bin(t, b)];
        json hb = json::array();
        for (const auto& [bin, n] : h) {
          hb.push_back({{"bin", bin}, {"freq_hz", config.fs * static_cast<double>(bin) / static_cast<double>(J)},
                        {"count", n}});
        }
        hist.push_back({{"band", {config.bands[b].lo_hz, config.bands[b].hi_hz}}, {"selected", hb}});
      }
      const json qc = {{"artifact", "spectra_qc"},
                       {"hash", hash},
                       {"subject", s.id},
                       {"samples", samples.size()},
                       {"dropped_tail_samples", samples.size() - ws.count * J},
                       {"windows", obs.windows()},
                       {"rejected_windows", rejected},
                       {"artifact_percentile", config.artifact_percentile},
                       {"taper_concentrations", bank.concentrations},
                       {"selected_bins", hist}};
      io::write_file(paths.qc(s.id), qc.dump(2) + "\n");
    });
  }
  write_run_manifest(config);
}

// ---------------------------------------------------------------- infer

namespace {

std::string trace_line(const SweepInfo& info) {
  return std::to_string(info.iteration) + "," + std::to_string(info.occupied) + "," +
         std::to_string(info.instantiated) + "," + (info.truncation_reached ? "1" : "0") + "," +
         format_double(info.gamma) + "," + format_double(info.alpha) + "," + format_double(info.log_joint) + "\n";
}

void append(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ValidationError("cannot append to " + path.string());
  out << text;
  if (!out) throw ValidationError("write failed for " + path.string());
}

void write_checkpoint(const Paths& paths, const std::string& id, const std::string& hash, const ChainState& chain,
                      std::size_t samples_written) {
  const json ck = {{"artifact", "checkpoint"},
                   {"version", 1},
                   {"hash", hash},
                   {"samples_written", samples_written},
                   {"samples_bytes", fs::file_size(paths.samples(id))},
                   {"trace_bytes", fs::file_size(paths.trace(id))},
                   {"chain", io::chain_to_json(chain)}};
  io::write_file(paths.checkpoint(id), ck.dump() + "\n");
}

void infer_subject(const RunConfig& config, const SubjectInput& s, const InferOptions& options) {
  const Paths paths{config.output()};
  const std::string upstream = spectra_hash(config, s);
  const std::string hash = infer_hash(config, s);
  const auto file = io::read_json_lines(paths.observations(s.id), "observations", upstream);
  const SpectralObservation obs = io::observations_from_records(file.header, file.records);
  const InferenceData data = prepare_inference_data(obs, config.inference.standardize);
  const InferenceConfig& ic = config.inference;

  ChainState chain;
  std::size_t written = 0;
  bool resumed = false;
  if (options.resume && fs::exists(paths.checkpoint(s.id))) {
    const json ck = json::parse(io::read_file(paths.checkpoint(s.id)));
    if (ck.value("hash", "") != hash) {
      throw ValidationError("checkpoint " + paths.checkpoint(s.id).string() + " was written for manifest hash " +
                            ck.value("hash", "?") + " but the current config hashes to " + hash +
                            "; refusing to resume");
    }
    if (!fs::exists(paths.samples(s.id)) || !fs::exists(paths.trace(s.id))) {
      throw ValidationError("checkpoint exists but its sample or trace file is missing");
    }
    const auto samples_bytes = ck.at("samples_bytes").get<std::uintmax_t>();
    const auto trace_bytes = ck.at("trace_bytes").get<std::uintmax_t>();
    if (fs::file_size(paths.samples(s.id)) < samples_bytes || fs::file_size(paths.trace(s.id)) < trace_bytes) {
      throw ValidationError("sample or trace file is shorter than the checkpoint records");
    }
    fs::resize_file(paths.samples(s.id), samples_bytes);
    fs::resize_file(paths.trace(s.id), trace_bytes);
    chain = io::chain_from_json(ck.at("chain"));
    written = ck.at("samples_written").get<std::size_t>();
    if (chain.trajectory.size() != data.windows) throw ValidationError("checkpoint trajectory length mismatch");
    resumed = true;
  }
  if (!resumed) {
    chain = initialize_chain(data, ic);
    const json header = io::artifact_header("samples", hash,
                                            {{"upstream", upstream},
                                             {"subject", s.id},
                                             {"windows", data.windows},
                                             {"bands", data.bands},
                                             {"tapers", data.tapers},
                                             {"band_edges", bands_json(config.bands)},
                                             {"window_seconds", config.window_seconds},
                                             {"psd_shape", ic.priors.psd_shape},
                                             {"band_scale", data.band_scale},
                                             {"inference", inference_json(ic, config.checkpoint_every)}});
    io::write_file(paths.samples(s.id), header.dump() + "\n");
    io::write_file(paths.trace(s.id), csv_header("trace", hash) +
                                          "iteration,occupied,instantiated,truncation_reached,gamma,alpha,log_joint\n");
  }

  std::size_t done = 0;
  std::size_t truncated = 0;
  std::string trace_buf, sample_buf;
  auto flush = [&] {
    append(paths.trace(s.id), trace_buf);
    append(paths.samples(s.id), sample_buf);
    trace_buf.clear();
    sample_buf.clear();
  };
  while (chain.iteration < ic.total_sweeps()) {
    if (options.max_sweeps && done >= *options.max_sweeps) break;
    const SweepInfo info = gibbs_sweep(chain, data, ic);
    ++done;
    if (info.truncation_reached) ++truncated;
    trace_buf += trace_line(info);
    if (ic.records(chain.iteration)) {
      sample_buf += io::sample_record(record_sample(chain, data, ic, info.log_joint)).dump() + "\n";
      ++written;
    }
    if (chain.iteration % config.checkpoint_every == 0) {
      flush();
      write_checkpoint(paths, s.id, hash, chain, written);
    }
    if (options.progress && chain.iteration % 100 == 0) {
      std::cerr << s.id << ": sweep " << chain.iteration << "/" << ic.total_sweeps() << " occupied " << info.occupied
                << " log joint " << info.log_joint << "\n";
    }
  }
  flush();
  write_checkpoint(paths, s.id, hash, chain, written);
  if (truncated > 0) {
    std::cerr << "warning: subject " << s.id << " hit the k_max=" << ic.k_max << " truncation in " << truncated
              << " sweeps\n";
  }
}

}  // namespace

void cmd_infer(const RunConfig& config, const InferOptions& options) {
  config.validate();
  if (config.subjects.empty()) throw ValidationError("config lists no subjects");
  for (const auto& s : config.subjects) for_subject(s, [&] { infer_subject(config, s, options); });
  write_run_manifest(config);
}

// ---------------------------------------------------------------- cluster

void cmd_cluster(const RunConfig& config) {
  config.validate();
  if (config.subjects.empty()) throw ValidationError("config lists no subjects");
  const Paths paths{config.output()};
  const std::string hash = cluster_hash(config);

  std::vector<SubjectState> states;
  std::map<std::string, std::vector<std::size_t>> modal;
  json upstream = json::object();
  for (const auto& s : config.subjects) {
    for_subject(s, [&] {
      const auto samples = load_samples_file(config, s, nullptr);
      auto st = subject_states(s.id, samples, config.inference.priors.psd_shape);
      states.insert(states.end(), st.begin(), st.end());
      modal[s.id] = modal_trajectory(samples);
      upstream[s.id] = infer_hash(config, s);
    });
  }
  if (config.clustering.clusters > states.size()) {
    throw ValidationError("cluster count " + std::to_string(config.clustering.clusters) + " exceeds the " +
                          std::to_string(states.size()) + " pooled states");
  }
  std::vector<std::vector<double>> spectra;
  std::vector<double> weights;
  for (const auto& st : states) {
    spectra.push_back(st.normalized);
    weights.push_back(static_cast<double>(st.occurrences));
  }
  const ClusterModel model = weighted_kmeans(spectra, weights, config.clustering);

  json jstates = json::array();
  std::map<std::pair<std::string, std::size_t>, std::size_t> cluster_of;
  for (std::size_t i = 0; i < states.size(); ++i) {
    jstates.push_back({{"subject", states[i].subject},
                       {"state", states[i].state},
                       {"occurrences", states[i].occurrences},
                       {"spectrum", states[i].spectrum},
                       {"normalized", states[i].normalized},
                       {"cluster", model.assignment[i]}});
    cluster_of[{states[i].subject, states[i].state}] = model.assignment[i];
  }
  json centroids = json::array();
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    double weight = 0.0;
    std::size_t members = 0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (model.assignment[i] != c) continue;
      weight += weights[i];
      ++members;
    }
    centroids.push_back({{"id", c}, {"spectrum", model.centroids[c]}, {"members", members}, {"weight", weight}});
  }
  json manifest = {{"artifact", "cluster_manifest"},
                   {"version", 1},
                   {"hash", hash},
                   {"upstream", upstream},
                   {"clusters", config.clustering.clusters},
                   {"restarts", config.clustering.restarts},
                   {"seed", config.clustering.seed},
                   {"band_edges", bands_json(config.bands)},
                   {"distortion", model.distortion},
                   {"distortion_trace", model.distortion_trace},
                   {"iterations", model.iterations},
                   {"centroids", centroids},
                   {"states", jstates}};
  if (config.distortion_sweep_max > 0) {
    const auto sweep = distortion_sweep(spectra, weights, config.distortion_sweep_max, config.clustering);
    json js = json::array();
    for (std::size_t k = 0; k < sweep.size(); ++k) js.push_back({{"clusters", k + 1}, {"distortion", sweep[k]}});
    manifest["distortion_sweep"] = js;
  }
  io::write_file(paths.cluster_manifest(), manifest.dump(2) + "\n");

  for (const auto& s : config.subjects) {
    std::ostringstream out;
    out << csv_header("cluster_trajectory", hash) << "window,state,cluster\n";
    const auto& traj = modal[s.id];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const auto it = cluster_of.find({s.id, traj[t]});
      out << t << ',' << traj[t] << ',' << (it == cluster_of.end() ? std::string("-1") : std::to_string(it->second))
          << '\n';
    }
    io::write_file(paths.cluster_trajectory(s.id), out.str());
  }
  write_run_manifest(config);
}

// ---------------------------------------------------------------- report

namespace {

struct ClusterInfo {
  std::vector<std::vector<double>> centroids;
  std::map<std::size_t, std::size_t> state_cluster;  // this subject's state -> cluster
};

std::optional<ClusterInfo> load_clusters(const RunConfig& config, const SubjectInput& s) {
  const Paths paths{config.output()};
  if (!fs::exists(paths.cluster_manifest())) return std::nullopt;
  const json m = json::parse(io::read_file(paths.cluster_manifest()));
  const std::string expected = cluster_hash(config);
  if (m.value("hash", "") != expected) {
    throw ValidationError("cluster manifest hash " + m.value("hash", "?") + " does not match expected " + expected +
                          "; rerun cluster");
  }
  ClusterInfo info;
  for (const auto& c : m.at("centroids")) info.centroids.push_back(c.at("spectrum").get<std::vector<double>>());
  for (const auto& st : m.at("states")) {
    if (st.at("subject").get<std::string>() == s.id) {
      info.state_cluster[st.at("state").get<std::size_t>()] = st.at("cluster").get<std::size_t>();
    }
  }
  return info;
}

void report_subject(const RunConfig& config, const SubjectInput& s, std::vector<std::string>& failures) {
  const Paths paths{config.output()};
  const auto samples = load_samples_file(config, s, nullptr);
  const std::optional<ClusterInfo> clusters = load_clusters(config, s);
  const std::string hash = report_hash(config, s, clusters.has_value());
  const std::size_t windows = samples.front().trajectory.size();
  const std::vector<std::size_t> alpha = bands_in_range(config.bands, config.evaluation.alpha_lo_hz,
                                                        config.evaluation.alpha_hi_hz);
  const fs::path dir = paths.report_dir(s.id);
  json summary = {{"artifact", "report_summary"}, {"hash", hash}, {"subject", s.id}, {"samples", samples.size()},
                  {"windows", windows}};
  json notes = json::array();
  json invariants = json::object();
  auto check = [&](const std::string& name, bool ok) {
    invariants[name] = ok;
    if (!ok) failures.push_back(s.id + ": " + name);
  };

  // Sample consistency.
  bool consistent = true;
  std::vector<double> occupied;
  for (const auto& smp : samples) {
    occupied.push_back(static_cast<double>(smp.occupied()));
    std::set<std::size_t> labels;
    for (const auto& st : smp.states) labels.insert(st.label);
    if (smp.trajectory.size() != windows) consistent = false;
    for (std::size_t v : smp.trajectory) {
      if (!labels.count(v)) consistent = false;
    }
  }
  check("sample_trajectories_consistent", consistent);
  std::map<std::size_t, std::size_t> occ_hist;
  for (double o : occupied) ++occ_hist[static_cast<std::size_t>(o)];
  std::size_t occ_mode = 0, occ_mode_n = 0;
  for (const auto& [k, n] : occ_hist) {
    if (n > occ_mode_n) {
      occ_mode = k;
      occ_mode_n = n;
    }
  }
  summary["occupied_states"] = {{"mode", occ_mode},
                                {"median", median(occupied)},
                                {"min", *std::min_element(occupied.begin(), occupied.end())},
                                {"max", *std::max_element(occupied.begin(), occupied.end())}};

  // Pooled state spectra and their alpha ranking.
  const auto states = subject_states(s.id, samples, config.inference.priors.psd_shape);
  std::map<std::size_t, std::vector<double>> spectra;
  for (const auto& st : states) spectra[st.state] = st.spectrum;
  const auto ranks = reorder_by_alpha(spectra, alpha);
  std::set<std::size_t> rank_values;
  for (const auto& [label, r] : ranks) rank_values.insert(r);
  check("alpha_reordering_is_bijection",
        rank_values.size() == ranks.size() && (ranks.empty() || *rank_values.rbegin() == ranks.size()));
  json jranks = json::array();
  for (const auto& st : states) {
    jranks.push_back({{"state", st.state}, {"rank", ranks.at(st.state)}, {"occurrences", st.occurrences},
                      {"spectrum", st.spectrum}});
  }
  summary["states"] = jranks;

  const std::vector<std::size_t> modal = modal_trajectory(samples);
  std::vector<std::size_t> cluster_traj;
  if (clusters) {
    for (std::size_t v : modal) {
      const auto it = clusters->state_cluster.find(v);
      cluster_traj.push_back(it == clusters->state_cluster.end() ? SIZE_MAX : it->second);
    }
  }

  std::vector<int> stages;
  if (s.hypnogram.empty()) {
    notes.push_back("no hypnogram configured: rho, heatmap and per-stage transition rates skipped");
    summary["rho"] = nullptr;
  } else {
    Hypnogram hyp{io::read_labels_csv(config.resolve(s.hypnogram)), s.hypnogram_epoch_seconds};
    stages = expand_hypnogram(hyp, config.window_seconds, windows);

    const RhoDistribution rho = rho_distribution(samples, stages, alpha);
    std::ostringstream rc;
    rc << csv_header("rho_distribution", hash) << "sample,iteration,rho\n";
    for (std::size_t i = 0; i < rho.rhos.size(); ++i) {
      rc << i << ',' << samples[i].iteration << ',' << format_double(rho.rhos[i]) << '\n';
    }
    io::write_file(dir / "rho.csv", rc.str());
    check("rho_in_range", std::all_of(rho.rhos.begin(), rho.rhos.end(),
                                      [](double r) { return r >= -1.0 && r <= 1.0; }));
    summary["rho"] = {{"median", rho.median},
                      {"min", *std::min_element(rho.rhos.begin(), rho.rhos.end())},
                      {"max", *std::max_element(rho.rhos.begin(), rho.rhos.end())},
                      {"count", rho.rhos.size()}};

    // Heatmap over clusters when available, otherwise over the subject's states.
    AlignedTrajectories aligned;
    aligned.stage = stages;
    aligned.window_seconds = config.window_seconds;
    std::vector<std::size_t> order;
    std::string row_kind;
    if (clusters) {
      aligned.cluster = cluster_traj;
      order = order_clusters_by_alpha(clusters->centroids, alpha);
      row_kind = "cluster";
    } else {
      aligned.cluster = modal;
      std::vector<std::pair<std::size_t, std::size_t>> by_rank;
      for (const auto& [label, r] : ranks) by_rank.push_back({r, label});
      std::sort(by_rank.rbegin(), by_rank.rend());
      for (const auto& [r, label] : by_rank) order.push_back(label);
      row_kind = "state";
      notes.push_back("no cluster manifest: heatmap rows are this subject's states");
    }
    std::vector<std::size_t> kept;
    AlignedTrajectories usable;
    usable.window_seconds = aligned.window_seconds;
    for (std::size_t t = 0; t < windows; ++t) {
      if (aligned.cluster[t] == SIZE_MAX) continue;
      if (std::find(order.begin(), order.end(), aligned.cluster[t]) == order.end()) continue;
      usable.stage.push_back(aligned.stage[t]);
      usable.cluster.push_back(aligned.cluster[t]);
    }
    if (usable.stage.size() < windows) {
      notes.push_back(std::to_string(windows - usable.stage.size()) +
                      " windows fall in states excluded from clustering and are left out of the heatmap");
    }
    const Heatmap hm = stage_cluster_heatmap(usable, order, config.evaluation.stages);
    std::ostringstream hc;
    hc << csv_header("stage_heatmap", hash) << row_kind;
    for (int st : hm.stages) hc << ",stage_" << st;
    hc << '\n';
    bool columns_ok = true;
    for (std::size_t r = 0; r < hm.clusters.size(); ++r) {
      hc << hm.clusters[r];
      for (double p : hm.proportion[r]) hc << ',' << format_double(p);
      hc << '\n';
    }
    for (std::size_t c = 0; c < hm.stages.size(); ++c) {
      if (std::find(hm.empty_stages.begin(), hm.empty_stages.end(), hm.stages[c]) != hm.empty_stages.end()) continue;
      double sum = 0.0;
      for (const auto& row : hm.proportion) sum += row[c];
      if (std::abs(sum - 1.0) > 1e-12) columns_ok = false;
    }
    io::write_file(dir / "heatmap.csv", hc.str());
    check("heatmap_columns_sum_to_one", columns_ok);
    summary["heatmap_rows"] = row_kind;
    summary["heatmap_empty_stages"] = hm.empty_stages;

    json rates = json::object();
    for (int st : config.evaluation.stages) {
      if (std::count(usable.stage.begin(), usable.stage.end(), st) == 0) continue;
      rates[std::to_string(st)] = transition_rate_per_minute(usable, st);
    }
    summary["transition_rates_per_minute"] = rates;
  }

  std::ostringstream tl;
  tl << csv_header("timeline", hash) << "window,time_s,hypnogram,state,rank,cluster\n";
  for (std::size_t t = 0; t < windows; ++t) {
    tl << t << ',' << format_double(static_cast<double>(t) * config.window_seconds) << ',';
    if (!stages.empty()) tl << stages[t];
    tl << ',' << modal[t] << ',';
    if (const auto it = ranks.find(modal[t]); it != ranks.end()) tl << it->second;
    tl << ',';
    if (clusters && cluster_traj[t] != SIZE_MAX) tl << cluster_traj[t];
    tl << '\n';
  }
  io::write_file(dir / "timeline.csv", tl.str());

  summary["invariants"] = invariants;
  summary["notes"] = notes;
  io::write_file(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace

void cmd_report(const RunConfig& config) {
  config.validate();
  if (config.subjects.empty()) throw ValidationError("config lists no subjects");
  std::vector<std::string> failures;
  for (const auto& s : config.subjects) for_subject(s, [&] { report_subject(config, s, failures); });
  write_run_manifest(config);
  if (!failures.empty()) {
    std::string msg = "report invariant checks failed:";
    for (const auto& f : failures) msg += " " + f;
    throw InvariantViolation(msg);
  }
}

// ---------------------------------------------------------------- demo

RunConfig demo_config(const fs::path& output_dir) {
  RunConfig c;
  c.base_dir = output_dir;
  c.output_dir = ".";
  c.fs = 40.0;
  c.window_seconds = 15.0;
  c.simulation.subjects = {"sim1", "sim2"};
  c.simulation.windows = 240;
  c.simulation.seed = 7;
  for (const auto& id : c.simulation.subjects) {
    SubjectInput s;
    s.id = id;
    s.input = "data/" + id + ".csv";
    s.hypnogram = "data/" + id + ".hypnogram.csv";
    s.hypnogram_epoch_seconds = c.window_seconds;
    c.subjects.push_back(s);
  }
  c.inference.k_max = 30;
  c.inference.burn_in = 150;
  c.inference.n_samples = 20;
  c.inference.thin = 5;
  c.inference.seed = 11;
  c.checkpoint_every = 100;
  c.clustering.clusters = 5;
  c.clustering.restarts = 8;
  c.clustering.seed = 3;
  c.distortion_sweep_max = 6;
  return c;
}

void cmd_demo(const fs::path& output_dir, bool progress) {
  fs::create_directories(output_dir);
  RunConfig c = demo_config(output_dir);
  c.validate();
  io::write_file(output_dir / "config.json", config_to_json(c).dump(2) + "\n");
  cmd_simulate(c);
  cmd_spectra(c);
  InferOptions opts;
  opts.progress = progress;
  cmd_infer(c, opts);
  cmd_cluster(c);
  cmd_report(c);
}

}  // namespace sleepstate::pipeline
