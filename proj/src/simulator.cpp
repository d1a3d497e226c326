#include "sleepstate/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "sleepstate/error.hpp"
#include "sleepstate/random.hpp"

namespace sleepstate {

namespace {

struct Block {
  double c, s;  // damping * cos, damping * sin
  double sd;
};

std::vector<Block> make_blocks(const SimStage& stage, double fs) {
  std::vector<Block> blocks;
  for (const auto& o : stage.oscillators) {
    const double theta = 2.0 * std::numbers::pi * o.frequency_hz / fs;
    blocks.push_back({o.damping * std::cos(theta), o.damping * std::sin(theta), std::sqrt(o.noise_variance)});
  }
  return blocks;
}

std::size_t warmup_length(const SimStage& stage) {
  double tau = 0.0;
  for (const auto& o : stage.oscillators) {
    if (o.damping > 0.0) tau = std::max(tau, -1.0 / std::log(o.damping));
  }
  return static_cast<std::size_t>(std::ceil(100.0 * tau));
}

double step(const std::vector<Block>& blocks, std::vector<double>& x, double obs_sd, Rng& rng,
            std::normal_distribution<double>& normal) {
  double y = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    const double x0 = x[2 * i];
    const double x1 = x[2 * i + 1];
    x[2 * i] = b.c * x0 - b.s * x1 + b.sd * normal(rng);
    x[2 * i + 1] = b.s * x0 + b.c * x1 + b.sd * normal(rng);
    y += x[2 * i];
  }
  if (obs_sd > 0.0) y += obs_sd * normal(rng);
  return y;
}

}  // namespace

void SimStage::validate(double fs) const {
  if (!(observation_noise >= 0.0)) throw ValidationError("observation noise variance must be nonnegative");
  for (const auto& o : oscillators) {
    if (!(o.damping > 0.0 && o.damping < 1.0)) throw ValidationError("oscillator damping must lie in (0, 1)");
    if (!(o.frequency_hz >= 0.0 && o.frequency_hz < fs / 2.0)) {
      throw ValidationError("oscillator frequency must lie in [0, fs/2)");
    }
    if (!(o.noise_variance >= 0.0)) throw ValidationError("oscillator noise variance must be nonnegative");
  }
}

Matrix build_block_rotation(std::span<const OscillatorSpec> specs, double fs) {
  const std::size_t n = 2 * specs.size();
  Matrix r(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const double a = specs[i].damping;
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("oscillator damping must lie in (0, 1)");
    const double theta = 2.0 * std::numbers::pi * specs[i].frequency_hz / fs;
    r[2 * i][2 * i] = a * std::cos(theta);
    r[2 * i][2 * i + 1] = -a * std::sin(theta);
    r[2 * i + 1][2 * i] = a * std::sin(theta);
    r[2 * i + 1][2 * i + 1] = a * std::cos(theta);
  }
  return r;
}

void validate_transition_matrix(const Matrix& transition, std::size_t stages) {
  if (transition.size() != stages) throw ValidationError("transition matrix must have one row per stage");
  for (const auto& row : transition) {
    if (row.size() != stages) throw ValidationError("transition matrix must be square");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ValidationError("transition probabilities must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("transition rows must sum to 1");
  }
}

SimGroundTruth simulate(const std::vector<SimStage>& stages, const Matrix& transition, std::size_t windows,
                        std::size_t window_length, double fs, std::uint64_t seed) {
  if (stages.empty()) throw ValidationError("at least one stage is required");
  if (windows < 1 || window_length < 1) throw ValidationError("window count and length must be positive");
  if (!(fs > 0.0)) throw ValidationError("sampling rate must be positive");
  validate_transition_matrix(transition, stages.size());
  for (const auto& s : stages) s.validate(fs);

  Rng rng(seed);
  SimGroundTruth out;
  out.transition = transition;
  out.window_length = window_length;
  out.fs = fs;
  out.stages.resize(windows);
  std::vector<double> uniform(stages.size(), 1.0);
  out.stages[0] = sample_categorical(rng, uniform);
  for (std::size_t t = 1; t < windows; ++t) out.stages[t] = sample_categorical(rng, transition[out.stages[t - 1]]);

  std::vector<std::vector<Block>> blocks;
  for (const auto& s : stages) blocks.push_back(make_blocks(s, fs));

  out.samples.reserve(windows * window_length);
  std::normal_distribution<double> normal;
  std::vector<double> x;
  for (std::size_t t = 0; t < windows; ++t) {
    const std::size_t k = out.stages[t];
    const SimStage& stage = stages[k];
    const double obs_sd = std::sqrt(stage.observation_noise);
    if (t == 0 || k != out.stages[t - 1]) {
      x.assign(2 * blocks[k].size(), 0.0);
      const std::size_t warm = warmup_length(stage);
      for (std::size_t i = 0; i < warm; ++i) step(blocks[k], x, 0.0, rng, normal);
    }
    for (std::size_t l = 0; l < window_length; ++l) out.samples.push_back(step(blocks[k], x, obs_sd, rng, normal));
  }
  return out;
}

double spectral_density(const SimStage& stage, double fs, double nu) {
  using C = std::complex<double>;
  const C z = std::polar(1.0, -2.0 * std::numbers::pi * nu);
  double s = stage.observation_noise;
  for (const auto& o : stage.oscillators) {
    const double theta = 2.0 * std::numbers::pi * o.frequency_hz / fs;
    const double rc = o.damping * std::cos(theta);
    const double rs = o.damping * std::sin(theta);
    // M = I - R z; first row of M^{-1} is (m11, -m01) / det.
    const C m00 = 1.0 - rc * z, m01 = rs * z, m10 = -rs * z, m11 = 1.0 - rc * z;
    const C det = m00 * m11 - m01 * m10;
    s += o.noise_variance * (std::norm(m11) + std::norm(m01)) / std::norm(det);
  }
  return s;
}

std::vector<double> theoretical_psd(const SimStage& stage, double fs, std::span<const double> freqs_hz,
                                    std::size_t window_length) {
  for (const auto& o : stage.oscillators) {
    if (!(o.damping >= 0.0 && o.damping < 1.0)) throw ValidationError("theoretical PSD needs a stable stage");
  }
  const double j2 = static_cast<double>(window_length) * static_cast<double>(window_length);
  std::vector<double> out;
  out.reserve(freqs_hz.size());
  for (double f : freqs_hz) out.push_back(spectral_density(stage, fs, f / fs) / j2);
  return out;
}

double stationary_variance(const SimStage& stage, double fs) {
  // Trapezoid rule over one period of a smooth periodic integrand.
  const std::size_t n = 1 << 16;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += spectral_density(stage, fs, -0.5 + static_cast<double>(i) / n);
  return acc / static_cast<double>(n);
}

std::vector<SimStage> default_stages(double fs) {
  if (fs < 40.0) throw ValidationError("the built-in fixture needs fs >= 40 Hz");
  // Oscillators given as (centre Hz, bandwidth Hz, stationary variance).
  struct Osc {
    double hz, bw, var;
  };
  auto make = [fs](int label, const char* name, std::vector<Osc> oscs, double floor) {
    SimStage s;
    s.label = label;
    s.name = name;
    for (const auto& o : oscs) {
      const double a = std::exp(-2.0 * std::numbers::pi * o.bw / fs);
      s.oscillators.push_back({o.hz, a, o.var * (1.0 - a * a)});
    }
    s.observation_noise = floor;
    return s;
  };
  return {
      make(5, "W", {{10.0, 1.0, 40.0}, {16.0, 3.0, 6.0}, {1.0, 1.0, 4.0}}, 1.0),
      make(4, "REM", {{6.0, 1.5, 20.0}, {10.0, 1.5, 8.0}, {1.5, 1.0, 6.0}}, 1.0),
      make(3, "N1", {{4.5, 1.5, 30.0}, {1.0, 1.0, 20.0}, {10.0, 2.0, 2.0}}, 1.0),
      make(2, "N2", {{14.5, 0.6, 12.0}, {1.0, 1.0, 60.0}, {5.0, 2.0, 6.0}}, 0.5),
      make(1, "N3", {{1.0, 0.8, 250.0}, {3.0, 1.5, 30.0}}, 0.5),
  };
}

Matrix default_transition() {
  return {
      {0.93, 0.03, 0.02, 0.01, 0.01},
      {0.02, 0.93, 0.03, 0.01, 0.01},
      {0.02, 0.01, 0.92, 0.04, 0.01},
      {0.01, 0.02, 0.01, 0.93, 0.03},
      {0.01, 0.01, 0.01, 0.04, 0.93},
  };
}

}  // namespace sleepstate
