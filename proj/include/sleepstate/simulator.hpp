#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sleepstate {

// One damped stochastic oscillator: x <- damping * Rot(2 pi f / fs) x + v,
// v ~ N(0, noise_variance * I2).
struct OscillatorSpec {
  double frequency_hz = 0.0;
  double damping = 0.0;  // a, in (0, 1)
  double noise_variance = 1.0;
};

struct SimStage {
  int label = 0;
  std::string name;
  std::vector<OscillatorSpec> oscillators;
  double observation_noise = 1.0;  // variance of w

  void validate(double fs) const;
};

using Matrix = std::vector<std::vector<double>>;

struct SimGroundTruth {
  std::vector<std::size_t> stages;  // stage index per window
  Matrix transition;
  std::vector<double> samples;
  std::size_t window_length = 0;
  double fs = 0.0;
};

// Block-diagonal 2D x 2D matrix of scaled rotations a_i Rot(2 pi f_i / fs).
Matrix build_block_rotation(std::span<const OscillatorSpec> specs, double fs);

// Throws ValidationError unless the matrix is square with nonnegative rows
// summing to 1.
void validate_transition_matrix(const Matrix& transition, std::size_t stages);

// Stage chain at window resolution (initial stage uniform), oscillator
// recursion at sample resolution. The latent state persists within a stage and
// is re-equilibrated by a warm-up run whenever the stage changes.
SimGroundTruth simulate(const std::vector<SimStage>& stages, const Matrix& transition, std::size_t windows,
                        std::size_t window_length, double fs, std::uint64_t seed);

// Stationary spectral density per sample at normalized frequency nu (cycles per
// sample): sum_i q_i |c (I - R_i e^{-i 2 pi nu})^{-1}|^2 + sigma_r^2.
double spectral_density(const SimStage& stage, double fs, double nu);

// Expected squared magnitude of a unit-energy-tapered coefficient of a
// `window_length` window at each frequency (Hz): spectral_density / J^2.
std::vector<double> theoretical_psd(const SimStage& stage, double fs, std::span<const double> freqs_hz,
                                    std::size_t window_length);

// Variance of the observed signal, by integrating the spectral density.
double stationary_variance(const SimStage& stage, double fs);

// Built-in five-stage fixture (wake, REM, N1, N2, N3 with hypnogram labels
// 5..1) expressed in Hz so it can be instantiated at any sampling rate >= 40.
std::vector<SimStage> default_stages(double fs);
Matrix default_transition();

}  // namespace sleepstate
