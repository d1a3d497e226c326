#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sleepstate/signal.hpp"

// Data-parallel inner loops. Every kernel has a serial reference version and
// an OpenMP version that runs the identical per-item body, so their outputs
// agree bit for bit; tests compare the two and the benchmark times them.
namespace sleepstate::kernels {

SpectralObservation observe_series_serial(const WindowedSeries& ws, const SpectralEngine& engine);
SpectralObservation observe_series_parallel(const WindowedSeries& ws, const SpectralEngine& engine);

// Row-major [window][state] emission log-likelihoods from per-band power sums
// ([window][band]) and PSD values ([state][band]). Invalid windows get 0.
void emission_matrix_serial(std::span<const double> band_power, const std::vector<bool>& valid, std::size_t bands,
                            std::size_t tapers, std::span<const double> psd, std::size_t states,
                            std::span<double> out);
void emission_matrix_parallel(std::span<const double> band_power, const std::vector<bool>& valid, std::size_t bands,
                              std::size_t tapers, std::span<const double> psd, std::size_t states,
                              std::span<double> out);

int max_threads();

}  // namespace sleepstate::kernels
