#include "sleepstate/kernels.hpp"

#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sleepstate/error.hpp"

namespace sleepstate::kernels {

namespace {

SpectralObservation allocate(const WindowedSeries& ws, const SpectralEngine& engine) {
  if (ws.window_length != engine.tapers().length) {
    throw ValidationError("window length does not match taper length");
  }
  SpectralObservation obs;
  obs.bands = engine.layout().size();
  obs.tapers = engine.tapers().count();
  obs.coeffs.resize(ws.count * obs.bands * obs.tapers);
  obs.selected.resize(ws.count * obs.bands);
  obs.valid = ws.valid;
  if (obs.valid.size() != ws.count) obs.valid.assign(ws.count, true);
  return obs;
}

inline void observe_one(const WindowedSeries& ws, const SpectralEngine& engine, RealFft::Workspace& work,
                        SpectralObservation& obs, std::size_t t) {
  const std::size_t per = obs.bands * obs.tapers;
  engine.observe(ws.window(t), work, std::span<Complex>(obs.coeffs).subspan(t * per, per),
                 std::span<std::size_t>(obs.selected).subspan(t * obs.bands, obs.bands));
}

struct StateTerms {
  std::vector<double> constant;  // per state: -M sum_b log(pi f)
  std::vector<double> inverse;   // [state][band] 1/f
};

StateTerms state_terms(std::span<const double> psd, std::size_t states, std::size_t bands, std::size_t tapers) {
  if (psd.size() != states * bands) throw ValidationError("PSD table shape mismatch");
  StateTerms terms;
  terms.constant.assign(states, 0.0);
  terms.inverse.resize(states * bands);
  const double m = static_cast<double>(tapers);
  for (std::size_t k = 0; k < states; ++k) {
    for (std::size_t b = 0; b < bands; ++b) {
      const double f = psd[k * bands + b];
      if (!(f > 0.0)) throw NumericalError("nonpositive PSD in emission kernel");
      terms.constant[k] -= m * std::log(std::numbers::pi * f);
      terms.inverse[k * bands + b] = 1.0 / f;
    }
  }
  return terms;
}

inline void emission_row(std::span<const double> band_power, const std::vector<bool>& valid, std::size_t bands,
                         std::size_t states, const StateTerms& terms, std::span<double> out, std::size_t t) {
  double* row = out.data() + t * states;
  if (!valid[t]) {
    for (std::size_t k = 0; k < states; ++k) row[k] = 0.0;
    return;
  }
  const double* p = band_power.data() + t * bands;
  for (std::size_t k = 0; k < states; ++k) {
    const double* inv = terms.inverse.data() + k * bands;
    double acc = terms.constant[k];
    for (std::size_t b = 0; b < bands; ++b) acc -= p[b] * inv[b];
    row[k] = acc;
  }
}

void check_emission_shapes(std::span<const double> band_power, const std::vector<bool>& valid, std::size_t bands,
                           std::size_t states, std::span<double> out) {
  const std::size_t windows = valid.size();
  if (band_power.size() != windows * bands || out.size() != windows * states) {
    throw ValidationError("emission kernel shape mismatch");
  }
}

}  // namespace

SpectralObservation observe_series_serial(const WindowedSeries& ws, const SpectralEngine& engine) {
  SpectralObservation obs = allocate(ws, engine);
  auto work = engine.make_workspace();
  for (std::size_t t = 0; t < ws.count; ++t) observe_one(ws, engine, work, obs, t);
  return obs;
}

SpectralObservation observe_series_parallel(const WindowedSeries& ws, const SpectralEngine& engine) {
  SpectralObservation obs = allocate(ws, engine);
  const auto count = static_cast<std::ptrdiff_t>(ws.count);
#pragma omp parallel
  {
    auto work = engine.make_workspace();
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < count; ++t) observe_one(ws, engine, work, obs, static_cast<std::size_t>(t));
  }
  return obs;
}

void emission_matrix_serial(std::span<const double> band_power, const std::vector<bool>& valid, std::size_t bands,
                            std::size_t tapers, std::span<const double> psd, std::size_t states,
                            std::span<double> out) {
  check_emission_shapes(band_power, valid, bands, states, out);
  const StateTerms terms = state_terms(psd, states, bands, tapers);
  for (std::size_t t = 0; t < valid.size(); ++t) emission_row(band_power, valid, bands, states, terms, out, t);
}

void emission_matrix_parallel(std::span<const double> band_power, const std::vector<bool>& valid, std::size_t bands,
                              std::size_t tapers, std::span<const double> psd, std::size_t states,
                              std::span<double> out) {
  check_emission_shapes(band_power, valid, bands, states, out);
  const StateTerms terms = state_terms(psd, states, bands, tapers);
  const auto windows = static_cast<std::ptrdiff_t>(valid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < windows; ++t) {
    emission_row(band_power, valid, bands, states, terms, out, static_cast<std::size_t>(t));
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sleepstate::kernels
