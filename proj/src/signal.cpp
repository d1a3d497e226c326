#include "sleepstate/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sleepstate/error.hpp"

namespace sleepstate {

WindowedSeries segment_windows(std::span<const double> series, double fs, double window_seconds) {
  if (!(fs > 0.0)) throw ValidationError("sampling rate must be positive");
  const double exact = window_seconds * fs;
  const double rounded = std::round(exact);
  if (!(rounded >= 1.0) || std::abs(exact - rounded) > 1e-9 * std::max(1.0, exact)) {
    throw ValidationError("window_seconds * fs must be a positive integer");
  }
  const auto j = static_cast<std::size_t>(rounded);
  if (series.size() < j) throw ValidationError("insufficient data");

  WindowedSeries ws;
  ws.fs = fs;
  ws.window_length = j;
  ws.count = series.size() / j;
  ws.samples.assign(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(ws.count * j));
  ws.valid.assign(ws.count, true);
  return ws;
}

namespace {

std::vector<Complex> dft_with(const RealFft& fft, RealFft::Workspace& ws, std::span<const double> window,
                              std::span<const double> taper, bool use_taper) {
  const std::size_t n = window.size();
  if (use_taper && taper.size() != n) throw ValidationError("taper length does not match window length");
  for (std::size_t l = 0; l < n; ++l) ws.input()[l] = use_taper ? taper[l] * window[l] : window[l];
  fft.execute(ws);
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<Complex> out(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) out[k] = ws.output()[k] * inv;
  return out;
}

std::vector<Complex> dft_with(std::span<const double> window, std::span<const double> taper, bool use_taper) {
  RealFft fft(window.size());
  RealFft::Workspace ws(window.size());
  return dft_with(fft, ws, window, taper, use_taper);
}

}  // namespace

std::vector<Complex> tapered_dft(std::span<const double> window, std::span<const double> taper) {
  return dft_with(window, taper, true);
}

std::vector<Complex> window_dft(std::span<const double> window) { return dft_with(window, {}, false); }

std::vector<std::vector<Complex>> tapered_dft(std::span<const double> window, const TaperBank& bank) {
  if (window.size() != bank.length) throw ValidationError("taper length does not match window length");
  std::vector<std::vector<Complex>> out;
  out.reserve(bank.count());
  RealFft fft(bank.length);
  RealFft::Workspace ws(bank.length);
  for (const auto& taper : bank.tapers) out.push_back(dft_with(fft, ws, window, taper, true));
  return out;
}

std::vector<double> multitaper_psd(const std::vector<std::vector<Complex>>& coeffs) {
  if (coeffs.empty()) throw ValidationError("multitaper estimate needs at least one taper");
  const std::size_t n = coeffs.front().size();
  std::vector<double> psd(n, 0.0);
  for (const auto& c : coeffs) {
    if (c.size() != n) throw ValidationError("taper coefficient sequences differ in length");
    for (std::size_t k = 0; k < n; ++k) psd[k] += std::norm(c[k]);
  }
  const double inv = 1.0 / static_cast<double>(coeffs.size());
  for (double& p : psd) p *= inv;
  return psd;
}

void remove_mean(std::span<double> window) {
  if (window.empty()) return;
  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  for (double& x : window) x -= mean;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<bool> reject_artifacts(const WindowedSeries& ws, double pct) {
  if (!(pct > 0.0 && pct <= 100.0)) throw ValidationError("artifact percentile must be in (0, 100]");
  std::vector<double> power(ws.count, 0.0);
  for (std::size_t t = 0; t < ws.count; ++t) {
    for (double x : ws.window(t)) power[t] += x * x;
  }
  const double threshold = percentile(power, pct);
  std::vector<bool> keep(ws.count);
  for (std::size_t t = 0; t < ws.count; ++t) keep[t] = !(power[t] > threshold);
  return keep;
}

BandLayout make_band_layout(const std::vector<Band>& bands, double fs, std::size_t window_length) {
  if (bands.empty()) throw ValidationError("no frequency bands configured");
  BandLayout layout;
  layout.bands = bands;
  layout.fs = fs;
  layout.window_length = window_length;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const Band& band = bands[b];
    if (!(band.lo_hz < band.hi_hz)) throw ValidationError("band " + std::to_string(b) + " has lo >= hi");
    if (b > 0 && band.lo_hz < bands[b - 1].hi_hz) {
      throw ValidationError("bands must be ascending and non-overlapping");
    }
    std::vector<std::size_t> bins;
    for (std::size_t k = 0; k < window_length / 2; ++k) {
      const double f = fs * static_cast<double>(k) / static_cast<double>(window_length);
      if (band.lo_hz <= f && f < band.hi_hz) bins.push_back(k);
    }
    if (bins.empty()) {
      throw ValidationError("band " + std::to_string(b) + " contains no frequency bins");
    }
    layout.bins.push_back(std::move(bins));
  }
  return layout;
}

std::vector<std::size_t> select_band_bins(std::span<const double> psd, const BandLayout& layout) {
  std::vector<std::size_t> selected;
  selected.reserve(layout.size());
  std::vector<std::size_t> order;
  for (const auto& bins : layout.bins) {
    order = bins;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return psd[a] < psd[b]; });
    selected.push_back(order[(order.size() - 1) / 2]);
  }
  return selected;
}

std::vector<Band> default_sleep_bands() {
  return {{0.5, 2.5}, {2.5, 4.5}, {4.5, 6.5}, {6.5, 8.5}, {10.5, 12.5}, {12.5, 35.0}};
}

double SpectralObservation::band_power_sum(std::size_t t, std::size_t b) const {
  double s = 0.0;
  for (std::size_t m = 0; m < tapers; ++m) s += std::norm(at(t, b, m));
  return s;
}

SpectralEngine::SpectralEngine(TaperBank bank, BandLayout layout)
    : bank_(std::move(bank)), layout_(std::move(layout)), fft_(bank_.length) {
  if (layout_.window_length != bank_.length) {
    throw ValidationError("band layout and taper bank disagree on window length");
  }
}

void SpectralEngine::observe(std::span<const double> window, RealFft::Workspace& ws, std::span<Complex> coeffs_out,
                             std::span<std::size_t> selected_out) const {
  const std::size_t n = bank_.length;
  const std::size_t half = n / 2;
  const std::size_t tapers = bank_.count();
  if (window.size() != n) throw ValidationError("window length does not match taper length");

  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(n);
  const double inv = 1.0 / static_cast<double>(n);

  std::vector<Complex> spectra(tapers * half);
  std::vector<double> psd(half, 0.0);
  for (std::size_t m = 0; m < tapers; ++m) {
    const auto& h = bank_.tapers[m];
    for (std::size_t l = 0; l < n; ++l) ws.input()[l] = h[l] * (window[l] - mean);
    fft_.execute(ws);
    for (std::size_t k = 0; k < half; ++k) {
      const Complex c = ws.output()[k] * inv;
      spectra[m * half + k] = c;
      psd[k] += std::norm(c);
    }
  }
  for (double& p : psd) p /= static_cast<double>(tapers);

  const auto selected = select_band_bins(psd, layout_);
  for (std::size_t b = 0; b < layout_.size(); ++b) {
    selected_out[b] = selected[b];
    for (std::size_t m = 0; m < tapers; ++m) coeffs_out[b * tapers + m] = spectra[m * half + selected[b]];
  }
}

}  // namespace sleepstate
