#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "sleepstate/dpss.hpp"
#include "sleepstate/fft.hpp"

namespace sleepstate {

using Complex = std::complex<double>;

// A series cut into `count` contiguous, non-overlapping windows of
// `window_length` samples. The trailing partial window is dropped.
struct WindowedSeries {
  std::vector<double> samples;  // exactly count * window_length values
  double fs = 0.0;
  std::size_t window_length = 0;
  std::size_t count = 0;
  std::vector<bool> valid;

  std::span<const double> window(std::size_t t) const {
    return std::span<const double>(samples).subspan(t * window_length, window_length);
  }
};

WindowedSeries segment_windows(std::span<const double> series, double fs, double window_seconds);

// Coefficients (1/J) sum_l h_l y_l exp(-2 pi i k l / J) for k = 0..J/2-1.
// Bin k corresponds to normalized frequency k/J, i.e. fs * k / J Hz.
std::vector<Complex> tapered_dft(std::span<const double> window, std::span<const double> taper);

// Same with h == 1 (the plain windowed DFT).
std::vector<Complex> window_dft(std::span<const double> window);

// One coefficient sequence per taper.
std::vector<std::vector<Complex>> tapered_dft(std::span<const double> window, const TaperBank& bank);

// Mean over tapers of |coefficient|^2, bin by bin.
std::vector<double> multitaper_psd(const std::vector<std::vector<Complex>>& coeffs);

// Subtracts the window mean in place.
void remove_mean(std::span<double> window);

// Linear-interpolated percentile (0..100) of the values.
double percentile(std::vector<double> values, double pct);

// Windows whose total power sum y^2 strictly exceeds the given percentile of
// per-window total power are marked false.
std::vector<bool> reject_artifacts(const WindowedSeries& ws, double pct);

struct Band {
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

// Band edges plus the bins (0-based k) falling inside each band for a given
// sampling rate and window length: lo <= fs*k/J < hi, k < J/2.
struct BandLayout {
  std::vector<Band> bands;
  std::vector<std::vector<std::size_t>> bins;
  double fs = 0.0;
  std::size_t window_length = 0;

  std::size_t size() const { return bands.size(); }
};

// Throws ValidationError on unordered/overlapping bands or bands with no bins.
BandLayout make_band_layout(const std::vector<Band>& bands, double fs, std::size_t window_length);

// Per band, the bin whose power is the median of the in-band powers (lower
// middle element when the count is even; ties broken by bin index).
std::vector<std::size_t> select_band_bins(std::span<const double> psd, const BandLayout& layout);

// The 0.5-2.5, 2.5-4.5, 4.5-6.5, 6.5-8.5, 10.5-12.5, 12.5-35 Hz bands.
std::vector<Band> default_sleep_bands();

// Per window, per band, per taper complex coefficient at the selected bin.
struct SpectralObservation {
  std::size_t bands = 0;
  std::size_t tapers = 0;
  std::vector<Complex> coeffs;        // [window][band][taper]
  std::vector<std::size_t> selected;  // [window][band]
  std::vector<bool> valid;

  std::size_t windows() const { return valid.size(); }
  const Complex& at(std::size_t t, std::size_t b, std::size_t m) const {
    return coeffs[(t * bands + b) * tapers + m];
  }
  Complex& at(std::size_t t, std::size_t b, std::size_t m) {
    return coeffs[(t * bands + b) * tapers + m];
  }
  std::size_t selected_bin(std::size_t t, std::size_t b) const { return selected[t * bands + b]; }

  // sum over tapers of Re^2 + Im^2 for one window and band.
  double band_power_sum(std::size_t t, std::size_t b) const;
};

// Per-window front end: mean removal, tapering, DFT, multitaper PSD and
// median-bin selection. Immutable after construction; observe() may run
// concurrently as long as each caller supplies its own workspace.
class SpectralEngine {
 public:
  SpectralEngine(TaperBank bank, BandLayout layout);

  const TaperBank& tapers() const { return bank_; }
  const BandLayout& layout() const { return layout_; }
  RealFft::Workspace make_workspace() const { return RealFft::Workspace(bank_.length); }

  // Writes bands*tapers coefficients ([band][taper]) and one bin per band.
  void observe(std::span<const double> window, RealFft::Workspace& ws, std::span<Complex> coeffs_out,
               std::span<std::size_t> selected_out) const;

 private:
  TaperBank bank_;
  BandLayout layout_;
  RealFft fft_;
};

}  // namespace sleepstate
