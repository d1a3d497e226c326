#pragma once

#include <cstddef>
#include <vector>

namespace sleepstate {

// Discrete prolate spheroidal (Slepian) tapers for one window length.
//
// Tapers are unit energy, mutually orthogonal, ordered by decreasing spectral
// concentration in |f| <= W with W = time_bandwidth / length. Sign convention:
// even-order tapers have a nonnegative sum; odd-order tapers start with a
// positive lobe (first sample whose square exceeds max(1e-7, 1/length)).
struct TaperBank {
  std::size_t length = 0;
  double time_bandwidth = 0.0;
  std::vector<std::vector<double>> tapers;
  std::vector<double> concentrations;

  std::size_t count() const { return tapers.size(); }
  double half_bandwidth() const { return time_bandwidth / static_cast<double>(length); }
};

// First `count` Slepian sequences via the symmetric tridiagonal formulation:
// bisection (Sturm counts) for the top eigenvalues, then inverse iteration.
// Throws ValidationError when count > floor(2 TW) - 1 or length < 2 count.
TaperBank compute_dpss(std::size_t length, double time_bandwidth, std::size_t count);

// Fraction of the taper's spectral energy inside |f| <= half_bandwidth,
// computed from the taper autocorrelation against the sinc kernel.
double spectral_concentration(const std::vector<double>& taper, double half_bandwidth);

}  // namespace sleepstate
