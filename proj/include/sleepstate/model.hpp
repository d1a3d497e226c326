#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sleepstate/random.hpp"
#include "sleepstate/signal.hpp"

namespace sleepstate {

// IG(shape, rate): density rate^shape / Gamma(shape) x^(-shape-1) exp(-rate/x).
struct InverseGamma {
  double shape = 1.0;
  double rate = 1.0;

  double mean() const { return rate / (shape - 1.0); }  // shape > 1
  double mode() const { return rate / (shape + 1.0); }
  double log_density(double x) const;
};

// Gamma hyperpriors (shape, rate) on the concentrations and on the per-state,
// per-band IG rate, plus the fixed IG shape of the PSD prior.
struct HyperPriors {
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;
  double alpha_shape = 1.0;
  double alpha_rate = 1.0;
  double rate_shape = 1.0;  // a0
  double rate_rate = 1.0;   // b0
  double psd_shape = 1.0;   // a

  void validate() const;
};

// Per-state PSD values f_j with the IG rate b_j that governs each of them.
struct StateSpectrum {
  std::vector<double> psd;
  std::vector<double> rate;
};

// Sum over bands and tapers of log N(Re; 0, f/2) + log N(Im; 0, f/2).
// `coeffs` is laid out [band][taper]. Throws on nonpositive f.
double emission_log_likelihood(std::span<const Complex> coeffs, std::size_t tapers, std::span<const double> psd);

// Same likelihood from per-band sufficient statistics sum_m (Re^2 + Im^2).
double emission_log_likelihood_from_power(std::span<const double> band_power, std::size_t tapers,
                                          std::span<const double> psd);

// Conjugate update for one band: `windows` windows each contributing `tapers`
// complex coefficients whose squared magnitudes add up to `power_sum`.
InverseGamma psd_posterior(const InverseGamma& prior, std::size_t windows, std::size_t tapers, double power_sum);

// rate / Gamma(shape, 1).
double sample_psd(const InverseGamma& ig, Rng& rng);

// Gamma(a0 + n a, b0 + sum 1/f) draw for the IG rate shared by `psd_values`.
double sample_b_posterior(double prior_shape, double prior_rate, std::span<const double> psd_values,
                          double psd_shape, Rng& rng);

// Stick weights beta_1..beta_K from Beta(1, gamma) fractions, followed by the
// leftover mass 1 - sum beta_k; K + 1 entries.
std::vector<double> stick_breaking(double gamma, std::size_t k_max, Rng& rng);

// Dirichlet(alpha beta_k + counts_k) over K instantiated states plus the
// remainder slot. `beta` and `counts` have the same length; the remainder's
// count is expected to be zero.
std::vector<double> sample_transition_row(double alpha, std::span<const double> beta,
                                          std::span<const double> counts, Rng& rng);

double log_gamma_density(double x, double shape, double rate);

}  // namespace sleepstate
