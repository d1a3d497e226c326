#include "sleepstate/model.hpp"

#include <cmath>
#include <numbers>

#include "sleepstate/error.hpp"

namespace sleepstate {

double InverseGamma::log_density(double x) const {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

double log_gamma_density(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

void HyperPriors::validate() const {
  for (double v : {gamma_shape, gamma_rate, alpha_shape, alpha_rate, rate_shape, rate_rate, psd_shape}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("hyperprior parameters must be positive");
  }
}

double emission_log_likelihood_from_power(std::span<const double> band_power, std::size_t tapers,
                                          std::span<const double> psd) {
  if (band_power.size() != psd.size()) throw ValidationError("band count mismatch in emission likelihood");
  const double m = static_cast<double>(tapers);
  double ll = 0.0;
  for (std::size_t b = 0; b < psd.size(); ++b) {
    if (!(psd[b] > 0.0)) throw ValidationError("PSD values must be positive");
    ll -= m * std::log(std::numbers::pi * psd[b]) + band_power[b] / psd[b];
  }
  return ll;
}

double emission_log_likelihood(std::span<const Complex> coeffs, std::size_t tapers, std::span<const double> psd) {
  if (coeffs.size() != psd.size() * tapers) throw ValidationError("band count mismatch in emission likelihood");
  std::vector<double> power(psd.size(), 0.0);
  for (std::size_t b = 0; b < psd.size(); ++b) {
    for (std::size_t m = 0; m < tapers; ++m) power[b] += std::norm(coeffs[b * tapers + m]);
  }
  return emission_log_likelihood_from_power(power, tapers, psd);
}

InverseGamma psd_posterior(const InverseGamma& prior, std::size_t windows, std::size_t tapers, double power_sum) {
  return {prior.shape + static_cast<double>(windows * tapers), prior.rate + power_sum};
}

double sample_psd(const InverseGamma& ig, Rng& rng) {
  if (!(ig.shape > 0.0) || !(ig.rate > 0.0)) throw NumericalError("inverse gamma parameters must be positive");
  return ig.rate * std::exp(-sample_log_gamma(rng, ig.shape));
}

double sample_b_posterior(double prior_shape, double prior_rate, std::span<const double> psd_values,
                          double psd_shape, Rng& rng) {
  double shape = prior_shape;
  double rate = prior_rate;
  for (double f : psd_values) {
    if (!(f > 0.0)) throw ValidationError("PSD values must be positive");
    shape += psd_shape;
    rate += 1.0 / f;
  }
  return sample_gamma(rng, shape, rate);
}

std::vector<double> stick_breaking(double gamma, std::size_t k_max, Rng& rng) {
  if (!(gamma > 0.0)) throw ValidationError("stick-breaking concentration must be positive");
  if (k_max < 1) throw ValidationError("stick-breaking needs at least one stick");
  std::vector<double> beta(k_max + 1);
  double log_rest = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) {
    const double la = sample_log_gamma(rng, 1.0);
    const double lb = sample_log_gamma(rng, gamma);
    const double top = std::max(la, lb);
    const double lse = top + std::log(std::exp(la - top) + std::exp(lb - top));
    beta[k] = std::exp(log_rest + la - lse);
    log_rest += lb - lse;
  }
  beta[k_max] = std::exp(log_rest);
  return beta;
}

std::vector<double> sample_transition_row(double alpha, std::span<const double> beta,
                                          std::span<const double> counts, Rng& rng) {
  if (beta.size() != counts.size()) throw ValidationError("transition row shape mismatch");
  std::vector<double> params(beta.size());
  for (std::size_t k = 0; k < beta.size(); ++k) params[k] = alpha * beta[k] + counts[k];
  return sample_dirichlet(rng, params);
}

}  // namespace sleepstate
