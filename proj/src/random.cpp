#include "sleepstate/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sleepstate/error.hpp"

namespace sleepstate {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw ValidationError("corrupt rng state in checkpoint");
  return rng;
}

double uniform_open01(Rng& rng) {
  while (true) {
    const double u = std::generate_canonical<double, 64>(rng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

double sample_normal(Rng& rng, double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(rng);
}

double sample_log_gamma(Rng& rng, double shape) {
  if (shape < 0.0 || !std::isfinite(shape)) {
    throw NumericalError("gamma shape must be finite and nonnegative");
  }
  if (shape == 0.0) return -std::numeric_limits<double>::infinity();
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return std::log(dist(rng));
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  std::gamma_distribution<double> dist(shape + 1.0, 1.0);
  const double g = dist(rng);
  return std::log(g) + std::log(uniform_open01(rng)) / shape;
}

double sample_gamma(Rng& rng, double shape, double rate) {
  if (!(rate > 0.0)) throw NumericalError("gamma rate must be positive");
  return std::exp(sample_log_gamma(rng, shape)) / rate;
}

double sample_beta(Rng& rng, double a, double b) {
  const double la = sample_log_gamma(rng, a);
  const double lb = sample_log_gamma(rng, b);
  if (std::isinf(la) && std::isinf(lb)) {
    throw NumericalError("beta draw with both shapes zero");
  }
  if (std::isinf(la)) return 0.0;
  if (std::isinf(lb)) return 1.0;
  const double m = std::max(la, lb);
  const double ea = std::exp(la - m);
  const double eb = std::exp(lb - m);
  return ea / (ea + eb);
}

std::pair<double, double> sample_log_beta(Rng& rng, double a, double b) {
  const double la = sample_log_gamma(rng, a);
  const double lb = sample_log_gamma(rng, b);
  const double inf = std::numeric_limits<double>::infinity();
  if (std::isinf(la) && std::isinf(lb)) throw NumericalError("beta draw with both shapes zero");
  if (std::isinf(la)) return {-inf, 0.0};
  if (std::isinf(lb)) return {0.0, -inf};
  const double m = std::max(la, lb);
  const double lse = m + std::log(std::exp(la - m) + std::exp(lb - m));
  return {la - lse, lb - lse};
}

std::vector<double> sample_dirichlet(Rng& rng, std::span<const double> alpha) {
  std::vector<double> logs(alpha.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    logs[i] = sample_log_gamma(rng, alpha[i]);
    m = std::max(m, logs[i]);
  }
  if (std::isinf(m)) throw NumericalError("dirichlet draw with all shapes zero");
  std::vector<double> out(alpha.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = std::isinf(logs[i]) ? 0.0 : std::exp(logs[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

bool sample_bernoulli(Rng& rng, double p) { return uniform_open01(rng) < p; }

std::size_t sample_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalError("categorical draw with zero or non-finite total weight");
  }
  const double target = uniform_open01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i];
    if (target < acc) return i;
  }
  return last_positive;
}

}  // namespace sleepstate
