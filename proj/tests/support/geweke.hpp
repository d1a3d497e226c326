#pragma once

// Joint-distribution check for the sampler on a tiny model: draws from the
// truncated prior by direct forward simulation are compared with the end
// points of short successive-conditional chains (sweep given data, then
// regenerate data given parameters) started from forward draws.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "sleepstate/inference.hpp"

namespace testing_support {

struct GewekeSetup {
  std::size_t windows = 20;
  std::size_t bands = 2;
  std::size_t tapers = 2;
  std::size_t k_max = 5;
};

struct GewekeDraw {
  int occupied = 0;
  double mean_log_f = 0.0;  // over occupied states and bands
  double gamma = 0.0;
  double alpha = 0.0;
};

struct ForwardSample {
  sleepstate::ChainState chain;
  sleepstate::InferenceData data;
};

inline double draw_gamma(std::mt19937_64& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

// Normalizes in log space; tiny shapes would underflow plain gamma draws.
inline std::vector<double> draw_dirichlet(std::mt19937_64& rng, const std::vector<double>& a) {
  std::vector<double> lg(a.size(), -INFINITY);
  double top = -INFINITY;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    lg[i] = std::log(draw_gamma(rng, a[i] + 1.0, 1.0)) + std::log1p(-u) / a[i];
    top = std::max(top, lg[i]);
  }
  std::vector<double> p(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += p[i] = std::exp(lg[i] - top);
  for (auto& v : p) v /= s;
  return p;
}

inline std::size_t draw_index(std::mt19937_64& rng, const std::vector<double>& p) {
  return std::discrete_distribution<std::size_t>(p.begin(), p.end())(rng);
}

// Forward draw of every variable, then the chain-side representation: states
// past the largest used label are folded into the trailing slot.
inline ForwardSample forward_sample(const GewekeSetup& g, const sleepstate::HyperPriors& pr, std::mt19937_64& rng) {
  const std::size_t k = g.k_max;
  const double gamma = draw_gamma(rng, pr.gamma_shape, pr.gamma_rate);
  const double alpha = draw_gamma(rng, pr.alpha_shape, pr.alpha_rate);
  std::vector<double> frac(k), beta(k);
  double rest = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (i + 1 < k) {
      const double x = draw_gamma(rng, 1.0, 1.0), y = draw_gamma(rng, gamma, 1.0);
      frac[i] = x / (x + y);
    } else {
      frac[i] = 1.0;
    }
    beta[i] = rest * frac[i];
    rest *= 1.0 - frac[i];
  }
  std::vector<double> conc(k);
  for (std::size_t i = 0; i < k; ++i) conc[i] = alpha * beta[i];
  const auto init = draw_dirichlet(rng, conc);
  std::vector<std::vector<double>> rows(k);
  for (auto& r : rows) r = draw_dirichlet(rng, conc);
  std::vector<std::vector<double>> rate(k, std::vector<double>(g.bands)), psd = rate;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t b = 0; b < g.bands; ++b) {
      rate[s][b] = draw_gamma(rng, pr.rate_shape, pr.rate_rate);
      psd[s][b] = 1.0 / draw_gamma(rng, pr.psd_shape, rate[s][b]);
    }
  }
  std::vector<std::size_t> traj(g.windows);
  traj[0] = draw_index(rng, init);
  for (std::size_t t = 1; t < g.windows; ++t) traj[t] = draw_index(rng, rows[traj[t - 1]]);

  ForwardSample out;
  auto& d = out.data;
  d.windows = g.windows;
  d.bands = g.bands;
  d.tapers = g.tapers;
  d.valid.assign(g.windows, true);
  d.band_scale.assign(g.bands, 1.0);
  d.band_power.resize(g.windows * g.bands);
  for (std::size_t t = 0; t < g.windows; ++t) {
    for (std::size_t b = 0; b < g.bands; ++b) {
      d.band_power[t * g.bands + b] = psd[traj[t]][b] * draw_gamma(rng, static_cast<double>(g.tapers), 1.0);
    }
  }

  const std::size_t used = *std::max_element(traj.begin(), traj.end()) + 1;
  auto& c = out.chain;
  c.trajectory = traj;
  c.gamma = gamma;
  c.alpha = alpha;
  for (std::size_t i = 0; i < used; ++i) {
    c.stick_log_fraction.push_back(std::log(frac[i]));
    c.stick_log_rest.push_back(std::log1p(-frac[i]));
  }
  auto fold = [used](const std::vector<double>& r) {
    std::vector<double> o(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(used));
    double tail = 0.0;
    for (std::size_t i = used; i < r.size(); ++i) tail += r[i];
    o.push_back(tail);
    return o;
  };
  sleepstate::refresh_beta(c);
  c.initial = fold(init);
  for (std::size_t s = 0; s < used; ++s) {
    c.transition.push_back(fold(rows[s]));
    c.psd.push_back(psd[s]);
    c.rate.push_back(rate[s]);
  }
  c.rng.seed(rng());
  return out;
}

inline GewekeDraw summarize(const sleepstate::ChainState& c) {
  std::set<std::size_t> used(c.trajectory.begin(), c.trajectory.end());
  GewekeDraw d;
  d.occupied = static_cast<int>(used.size());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t s : used) {
    for (double f : c.psd[s]) {
      acc += std::log(f);
      ++n;
    }
  }
  d.mean_log_f = acc / static_cast<double>(n);
  d.gamma = c.gamma;
  d.alpha = c.alpha;
  return d;
}

// Regenerates the band powers from the chain's current states and PSDs.
inline void resample_data(sleepstate::InferenceData& d, const sleepstate::ChainState& c, std::mt19937_64& rng) {
  for (std::size_t t = 0; t < d.windows; ++t) {
    for (std::size_t b = 0; b < d.bands; ++b) {
      d.band_power[t * d.bands + b] =
          c.psd[c.trajectory[t]][b] * draw_gamma(rng, static_cast<double>(d.tapers), 1.0);
    }
  }
}

struct GewekeResult {
  std::vector<GewekeDraw> forward;
  std::vector<GewekeDraw> chained;
};

inline GewekeResult run_geweke(std::size_t replicates, std::size_t steps, std::uint64_t seed) {
  GewekeSetup g;
  sleepstate::InferenceConfig cfg;
  cfg.k_max = g.k_max;
  cfg.standardize = false;
  cfg.parallel = false;
  std::mt19937_64 rng(seed);
  GewekeResult r;
  for (std::size_t i = 0; i < replicates; ++i) {
    r.forward.push_back(summarize(forward_sample(g, cfg.priors, rng).chain));
    ForwardSample start = forward_sample(g, cfg.priors, rng);
    for (std::size_t s = 0; s < steps; ++s) {
      sleepstate::gibbs_sweep(start.chain, start.data, cfg);
      resample_data(start.data, start.chain, rng);
    }
    r.chained.push_back(summarize(start.chain));
  }
  return r;
}

inline std::vector<int> occupied_values(const std::vector<GewekeDraw>& v) {
  std::vector<int> o;
  for (const auto& d : v) o.push_back(d.occupied);
  return o;
}

}  // namespace testing_support
