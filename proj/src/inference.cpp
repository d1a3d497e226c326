#include "sleepstate/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sleepstate/error.hpp"
#include "sleepstate/kernels.hpp"

namespace sleepstate {

namespace {

constexpr double kLogFloor = -1e300;
const double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double log_dirichlet_density(const std::vector<double>& p, const std::vector<double>& params) {
  double sum_params = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (params[i] <= 0.0) continue;
    sum_params += params[i];
    acc += -std::lgamma(params[i]) + (params[i] - 1.0) * std::log(std::max(p[i], 1e-300));
  }
  return acc + std::lgamma(sum_params);
}

void add_state(ChainState& chain, const InferenceConfig& config, std::size_t bands) {
  const std::size_t k = chain.instantiated();
  const double rest = chain.beta[k];
  double beta_new = rest;
  double rest_after = 0.0;
  if (k + 1 < config.k_max) {
    const auto [lf, lr] = sample_log_beta(chain.rng, 1.0, chain.gamma);
    chain.stick_log_fraction.push_back(lf);
    chain.stick_log_rest.push_back(lr);
    beta_new = rest * std::exp(lf);
    rest_after = rest * std::exp(lr);
  } else {
    chain.stick_log_fraction.push_back(0.0);
    chain.stick_log_rest.push_back(kNegInf);
  }
  chain.beta[k] = beta_new;
  chain.beta.push_back(rest_after);

  auto split = [&](std::vector<double>& row) {
    const double mass = row[k];
    if (rest_after > 0.0) {
      const auto [lf, lr] = sample_log_beta(chain.rng, chain.alpha * beta_new, chain.alpha * rest_after);
      row[k] = mass * std::exp(lf);
      row.push_back(mass * std::exp(lr));
    } else {
      row.push_back(0.0);
    }
  };
  split(chain.initial);
  for (auto& row : chain.transition) split(row);

  const std::vector<double> zeros(chain.beta.size(), 0.0);
  chain.transition.push_back(sample_transition_row(chain.alpha, chain.beta, zeros, chain.rng));

  const HyperPriors& pr = config.priors;
  std::vector<double> psd(bands), rate(bands);
  for (std::size_t b = 0; b < bands; ++b) {
    rate[b] = sample_gamma(chain.rng, pr.rate_shape, pr.rate_rate);
    psd[b] = sample_psd({pr.psd_shape, rate[b]}, chain.rng);
  }
  chain.psd.push_back(std::move(psd));
  chain.rate.push_back(std::move(rate));
}

}  // namespace

InferenceData prepare_inference_data(const SpectralObservation& obs, bool standardize) {
  InferenceData data;
  data.windows = obs.windows();
  data.bands = obs.bands;
  data.tapers = obs.tapers;
  data.valid = obs.valid;
  data.band_power.resize(data.windows * data.bands);
  for (std::size_t t = 0; t < data.windows; ++t) {
    for (std::size_t b = 0; b < data.bands; ++b) data.band_power[t * data.bands + b] = obs.band_power_sum(t, b);
  }
  data.band_scale.assign(data.bands, 1.0);
  if (data.windows == 0) throw ValidationError("observation sequence is empty");
  if (std::none_of(data.valid.begin(), data.valid.end(), [](bool v) { return v; })) {
    throw ValidationError("no valid windows to infer from");
  }
  if (standardize) {
    for (std::size_t b = 0; b < data.bands; ++b) {
      std::vector<double> per_taper;
      for (std::size_t t = 0; t < data.windows; ++t) {
        if (data.valid[t]) per_taper.push_back(data.power(t, b) / static_cast<double>(data.tapers));
      }
      std::nth_element(per_taper.begin(), per_taper.begin() + static_cast<std::ptrdiff_t>(per_taper.size() / 2),
                       per_taper.end());
      const double scale = per_taper[per_taper.size() / 2];
      if (scale > 0.0 && std::isfinite(scale)) {
        data.band_scale[b] = scale;
        for (std::size_t t = 0; t < data.windows; ++t) data.band_power[t * data.bands + b] /= scale;
      }
    }
  }
  return data;
}

void InferenceConfig::validate() const {
  if (k_max < 1) throw ValidationError("k_max must be at least 1");
  if (thin < 1) throw ValidationError("thinning interval must be at least 1");
  priors.validate();
}

bool InferenceConfig::records(std::size_t completed_sweeps) const {
  if (completed_sweeps <= burn_in) return false;
  const std::size_t after = completed_sweeps - burn_in;
  return after % thin == 0 && after / thin <= n_samples;
}

std::size_t ChainState::occupied() const {
  std::vector<bool> used(instantiated(), false);
  for (std::size_t s : trajectory) used[s] = true;
  return static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
}

void ChainState::check_invariants() const {
  const std::size_t k = instantiated();
  if (beta.size() != k + 1 || initial.size() != k + 1 || transition.size() != k || rate.size() != k) {
    throw InvariantViolation("chain state arrays disagree on the instantiated state count");
  }
  auto check_row = [](const std::vector<double>& row, const char* what) {
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw InvariantViolation(std::string(what) + " has a negative or NaN entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvariantViolation(std::string(what) + " does not sum to 1");
  };
  check_row(beta, "beta");
  check_row(initial, "initial distribution");
  for (const auto& row : transition) {
    if (row.size() != k + 1) throw InvariantViolation("transition row has the wrong length");
    check_row(row, "transition row");
  }
  for (std::size_t s : trajectory) {
    if (s >= k) throw InvariantViolation("trajectory references an uninstantiated state");
  }
  for (const auto& f : psd) {
    for (double v : f) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvariantViolation("nonpositive PSD value");
    }
  }
}

TransitionCounts count_transitions(const ChainState& chain, const InferenceData& data) {
  const std::size_t k = chain.instantiated();
  TransitionCounts c;
  c.initial.assign(k, 0.0);
  c.rows.assign(k, std::vector<double>(k, 0.0));
  c.occupancy.assign(k, 0);
  c.valid_occupancy.assign(k, 0);
  const auto& s = chain.trajectory;
  if (s.empty()) return c;
  c.initial[s[0]] += 1.0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    ++c.occupancy[s[t]];
    if (data.valid[t]) ++c.valid_occupancy[s[t]];
    if (t > 0) c.rows[s[t - 1]][s[t]] += 1.0;
  }
  return c;
}

std::size_t sample_table_count(std::size_t customers, double weight, Rng& rng) {
  if (customers == 0) return 0;
  std::size_t tables = 0;
  for (std::size_t i = 1; i <= customers; ++i) {
    const double p = weight / (weight + static_cast<double>(i - 1));
    if (i == 1 || sample_bernoulli(rng, p)) ++tables;
  }
  return tables;
}

void refresh_beta(ChainState& chain) {
  const std::size_t k = chain.stick_log_fraction.size();
  chain.beta.assign(k + 1, 0.0);
  double log_rest = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    chain.beta[i] = std::exp(log_rest + chain.stick_log_fraction[i]);
    log_rest += chain.stick_log_rest[i];
  }
  chain.beta[k] = std::exp(log_rest);
}

ChainState initialize_chain(const InferenceData& data, const InferenceConfig& config,
                            const std::optional<std::vector<std::size_t>>& initial_trajectory) {
  config.validate();
  ChainState chain;
  chain.rng.seed(config.seed);
  const HyperPriors& pr = config.priors;
  chain.gamma = pr.gamma_shape / pr.gamma_rate;
  chain.alpha = pr.alpha_shape / pr.alpha_rate;

  if (initial_trajectory) {
    if (initial_trajectory->size() != data.windows) throw ValidationError("initial trajectory has the wrong length");
    chain.trajectory = *initial_trajectory;
  } else {
    const std::size_t k0 = std::max<std::size_t>(1, std::min(config.initial_states, config.k_max));
    const std::vector<double> uniform(k0, 1.0);
    chain.trajectory.resize(data.windows);
    for (auto& s : chain.trajectory) s = sample_categorical(chain.rng, uniform);
  }
  const std::size_t k = *std::max_element(chain.trajectory.begin(), chain.trajectory.end()) + 1;
  if (k > config.k_max) throw ValidationError("initial trajectory uses more than k_max states");

  for (std::size_t i = 0; i < k; ++i) {
    if (i + 1 < config.k_max) {
      const auto [lf, lr] = sample_log_beta(chain.rng, 1.0, chain.gamma);
      chain.stick_log_fraction.push_back(lf);
      chain.stick_log_rest.push_back(lr);
    } else {
      chain.stick_log_fraction.push_back(0.0);
      chain.stick_log_rest.push_back(kNegInf);
    }
  }
  refresh_beta(chain);
  chain.initial.assign(k + 1, 0.0);
  chain.transition.assign(k, std::vector<double>(k + 1, 0.0));
  chain.psd.assign(k, std::vector<double>(data.bands, 1.0));
  chain.rate.assign(k, std::vector<double>(data.bands, pr.rate_shape / pr.rate_rate));

  const TransitionCounts counts = count_transitions(chain, data);
  resample_transitions(chain, counts);
  resample_emissions(chain, data, pr);
  chain.check_invariants();
  return chain;
}

void sample_slices(ChainState& chain) {
  const auto& s = chain.trajectory;
  chain.slices.resize(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) {
    const double bound = t == 0 ? chain.initial[s[0]] : chain.transition[s[t - 1]][s[t]];
    if (!(bound > 0.0)) {
      throw InvariantViolation("current trajectory uses a zero-probability transition at window " +
                               std::to_string(t));
    }
    chain.slices[t] = uniform_open01(chain.rng) * bound;
  }
}

ExtendResult extend_states(ChainState& chain, double u_min, const InferenceConfig& config) {
  if (!(u_min > 0.0)) throw InvariantViolation("slice minimum must be positive");
  ExtendResult result;
  const std::size_t bands = chain.psd.empty() ? 0 : chain.psd.front().size();
  auto max_leftover = [&]() {
    const std::size_t k = chain.instantiated();
    double m = chain.initial[k];
    for (const auto& row : chain.transition) m = std::max(m, row[k]);
    return m;
  };
  while (chain.instantiated() < config.k_max && max_leftover() >= u_min) {
    add_state(chain, config, bands);
    ++result.added;
  }
  result.truncation_reached = chain.instantiated() >= config.k_max;
  return result;
}

void forward_filter_backward_sample(ChainState& chain, const InferenceData& data, bool parallel) {
  const std::size_t n = data.windows;
  const std::size_t k = chain.instantiated();
  if (chain.slices.size() != n) throw InvariantViolation("slices not sampled for this trajectory");

  std::vector<double> psd_table(k * data.bands);
  for (std::size_t s = 0; s < k; ++s) {
    std::copy(chain.psd[s].begin(), chain.psd[s].end(), psd_table.begin() + static_cast<std::ptrdiff_t>(s * data.bands));
  }
  std::vector<double> loglik(n * k);
  if (parallel) {
    kernels::emission_matrix_parallel(data.band_power, data.valid, data.bands, data.tapers, psd_table, k, loglik);
  } else {
    kernels::emission_matrix_serial(data.band_power, data.valid, data.bands, data.tapers, psd_table, k, loglik);
  }

  std::vector<double> msg(n * k, 0.0);
  std::vector<double> pred(k);
  for (std::size_t t = 0; t < n; ++t) {
    const double u = chain.slices[t];
    if (t == 0) {
      for (std::size_t s = 0; s < k; ++s) pred[s] = chain.initial[s] > u ? 1.0 : 0.0;
    } else {
      std::fill(pred.begin(), pred.end(), 0.0);
      const double* prev = msg.data() + (t - 1) * k;
      for (std::size_t j = 0; j < k; ++j) {
        if (prev[j] == 0.0) continue;
        const auto& row = chain.transition[j];
        for (std::size_t s = 0; s < k; ++s) {
          if (row[s] > u) pred[s] += prev[j];
        }
      }
    }
    double* cur = msg.data() + t * k;
    const double* ll = loglik.data() + t * k;
    double top = kNegInf;
    for (std::size_t s = 0; s < k; ++s) {
      if (pred[s] > 0.0) top = std::max(top, std::max(ll[s], kLogFloor));
    }
    if (std::isinf(top)) {
      throw NumericalError("forward message vanished at window " + std::to_string(t));
    }
    double sum = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      cur[s] = pred[s] > 0.0 ? pred[s] * std::exp(std::max(ll[s], kLogFloor) - top) : 0.0;
      sum += cur[s];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      throw NumericalError("forward message vanished at window " + std::to_string(t));
    }
    for (std::size_t s = 0; s < k; ++s) cur[s] /= sum;
  }

  std::vector<double> w(k);
  auto& traj = chain.trajectory;
  traj[n - 1] = sample_categorical(chain.rng, std::span<const double>(msg.data() + (n - 1) * k, k));
  for (std::size_t t = n - 1; t-- > 0;) {
    const std::size_t next = traj[t + 1];
    const double u = chain.slices[t + 1];
    const double* cur = msg.data() + t * k;
    for (std::size_t j = 0; j < k; ++j) w[j] = chain.transition[j][next] > u ? cur[j] : 0.0;
    traj[t] = sample_categorical(chain.rng, w);
  }
}

void trim_unused_states(ChainState& chain) {
  std::vector<bool> used(chain.instantiated(), false);
  for (std::size_t s : chain.trajectory) used[s] = true;
  while (chain.instantiated() > 1 && !used[chain.instantiated() - 1]) {
    const std::size_t last = chain.instantiated() - 1;
    auto merge = [last](std::vector<double>& row) {
      row[last] += row[last + 1];
      row.pop_back();
    };
    merge(chain.initial);
    chain.transition.pop_back();
    for (auto& row : chain.transition) merge(row);
    chain.stick_log_fraction.pop_back();
    chain.stick_log_rest.pop_back();
    chain.psd.pop_back();
    chain.rate.pop_back();
    used.pop_back();
    refresh_beta(chain);
  }
}

TableCounts sample_table_counts(ChainState& chain, const TransitionCounts& counts) {
  const std::size_t k = chain.instantiated();
  TableCounts tables;
  tables.per_state.assign(k, 0.0);
  auto seat = [&](const std::vector<double>& row) {
    for (std::size_t s = 0; s < k; ++s) {
      const auto c = static_cast<std::size_t>(row[s]);
      if (c == 0) continue;
      const auto m = static_cast<double>(sample_table_count(c, chain.alpha * chain.beta[s], chain.rng));
      tables.per_state[s] += m;
      tables.total += m;
    }
  };
  seat(counts.initial);
  for (const auto& row : counts.rows) seat(row);
  return tables;
}

void resample_beta(ChainState& chain, const TableCounts& tables, std::size_t k_max) {
  const std::size_t k = chain.instantiated();
  double later = tables.total;
  for (std::size_t i = 0; i < k; ++i) {
    later -= tables.per_state[i];
    if (i + 1 < k_max) {
      const auto [lf, lr] = sample_log_beta(chain.rng, 1.0 + tables.per_state[i], chain.gamma + std::max(later, 0.0));
      chain.stick_log_fraction[i] = lf;
      chain.stick_log_rest[i] = lr;
    } else {
      chain.stick_log_fraction[i] = 0.0;
      chain.stick_log_rest[i] = kNegInf;
    }
  }
  refresh_beta(chain);
}

void resample_concentrations(ChainState& chain, const TransitionCounts& counts, const TableCounts& tables,
                             const HyperPriors& priors, std::size_t k_max) {
  // gamma | sticks: each proper stick contributes gamma (1 - beta')^(gamma - 1).
  const std::size_t proper = std::min(chain.instantiated(), k_max - 1);
  double sum_log_rest = 0.0;
  for (std::size_t i = 0; i < proper; ++i) sum_log_rest += chain.stick_log_rest[i];
  chain.gamma = sample_gamma(chain.rng, priors.gamma_shape + static_cast<double>(proper),
                             priors.gamma_rate - sum_log_rest);

  // alpha | tables, restaurant sizes.
  double shape = priors.alpha_shape + tables.total;
  double rate = priors.alpha_rate;
  auto restaurant = [&](const std::vector<double>& row) {
    double n = 0.0;
    for (double c : row) n += c;
    if (n <= 0.0) return;
    rate -= sample_log_beta(chain.rng, chain.alpha + 1.0, n).first;
    if (sample_bernoulli(chain.rng, n / (n + chain.alpha))) shape -= 1.0;
  };
  restaurant(counts.initial);
  for (const auto& row : counts.rows) restaurant(row);
  chain.alpha = sample_gamma(chain.rng, shape, rate);
  if (!(chain.alpha > 0.0) || !(chain.gamma > 0.0)) {
    throw NumericalError("concentration parameter underflowed to zero");
  }
}

void resample_transitions(ChainState& chain, const TransitionCounts& counts) {
  const std::size_t k = chain.instantiated();
  std::vector<double> c(k + 1, 0.0);
  std::copy(counts.initial.begin(), counts.initial.end(), c.begin());
  chain.initial = sample_transition_row(chain.alpha, chain.beta, c, chain.rng);
  for (std::size_t s = 0; s < k; ++s) {
    std::copy(counts.rows[s].begin(), counts.rows[s].end(), c.begin());
    c[k] = 0.0;
    chain.transition[s] = sample_transition_row(chain.alpha, chain.beta, c, chain.rng);
  }
}

void resample_emissions(ChainState& chain, const InferenceData& data, const HyperPriors& priors) {
  const std::size_t k = chain.instantiated();
  std::vector<double> power(k * data.bands, 0.0);
  std::vector<std::size_t> n(k, 0);
  for (std::size_t t = 0; t < data.windows; ++t) {
    if (!data.valid[t]) continue;
    const std::size_t s = chain.trajectory[t];
    ++n[s];
    for (std::size_t b = 0; b < data.bands; ++b) power[s * data.bands + b] += data.power(t, b);
  }
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t b = 0; b < data.bands; ++b) {
      const InverseGamma post =
          psd_posterior({priors.psd_shape, chain.rate[s][b]}, n[s], data.tapers, power[s * data.bands + b]);
      chain.psd[s][b] = sample_psd(post, chain.rng);
      const double f = chain.psd[s][b];
      chain.rate[s][b] =
          sample_b_posterior(priors.rate_shape, priors.rate_rate, std::span<const double>(&f, 1), priors.psd_shape,
                             chain.rng);
    }
  }
}

double log_joint(const ChainState& chain, const InferenceData& data, const HyperPriors& priors, std::size_t k_max) {
  const std::size_t k = chain.instantiated();
  double lp = log_gamma_density(chain.gamma, priors.gamma_shape, priors.gamma_rate) +
              log_gamma_density(chain.alpha, priors.alpha_shape, priors.alpha_rate);
  for (std::size_t i = 0; i < std::min(k, k_max - 1); ++i) {
    lp += std::log(chain.gamma) + (chain.gamma - 1.0) * chain.stick_log_rest[i];
  }
  std::vector<double> params(chain.beta.size());
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = chain.alpha * chain.beta[i];
  lp += log_dirichlet_density(chain.initial, params);
  for (const auto& row : chain.transition) lp += log_dirichlet_density(row, params);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t b = 0; b < data.bands; ++b) {
      lp += log_gamma_density(chain.rate[s][b], priors.rate_shape, priors.rate_rate);
      lp += InverseGamma{priors.psd_shape, chain.rate[s][b]}.log_density(chain.psd[s][b]);
    }
  }
  const auto& traj = chain.trajectory;
  std::vector<double> power(data.bands);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    lp += safe_log(t == 0 ? chain.initial[traj[0]] : chain.transition[traj[t - 1]][traj[t]]);
    if (!data.valid[t]) continue;
    for (std::size_t b = 0; b < data.bands; ++b) power[b] = data.power(t, b);
    lp += emission_log_likelihood_from_power(power, data.tapers, chain.psd[traj[t]]);
  }
  return lp;
}

SweepInfo gibbs_sweep(ChainState& chain, const InferenceData& data, const InferenceConfig& config) {
  sample_slices(chain);
  const double u_min = *std::min_element(chain.slices.begin(), chain.slices.end());
  const ExtendResult ext = extend_states(chain, u_min, config);
  forward_filter_backward_sample(chain, data, config.parallel);
  trim_unused_states(chain);

  const TransitionCounts counts = count_transitions(chain, data);
  const TableCounts tables = sample_table_counts(chain, counts);
  resample_beta(chain, tables, config.k_max);
  resample_concentrations(chain, counts, tables, config.priors, config.k_max);
  resample_transitions(chain, counts);
  resample_emissions(chain, data, config.priors);
  ++chain.iteration;

  SweepInfo info;
  info.iteration = chain.iteration;
  info.occupied = chain.occupied();
  info.instantiated = chain.instantiated();
  info.truncation_reached = ext.truncation_reached;
  info.gamma = chain.gamma;
  info.alpha = chain.alpha;
  info.log_joint = log_joint(chain, data, config.priors, config.k_max);
  return info;
}

PosteriorSample record_sample(const ChainState& chain, const InferenceData& data, const InferenceConfig& config,
                              double log_joint_value) {
  const TransitionCounts counts = count_transitions(chain, data);
  PosteriorSample sample;
  sample.iteration = chain.iteration;
  sample.trajectory = chain.trajectory;
  sample.gamma = chain.gamma;
  sample.alpha = chain.alpha;
  sample.log_joint = log_joint_value;

  std::vector<std::size_t> labels;
  for (std::size_t s = 0; s < chain.instantiated(); ++s) {
    if (counts.occupancy[s] > 0) labels.push_back(s);
  }
  std::vector<double> power(data.bands);
  for (std::size_t s : labels) {
    std::fill(power.begin(), power.end(), 0.0);
    for (std::size_t t = 0; t < data.windows; ++t) {
      if (!data.valid[t] || chain.trajectory[t] != s) continue;
      for (std::size_t b = 0; b < data.bands; ++b) power[b] += data.power(t, b);
    }
    StateSummary st;
    st.label = s;
    st.occupancy = counts.occupancy[s];
    for (std::size_t b = 0; b < data.bands; ++b) {
      const double scale = data.band_scale[b];
      const InverseGamma post =
          psd_posterior({config.priors.psd_shape, chain.rate[s][b]}, counts.valid_occupancy[s], data.tapers, power[b]);
      st.posterior.push_back({post.shape, post.rate * scale});
      st.psd.push_back(chain.psd[s][b] * scale);
      st.rate.push_back(chain.rate[s][b] * scale);
    }
    sample.states.push_back(std::move(st));
  }
  for (std::size_t i : labels) {
    std::vector<double> row;
    std::vector<std::size_t> crow;
    for (std::size_t j : labels) {
      row.push_back(chain.transition[i][j]);
      crow.push_back(static_cast<std::size_t>(counts.rows[i][j]));
    }
    sample.transition.push_back(std::move(row));
    sample.transition_counts.push_back(std::move(crow));
  }
  return sample;
}

std::vector<PosteriorSample> run_chain(const InferenceData& data, const InferenceConfig& config,
                                       const std::function<void(const SweepInfo&)>& progress) {
  ChainState chain = initialize_chain(data, config);
  std::vector<PosteriorSample> samples;
  samples.reserve(config.n_samples);
  for (std::size_t sweep = 0; sweep < config.total_sweeps(); ++sweep) {
    const SweepInfo info = gibbs_sweep(chain, data, config);
    if (progress) progress(info);
    if (config.records(chain.iteration)) samples.push_back(record_sample(chain, data, config, info.log_joint));
  }
  return samples;
}

}  // namespace sleepstate
