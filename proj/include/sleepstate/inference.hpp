#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sleepstate/model.hpp"
#include "sleepstate/random.hpp"
#include "sleepstate/signal.hpp"

namespace sleepstate {

// Sufficient statistics the sampler needs from a SpectralObservation.
struct InferenceData {
  std::size_t windows = 0;
  std::size_t bands = 0;
  std::size_t tapers = 0;
  std::vector<double> band_power;  // [window][band] sum over tapers of Re^2 + Im^2
  std::vector<bool> valid;
  // Per-band unit of the PSD values the sampler works in; original-unit PSD is
  // scale * f. All ones unless the observations were standardized.
  std::vector<double> band_scale;

  double power(std::size_t t, std::size_t b) const { return band_power[t * bands + b]; }
};

// With `standardize`, each band is divided by the median (over valid windows)
// of its per-taper power so the unit-scale hyperpriors are meaningful.
InferenceData prepare_inference_data(const SpectralObservation& obs, bool standardize);

struct InferenceConfig {
  std::size_t k_max = 30;
  std::size_t burn_in = 2000;
  std::size_t n_samples = 100;
  std::size_t thin = 50;
  std::uint64_t seed = 1;
  // Without an explicit starting trajectory, windows are assigned uniformly at
  // random to this many states (capped at k_max).
  std::size_t initial_states = 10;
  HyperPriors priors;
  bool standardize = true;
  bool parallel = true;

  void validate() const;
  std::size_t total_sweeps() const { return burn_in + n_samples * thin; }
  // True when the sweep that just completed (1-based count) is retained.
  bool records(std::size_t completed_sweeps) const;
};

// Full sampler state. States are held in stick order; the first K are
// instantiated and the stick weights, the initial distribution and every
// transition row carry one extra trailing slot for the uninstantiated mass.
// The model is the HDP-HMM truncated at k_max sticks (the last stick takes
// whatever mass is left), so once K == k_max the trailing slot is exactly 0.
struct ChainState {
  std::vector<std::size_t> trajectory;
  std::vector<double> slices;
  double gamma = 1.0;
  double alpha = 1.0;
  std::vector<double> stick_log_fraction;  // log beta'_k
  std::vector<double> stick_log_rest;      // log(1 - beta'_k)
  std::vector<double> beta;                // K + 1
  std::vector<double> initial;             // K + 1
  std::vector<std::vector<double>> transition;  // K rows of K + 1
  std::vector<std::vector<double>> psd;         // [state][band]
  std::vector<std::vector<double>> rate;        // [state][band] IG rate b
  std::size_t iteration = 0;
  Rng rng;

  std::size_t instantiated() const { return psd.size(); }
  std::size_t occupied() const;
  void check_invariants() const;
};

struct TransitionCounts {
  std::vector<double> initial;             // K
  std::vector<std::vector<double>> rows;   // K x K
  std::vector<std::size_t> occupancy;      // windows per state (valid or not)
  std::vector<std::size_t> valid_occupancy;
};

TransitionCounts count_transitions(const ChainState& chain, const InferenceData& data);

// Auxiliary table counts of the Chinese restaurant franchise.
struct TableCounts {
  std::vector<double> per_state;  // m_{., k}
  double total = 0.0;
};

// Number of occupied tables after seating `customers` with weight `weight`
// (= alpha beta_k): sum_i Bernoulli(weight / (weight + i - 1)).
std::size_t sample_table_count(std::size_t customers, double weight, Rng& rng);

ChainState initialize_chain(const InferenceData& data, const InferenceConfig& config,
                            const std::optional<std::vector<std::size_t>>& initial_trajectory = std::nullopt);

// Recomputes `beta` from the stick fractions.
void refresh_beta(ChainState& chain);

// u_1 ~ U(0, initial[s_1]), u_t ~ U(0, transition[s_{t-1}][s_t]).
void sample_slices(ChainState& chain);

struct ExtendResult {
  std::size_t added = 0;
  bool truncation_reached = false;  // instantiated count hit k_max
};

// Breaks new sticks until no row can move into the uninstantiated mass with
// probability >= u_min, or k_max states exist. New states get prior rows and
// prior emission parameters.
ExtendResult extend_states(ChainState& chain, double u_min, const InferenceConfig& config);

// Slice-masked forward filtering, backward sampling of the whole trajectory.
// Each transition allowed by the slices carries weight 1; invalid windows have
// emission weight 1.
void forward_filter_backward_sample(ChainState& chain, const InferenceData& data, bool parallel);

// Drops trailing instantiated states that own no window.
void trim_unused_states(ChainState& chain);

TableCounts sample_table_counts(ChainState& chain, const TransitionCounts& counts);

// beta'_k ~ Beta(1 + m_k, gamma + sum_{l>k} m_l) for instantiated sticks below
// the truncation; transition rows must be resampled afterwards.
void resample_beta(ChainState& chain, const TableCounts& tables, std::size_t k_max);

// gamma from its conjugate update given the stick fractions; alpha through
// the beta/Bernoulli auxiliary-variable scheme over all restaurants.
void resample_concentrations(ChainState& chain, const TransitionCounts& counts, const TableCounts& tables,
                             const HyperPriors& priors, std::size_t k_max);

void resample_transitions(ChainState& chain, const TransitionCounts& counts);

// f from its IG posterior, then b from its Gamma posterior, per state and band.
void resample_emissions(ChainState& chain, const InferenceData& data, const HyperPriors& priors);

double log_joint(const ChainState& chain, const InferenceData& data, const HyperPriors& priors, std::size_t k_max);

struct SweepInfo {
  std::size_t iteration = 0;
  std::size_t occupied = 0;
  std::size_t instantiated = 0;
  bool truncation_reached = false;
  double gamma = 0.0;
  double alpha = 0.0;
  double log_joint = 0.0;
};

// One full sweep: slices, extension, trajectory, trimming, table counts, beta,
// concentrations, transition rows, emission PSDs, IG rates.
SweepInfo gibbs_sweep(ChainState& chain, const InferenceData& data, const InferenceConfig& config);

struct StateSummary {
  std::size_t label = 0;
  std::size_t occupancy = 0;
  std::vector<InverseGamma> posterior;  // per band, original units
  std::vector<double> psd;              // current draw, original units
  std::vector<double> rate;             // current IG rate, original units
};

struct PosteriorSample {
  std::size_t iteration = 0;
  std::vector<std::size_t> trajectory;
  std::vector<StateSummary> states;             // occupied states, ascending label
  std::vector<std::vector<double>> transition;  // occupied x occupied
  std::vector<std::vector<std::size_t>> transition_counts;
  double gamma = 0.0;
  double alpha = 0.0;
  double log_joint = 0.0;

  std::size_t occupied() const { return states.size(); }
};

PosteriorSample record_sample(const ChainState& chain, const InferenceData& data, const InferenceConfig& config,
                              double log_joint_value);

std::vector<PosteriorSample> run_chain(const InferenceData& data, const InferenceConfig& config,
                                       const std::function<void(const SweepInfo&)>& progress = {});

}  // namespace sleepstate
