#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sleepstate/inference.hpp"
#include "sleepstate/model.hpp"

namespace sleepstate {

// One discovered state of one subject, ready for cross-subject clustering.
struct SubjectState {
  std::string subject;
  std::size_t state = 0;
  std::vector<double> spectrum;    // MAP PSD per band
  std::size_t occurrences = 0;     // median window count across samples
  std::vector<double> normalized;  // spectrum / sum(spectrum)
};

struct ClusterModel {
  std::vector<std::vector<double>> centroids;  // normalized, strictly positive
  std::vector<std::size_t> assignment;         // per input state
  double distortion = 0.0;                     // sum_i n_i J(f_i, c_{a(i)})
  std::vector<double> distortion_trace;        // per iteration of the winning restart
  std::size_t iterations = 0;
  std::size_t restart = 0;
};

struct KMeansConfig {
  std::size_t clusters = 9;
  std::size_t restarts = 20;
  std::size_t max_iterations = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

// Mode of the inverse gamma, rate / (shape + 1).
double map_spectrum(const InverseGamma& posterior);

std::vector<double> normalize_spectrum(std::span<const double> f);

// sum_j f1/f2 + f2/f1 - 2.
double symmetric_kl(std::span<const double> f1, std::span<const double> f2);

// Per band sqrt(sum n f / sum (n / f)), the unconstrained minimizer of the
// weighted distortion, followed by renormalization to unit sum.
std::vector<double> weighted_centroid(const std::vector<std::vector<double>>& members, std::span<const double> weights);

// Same as above without the final renormalization.
std::vector<double> unnormalized_centroid(const std::vector<std::vector<double>>& members,
                                          std::span<const double> weights);

// Exact minimizer of the weighted distortion over centroids summing to one:
// c_j = sqrt(A_j / (B_j + lambda)) with lambda chosen so that sum c_j = 1.
std::vector<double> simplex_centroid(const std::vector<std::vector<double>>& members, std::span<const double> weights);

double weighted_distortion(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                           const std::vector<std::vector<double>>& centroids, std::span<const std::size_t> assignment);

// Occurrence-weighted k-means under symmetric_kl with k-means++ seeding; the
// best of `restarts` runs by weighted distortion. Inputs must be normalized.
ClusterModel weighted_kmeans(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                             const KMeansConfig& config);

// Best weighted distortion for each cluster count 1..max_clusters.
std::vector<double> distortion_sweep(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                                     std::size_t max_clusters, const KMeansConfig& config);

// Lower median of the per-sample window counts.
std::size_t representative_occurrences(std::vector<std::size_t> counts);

// Window count of `state` in every sample (zero where it is absent).
std::vector<std::size_t> state_counts(const std::vector<PosteriorSample>& samples, std::size_t state);

// States ever occupied in the samples, with MAP spectra from sufficient
// statistics pooled over all samples and median occurrences. States whose
// representative occurrence count is zero are dropped.
std::vector<SubjectState> subject_states(const std::string& subject, const std::vector<PosteriorSample>& samples,
                                         double psd_shape);

// Per window, the state label assigned most often across samples (smallest
// label on ties).
std::vector<std::size_t> modal_trajectory(const std::vector<PosteriorSample>& samples);

}  // namespace sleepstate
