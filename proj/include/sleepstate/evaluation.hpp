#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "sleepstate/inference.hpp"
#include "sleepstate/signal.hpp"

namespace sleepstate {

// Scored sleep stages on a fixed epoch grid; 5 = wake ... 1 = deepest sleep.
struct Hypnogram {
  std::vector<int> labels;
  double epoch_seconds = 30.0;

  void validate() const;
};

inline constexpr int kMinStage = 1;
inline constexpr int kMaxStage = 5;

// Per model window the label of the epoch containing it. The epoch length must
// be a whole multiple of the window length and cover every window.
std::vector<int> expand_hypnogram(const Hypnogram& hyp, double window_seconds, std::size_t windows);

// Indices of the bands overlapping [lo, hi) Hz; throws if there are none.
std::vector<std::size_t> bands_in_range(const std::vector<Band>& bands, double lo_hz, double hi_hz);

// Maps state label -> rank (1 = largest normalized power in the alpha bands).
// Ties go to larger total power, then to the smaller label.
std::map<std::size_t, std::size_t> reorder_by_alpha(const std::map<std::size_t, std::vector<double>>& spectra,
                                                    std::span<const std::size_t> alpha_bands);

// Pearson correlation of mid-ranks.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct RhoDistribution {
  std::vector<double> rhos;
  double median = 0.0;
};

// One rho per sample between the hypnogram and the sample's trajectory after
// alpha reordering (rank 1 scored highest, like wake).
RhoDistribution rho_distribution(const std::vector<PosteriorSample>& samples, std::span<const int> window_stages,
                                 std::span<const std::size_t> alpha_bands);

// Reported trajectory: modal state per window, then ranked by alpha power.
double rho_for_trajectory(std::span<const std::size_t> trajectory, const std::map<std::size_t, std::size_t>& ranks,
                          std::span<const int> window_stages);

struct AlignedTrajectories {
  std::vector<int> stage;            // hypnogram label per window
  std::vector<std::size_t> cluster;  // cluster per window
  double window_seconds = 15.0;
};

struct Heatmap {
  std::vector<int> stages;              // column labels
  std::vector<std::size_t> clusters;    // row labels, display order
  std::vector<std::vector<double>> proportion;  // [row][column]
  std::vector<int> empty_stages;        // columns with no windows (all zero)
};

// Fraction of each stage's windows falling in each cluster; rows follow
// `cluster_order`.
Heatmap stage_cluster_heatmap(const AlignedTrajectories& aligned, std::span<const std::size_t> cluster_order,
                              std::span<const int> stages);

// Cluster ids sorted by ascending normalized alpha power of their centroids.
std::vector<std::size_t> order_clusters_by_alpha(const std::vector<std::vector<double>>& centroids,
                                                 std::span<const std::size_t> alpha_bands);

// Cluster label changes between consecutive windows both scored as `stage`,
// per minute of that stage.
double transition_rate_per_minute(const AlignedTrajectories& aligned, int stage);

// Largest fraction of positions on which `predicted` equals `truth` after a
// one-to-one relabeling of the predicted labels.
double matched_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

// The relabeling achieving matched_accuracy: predicted label -> truth label.
std::map<std::size_t, std::size_t> best_label_matching(std::span<const std::size_t> predicted,
                                                       std::span<const std::size_t> truth);

}  // namespace sleepstate
