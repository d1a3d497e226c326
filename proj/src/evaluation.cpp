#include "sleepstate/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sleepstate/clustering.hpp"
#include "sleepstate/error.hpp"

namespace sleepstate {

namespace {

std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

double alpha_fraction(std::span<const double> spectrum, std::span<const std::size_t> alpha_bands) {
  double total = 0.0, alpha = 0.0;
  for (double v : spectrum) total += v;
  for (std::size_t b : alpha_bands) alpha += spectrum[b];
  return alpha / total;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Minimum-cost assignment on a square matrix (Hungarian algorithm with
// potentials); returns the column assigned to each row.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

void Hypnogram::validate() const {
  if (!(epoch_seconds > 0.0)) throw ValidationError("hypnogram epoch length must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < kMinStage || labels[i] > kMaxStage) {
      throw ValidationError("hypnogram label out of range at epoch " + std::to_string(i));
    }
  }
}

std::vector<int> expand_hypnogram(const Hypnogram& hyp, double window_seconds, std::size_t windows) {
  hyp.validate();
  const double ratio = hyp.epoch_seconds / window_seconds;
  const auto per_epoch = static_cast<std::size_t>(std::llround(ratio));
  if (per_epoch < 1 || std::abs(ratio - static_cast<double>(per_epoch)) > 1e-9) {
    throw ValidationError("hypnogram epoch length must be a whole multiple of the window length");
  }
  if (hyp.labels.size() * per_epoch < windows) {
    throw ValidationError("hypnogram covers " + std::to_string(hyp.labels.size() * per_epoch) + " windows, need " +
                          std::to_string(windows));
  }
  std::vector<int> out(windows);
  for (std::size_t t = 0; t < windows; ++t) out[t] = hyp.labels[t / per_epoch];
  return out;
}

std::vector<std::size_t> bands_in_range(const std::vector<Band>& bands, double lo_hz, double hi_hz) {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    if (bands[b].lo_hz < hi_hz && bands[b].hi_hz > lo_hz) out.push_back(b);
  }
  if (out.empty()) throw ValidationError("alpha range does not overlap any retained band");
  return out;
}

std::map<std::size_t, std::size_t> reorder_by_alpha(const std::map<std::size_t, std::vector<double>>& spectra,
                                                    std::span<const std::size_t> alpha_bands) {
  if (alpha_bands.empty()) throw ValidationError("alpha range does not overlap any retained band");
  struct Key {
    std::size_t label;
    double alpha, total;
  };
  std::vector<Key> keys;
  for (const auto& [label, f] : spectra) {
    for (std::size_t b : alpha_bands) {
      if (b >= f.size()) throw ValidationError("alpha band index outside the state spectrum");
    }
    const double total = std::accumulate(f.begin(), f.end(), 0.0);
    keys.push_back({label, alpha_fraction(f, alpha_bands), total});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.alpha != b.alpha) return a.alpha > b.alpha;
    if (a.total != b.total) return a.total > b.total;
    return a.label < b.label;
  });
  std::map<std::size_t, std::size_t> ranks;
  for (std::size_t i = 0; i < keys.size(); ++i) ranks[keys[i].label] = i + 1;
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("rho needs sequences of equal length");
  if (x.size() < 2) throw ValidationError("rho needs at least two points");
  const std::vector<double> rx = mid_ranks(x), ry = mid_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("rho undefined for a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double rho_for_trajectory(std::span<const std::size_t> trajectory, const std::map<std::size_t, std::size_t>& ranks,
                          std::span<const int> window_stages) {
  if (trajectory.size() != window_stages.size()) throw ValidationError("trajectory and hypnogram lengths differ");
  std::vector<double> x(trajectory.size()), y(trajectory.size());
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const auto it = ranks.find(trajectory[t]);
    if (it == ranks.end()) throw InvariantViolation("trajectory state missing from the alpha ranking");
    x[t] = -static_cast<double>(it->second);
    y[t] = window_stages[t];
  }
  return spearman_rho(x, y);
}

RhoDistribution rho_distribution(const std::vector<PosteriorSample>& samples, std::span<const int> window_stages,
                                 std::span<const std::size_t> alpha_bands) {
  if (samples.empty()) throw ValidationError("at least one posterior sample is required");
  RhoDistribution out;
  for (const auto& s : samples) {
    std::map<std::size_t, std::vector<double>> spectra;
    for (const auto& st : s.states) {
      std::vector<double> f;
      for (const auto& ig : st.posterior) f.push_back(map_spectrum(ig));
      spectra[st.label] = std::move(f);
    }
    out.rhos.push_back(rho_for_trajectory(s.trajectory, reorder_by_alpha(spectra, alpha_bands), window_stages));
  }
  out.median = median_of(out.rhos);
  return out;
}

Heatmap stage_cluster_heatmap(const AlignedTrajectories& aligned, std::span<const std::size_t> cluster_order,
                              std::span<const int> stages) {
  if (aligned.stage.empty()) throw ValidationError("aligned trajectories are empty");
  if (aligned.stage.size() != aligned.cluster.size()) throw ValidationError("aligned trajectories differ in length");
  Heatmap h;
  h.stages.assign(stages.begin(), stages.end());
  h.clusters.assign(cluster_order.begin(), cluster_order.end());
  h.proportion.assign(h.clusters.size(), std::vector<double>(h.stages.size(), 0.0));
  std::map<std::size_t, std::size_t> row;
  for (std::size_t r = 0; r < h.clusters.size(); ++r) row[h.clusters[r]] = r;
  for (std::size_t c = 0; c < h.stages.size(); ++c) {
    std::size_t n = 0;
    for (std::size_t t = 0; t < aligned.stage.size(); ++t) {
      if (aligned.stage[t] != h.stages[c]) continue;
      const auto it = row.find(aligned.cluster[t]);
      if (it == row.end()) throw ValidationError("window cluster missing from the heatmap row order");
      h.proportion[it->second][c] += 1.0;
      ++n;
    }
    if (n == 0) {
      h.empty_stages.push_back(h.stages[c]);
      continue;
    }
    for (auto& r : h.proportion) r[c] /= static_cast<double>(n);
  }
  return h;
}

std::vector<std::size_t> order_clusters_by_alpha(const std::vector<std::vector<double>>& centroids,
                                                 std::span<const std::size_t> alpha_bands) {
  std::vector<std::size_t> order(centroids.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> a;
  for (const auto& c : centroids) a.push_back(alpha_fraction(c, alpha_bands));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
  return order;
}

double transition_rate_per_minute(const AlignedTrajectories& aligned, int stage) {
  if (aligned.stage.size() != aligned.cluster.size()) throw ValidationError("aligned trajectories differ in length");
  std::size_t windows = 0, changes = 0;
  for (std::size_t t = 0; t < aligned.stage.size(); ++t) {
    if (aligned.stage[t] != stage) continue;
    ++windows;
    if (t > 0 && aligned.stage[t - 1] == stage && aligned.cluster[t] != aligned.cluster[t - 1]) ++changes;
  }
  if (windows == 0) throw ValidationError("stage " + std::to_string(stage) + " occupies no windows");
  return static_cast<double>(changes) / (static_cast<double>(windows) * aligned.window_seconds / 60.0);
}

std::map<std::size_t, std::size_t> best_label_matching(std::span<const std::size_t> predicted,
                                                       std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) throw ValidationError("label sequences differ in length");
  std::map<std::size_t, std::size_t> pi, ti;
  for (std::size_t v : predicted) pi.emplace(v, pi.size());
  for (std::size_t v : truth) ti.emplace(v, ti.size());
  std::size_t k = 0;
  for (auto& [v, i] : pi) i = k++;
  k = 0;
  for (auto& [v, i] : ti) i = k++;
  const std::size_t n = std::max(pi.size(), ti.size());
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < predicted.size(); ++t) cost[pi[predicted[t]]][ti[truth[t]]] -= 1.0;
  const std::vector<std::size_t> match = hungarian(cost);
  std::vector<std::size_t> truth_labels(ti.size());
  for (const auto& [v, i] : ti) truth_labels[i] = v;
  std::map<std::size_t, std::size_t> out;
  for (const auto& [v, i] : pi) {
    if (match[i] < truth_labels.size()) out[v] = truth_labels[match[i]];
  }
  return out;
}

double matched_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.empty()) throw ValidationError("label sequences are empty");
  const auto match = best_label_matching(predicted, truth);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    const auto it = match.find(predicted[t]);
    if (it != match.end() && it->second == truth[t]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace sleepstate
