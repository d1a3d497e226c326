#include "sleepstate/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "sleepstate/error.hpp"
#include "sleepstate/random.hpp"

namespace sleepstate {

namespace {

struct Moments {
  std::vector<double> a;  // sum n f
  std::vector<double> b;  // sum n / f
};

Moments member_moments(const std::vector<std::vector<double>>& members, std::span<const double> weights) {
  if (members.empty()) throw ValidationError("centroid of an empty member list");
  if (weights.size() != members.size()) throw ValidationError("one weight per member is required");
  const std::size_t bands = members.front().size();
  Moments m{std::vector<double>(bands, 0.0), std::vector<double>(bands, 0.0)};
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].size() != bands) throw ValidationError("member spectra differ in length");
    for (std::size_t j = 0; j < bands; ++j) {
      m.a[j] += weights[i] * members[i][j];
      m.b[j] += weights[i] / members[i][j];
    }
  }
  return m;
}

std::size_t nearest(std::span<const double> f, const std::vector<std::vector<double>>& centroids, double& dist) {
  std::size_t best = 0;
  dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = symmetric_kl(f, centroids[c]);
    if (d < dist) {
      dist = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::vector<double>> seed_centroids(const std::vector<std::vector<double>>& spectra,
                                                std::span<const double> weights, std::size_t clusters, Rng& rng) {
  const std::size_t n = spectra.size();
  std::vector<std::vector<double>> centroids;
  std::vector<bool> chosen(n, false);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<double> w(weights.begin(), weights.end());
  for (std::size_t c = 0; c < clusters; ++c) {
    std::vector<double> p(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      p[i] = c == 0 ? w[i] : w[i] * dist[i];
      total += p[i];
    }
    if (!(total > 0.0)) {
      for (std::size_t i = 0; i < n; ++i) p[i] = chosen[i] ? 0.0 : 1.0;
    }
    const std::size_t pick = sample_categorical(rng, p);
    chosen[pick] = true;
    centroids.push_back(spectra[pick]);
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], symmetric_kl(spectra[i], spectra[pick]));
  }
  return centroids;
}

ClusterModel run_kmeans(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                        std::size_t clusters, std::size_t max_iterations, Rng& rng) {
  const std::size_t n = spectra.size();
  ClusterModel model;
  model.centroids = seed_centroids(spectra, weights, clusters, rng);
  model.assignment.assign(n, 0);
  std::vector<double> dist(n);
  bool first = true;
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = nearest(spectra[i], model.centroids, dist[i]);
      if (first || a != model.assignment[i]) changed = true;
      model.assignment[i] = a;
    }
    first = false;

    std::vector<std::vector<std::size_t>> members(clusters);
    for (std::size_t i = 0; i < n; ++i) members[model.assignment[i]].push_back(i);
    for (std::size_t c = 0; c < clusters; ++c) {
      if (!members[c].empty()) continue;
      // Move the state farthest from its centroid (in a multi-member cluster)
      // into the empty cluster.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[model.assignment[i]].size() > 1 && weights[i] * dist[i] > far_d) {
          far_d = weights[i] * dist[i];
          far = i;
        }
      }
      if (far == n) throw InvariantViolation("cannot reseed an empty cluster");
      auto& old = members[model.assignment[far]];
      old.erase(std::find(old.begin(), old.end(), far));
      members[c].push_back(far);
      model.assignment[far] = c;
      dist[far] = 0.0;
      changed = true;
    }

    for (std::size_t c = 0; c < clusters; ++c) {
      std::vector<std::vector<double>> group;
      std::vector<double> gw;
      for (std::size_t i : members[c]) {
        group.push_back(spectra[i]);
        gw.push_back(weights[i]);
      }
      model.centroids[c] = simplex_centroid(group, gw);
    }
    const double d = weighted_distortion(spectra, weights, model.centroids, model.assignment);
    if (!model.distortion_trace.empty()) {
      const double prev = model.distortion_trace.back();
      if (d > prev + 1e-9 * std::max(1.0, std::abs(prev))) {
        throw InvariantViolation("k-means distortion increased between iterations");
      }
    }
    model.distortion_trace.push_back(d);
    model.iterations = iter + 1;
    if (!changed) break;
  }
  model.distortion = model.distortion_trace.back();
  return model;
}

}  // namespace

void KMeansConfig::validate() const {
  if (clusters < 1) throw ValidationError("cluster count must be at least 1");
  if (restarts < 1) throw ValidationError("restart count must be at least 1");
  if (max_iterations < 1) throw ValidationError("iteration limit must be at least 1");
}

double map_spectrum(const InverseGamma& posterior) {
  if (!(posterior.shape > 0.0) || !(posterior.rate > 0.0)) {
    throw ValidationError("inverse gamma parameters must be positive");
  }
  return posterior.mode();
}

std::vector<double> normalize_spectrum(std::span<const double> f) {
  double sum = 0.0;
  for (double v : f) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("spectrum entries must be positive");
    sum += v;
  }
  std::vector<double> out(f.begin(), f.end());
  for (double& v : out) v /= sum;
  return out;
}

double symmetric_kl(std::span<const double> f1, std::span<const double> f2) {
  if (f1.size() != f2.size()) throw ValidationError("spectra differ in length");
  double acc = 0.0;
  for (std::size_t j = 0; j < f1.size(); ++j) {
    if (!(f1[j] > 0.0) || !(f2[j] > 0.0)) throw ValidationError("spectra must be strictly positive");
    acc += f1[j] / f2[j] + f2[j] / f1[j] - 2.0;
  }
  return acc;
}

std::vector<double> unnormalized_centroid(const std::vector<std::vector<double>>& members,
                                          std::span<const double> weights) {
  const Moments m = member_moments(members, weights);
  std::vector<double> c(m.a.size());
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = std::sqrt(m.a[j] / m.b[j]);
  return c;
}

std::vector<double> weighted_centroid(const std::vector<std::vector<double>>& members,
                                      std::span<const double> weights) {
  return normalize_spectrum(unnormalized_centroid(members, weights));
}

std::vector<double> simplex_centroid(const std::vector<std::vector<double>>& members,
                                     std::span<const double> weights) {
  const Moments m = member_moments(members, weights);
  const std::size_t bands = m.a.size();
  auto total = [&](double lambda) {
    double s = 0.0;
    for (std::size_t j = 0; j < bands; ++j) s += std::sqrt(m.a[j] / (m.b[j] + lambda));
    return s;
  };
  // sum_j c_j(lambda) decreases from +inf at lambda -> -min B to 0.
  const double floor = -*std::min_element(m.b.begin(), m.b.end());
  double lo = floor;
  double hi = 1.0;
  while (total(hi) > 1.0) hi = 2.0 * hi + 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (total(mid) > 1.0 ? lo : hi) = mid;
  }
  std::vector<double> c(bands);
  const double lambda = 0.5 * (lo + hi);
  for (std::size_t j = 0; j < bands; ++j) c[j] = std::sqrt(m.a[j] / (m.b[j] + lambda));
  return normalize_spectrum(c);
}

double weighted_distortion(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                           const std::vector<std::vector<double>>& centroids, std::span<const std::size_t> assignment) {
  double d = 0.0;
  for (std::size_t i = 0; i < spectra.size(); ++i) d += weights[i] * symmetric_kl(spectra[i], centroids[assignment[i]]);
  return d;
}

ClusterModel weighted_kmeans(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                             const KMeansConfig& config) {
  config.validate();
  if (config.clusters > spectra.size()) {
    throw ValidationError("cluster count " + std::to_string(config.clusters) + " exceeds the " +
                          std::to_string(spectra.size()) + " available states");
  }
  if (weights.size() != spectra.size()) throw ValidationError("one weight per state is required");
  for (double w : weights) {
    if (!(w > 0.0)) throw ValidationError("state weights must be positive");
  }
  for (const auto& f : spectra) {
    double s = 0.0;
    for (double v : f) s += v;
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("k-means inputs must be normalized spectra");
  }

  std::vector<ClusterModel> runs(config.restarts);
  const auto restarts = static_cast<std::ptrdiff_t>(config.restarts);
  std::vector<std::string> failures(config.restarts);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < restarts; ++r) {
    try {
      std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                        static_cast<std::uint32_t>(r)};
      Rng rng(seq);
      runs[static_cast<std::size_t>(r)] =
          run_kmeans(spectra, weights, config.clusters, config.max_iterations, rng);
      runs[static_cast<std::size_t>(r)].restart = static_cast<std::size_t>(r);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(r)] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw InvariantViolation(f);
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].distortion < runs[best].distortion) best = r;
  }
  return runs[best];
}

std::vector<double> distortion_sweep(const std::vector<std::vector<double>>& spectra, std::span<const double> weights,
                                     std::size_t max_clusters, const KMeansConfig& config) {
  std::vector<double> out;
  KMeansConfig c = config;
  for (std::size_t k = 1; k <= std::min(max_clusters, spectra.size()); ++k) {
    c.clusters = k;
    out.push_back(weighted_kmeans(spectra, weights, c).distortion);
  }
  return out;
}

std::size_t representative_occurrences(std::vector<std::size_t> counts) {
  if (counts.empty()) throw ValidationError("at least one posterior sample is required");
  std::sort(counts.begin(), counts.end());
  return counts[(counts.size() - 1) / 2];
}

std::vector<std::size_t> state_counts(const std::vector<PosteriorSample>& samples, std::size_t state) {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    std::size_t n = 0;
    for (const auto& st : s.states) {
      if (st.label == state) n = st.occupancy;
    }
    out.push_back(n);
  }
  return out;
}

std::vector<SubjectState> subject_states(const std::string& subject, const std::vector<PosteriorSample>& samples,
                                         double psd_shape) {
  if (samples.empty()) throw ValidationError("subject " + subject + " has no posterior samples");
  struct Pool {
    std::vector<double> shape_excess, rate_excess, prior_rate;
    std::size_t draws = 0;
  };
  std::map<std::size_t, Pool> pools;
  for (const auto& s : samples) {
    for (const auto& st : s.states) {
      Pool& p = pools[st.label];
      const std::size_t bands = st.posterior.size();
      if (p.draws == 0) {
        p.shape_excess.assign(bands, 0.0);
        p.rate_excess.assign(bands, 0.0);
        p.prior_rate.assign(bands, 0.0);
      }
      for (std::size_t b = 0; b < bands; ++b) {
        p.shape_excess[b] += st.posterior[b].shape - psd_shape;
        p.rate_excess[b] += st.posterior[b].rate - st.rate[b];
        p.prior_rate[b] += st.rate[b];
      }
      ++p.draws;
    }
  }
  std::vector<SubjectState> out;
  for (const auto& [label, p] : pools) {
    SubjectState s;
    s.subject = subject;
    s.state = label;
    s.occurrences = representative_occurrences(state_counts(samples, label));
    if (s.occurrences == 0) continue;
    for (std::size_t b = 0; b < p.shape_excess.size(); ++b) {
      const InverseGamma pooled{psd_shape + p.shape_excess[b],
                                p.prior_rate[b] / static_cast<double>(p.draws) + p.rate_excess[b]};
      s.spectrum.push_back(map_spectrum(pooled));
    }
    s.normalized = normalize_spectrum(s.spectrum);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> modal_trajectory(const std::vector<PosteriorSample>& samples) {
  if (samples.empty()) throw ValidationError("at least one posterior sample is required");
  const std::size_t windows = samples.front().trajectory.size();
  std::vector<std::size_t> out(windows);
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t t = 0; t < windows; ++t) {
    counts.clear();
    for (const auto& s : samples) ++counts[s.trajectory.at(t)];
    std::size_t best = 0, best_n = 0;
    for (const auto& [label, n] : counts) {
      if (n > best_n) {
        best = label;
        best_n = n;
      }
    }
    out[t] = best;
  }
  return out;
}

}  // namespace sleepstate
