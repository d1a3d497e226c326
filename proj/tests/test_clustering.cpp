#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sleepstate/clustering.hpp"
#include "sleepstate/error.hpp"

using namespace sleepstate;

namespace {

// Bisection on log c for the root of d/dc sum_i n_i (f_i / c + c / f_i - 2),
// which is increasing in c.
double numeric_band_minimizer(const std::vector<double>& f, const std::vector<double>& n) {
  auto slope = [&](double logc) {
    const double c = std::exp(logc);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += n[i] * (1.0 / f[i] - f[i] / (c * c));
    return s;
  };
  double lo = std::log(*std::min_element(f.begin(), f.end())) - 1.0;
  double hi = std::log(*std::max_element(f.begin(), f.end())) + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (slope(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

double member_distortion(const std::vector<std::vector<double>>& members, const std::vector<double>& w,
                         const std::vector<double>& c) {
  double d = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) d += w[i] * symmetric_kl(members[i], c);
  return d;
}

std::vector<std::vector<double>> random_normalized(std::size_t n, std::size_t bands, Rng& rng) {
  std::vector<std::vector<double>> out(n, std::vector<double>(bands));
  for (auto& f : out) {
    for (auto& v : f) v = sample_gamma(rng, 2.0, 1.0) + 1e-3;
    f = normalize_spectrum(f);
  }
  return out;
}

// Low-frequency-dominant family 0, high-frequency-dominant family 1.
std::vector<std::vector<double>> two_families(std::size_t per_family, Rng& rng, std::vector<int>& family) {
  std::vector<std::vector<double>> out;
  for (int fam = 0; fam < 2; ++fam) {
    for (std::size_t i = 0; i < per_family; ++i) {
      std::vector<double> f(6);
      for (std::size_t b = 0; b < 6; ++b) {
        const double slope = fam == 0 ? -0.8 : 0.8;
        f[b] = std::exp(slope * b + sample_normal(rng, 0.0, 0.2));
      }
      out.push_back(normalize_spectrum(f));
      family.push_back(fam);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("MAP spectrum") {
  CHECK(map_spectrum({1.0, 2.0}) == 1.0);
  CHECK(map_spectrum({6.0, 14.0}) == 2.0);
  const InverseGamma ig{3.5, 7.25};
  double best = 0.0, best_x = 0.0;
  const double step = 1e-5;
  for (double x = step; x < 10.0; x += step) {
    const double d = ig.log_density(x);
    if (best_x == 0.0 || d > best) {
      best = d;
      best_x = x;
    }
  }
  CHECK(std::abs(map_spectrum(ig) - best_x) <= step);
  CHECK_THROWS_AS(map_spectrum({0.0, 1.0}), ValidationError);
}

TEST_CASE("normalization") {
  CHECK(normalize_spectrum(std::vector<double>{2.0, 2.0}) == std::vector<double>{0.5, 0.5});
  const std::vector<double> f{0.1, 0.2, 0.7};
  const auto once = normalize_spectrum(f);
  const auto twice = normalize_spectrum(once);
  for (std::size_t i = 0; i < 3; ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-15));
  std::vector<double> scaled{3.7, 7.4, 25.9};
  const auto s = normalize_spectrum(scaled);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(once[i]).epsilon(1e-14));
  CHECK(std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0) < 1e-12);
  CHECK_THROWS_AS(normalize_spectrum(std::vector<double>{1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(normalize_spectrum(std::vector<double>{1.0, -2.0}), ValidationError);
}

TEST_CASE("symmetric divergence") {
  const std::vector<double> two{2.0}, one{1.0};
  CHECK(symmetric_kl(two, one) == doctest::Approx(0.5));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = sample_gamma(rng, 2.0, 1.0);
    for (auto& v : b) v = sample_gamma(rng, 2.0, 1.0);
    CHECK(symmetric_kl(a, a) == 0.0);
    CHECK(symmetric_kl(a, b) == symmetric_kl(b, a));
    CHECK(symmetric_kl(a, b) >= 0.0);
  }
  CHECK_THROWS_AS(symmetric_kl(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(symmetric_kl(std::vector<double>{1.0}, std::vector<double>{1.0, 1.0}), ValidationError);
}

TEST_CASE("centroid examples") {
  const std::vector<std::vector<double>> one_band{{1.0}, {4.0}};
  const std::vector<double> equal{1.0, 1.0};
  CHECK(unnormalized_centroid(one_band, equal)[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(numeric_band_minimizer({1.0, 4.0}, equal) == doctest::Approx(2.0).epsilon(1e-10));

  const std::vector<std::vector<double>> single{{0.2, 0.3, 0.5}};
  const std::vector<double> w1{3.0};
  const auto c = weighted_centroid(single, w1);
  for (std::size_t j = 0; j < 3; ++j) CHECK(c[j] == doctest::Approx(single[0][j]).epsilon(1e-14));
  const auto sc = simplex_centroid(single, w1);
  for (std::size_t j = 0; j < 3; ++j) CHECK(sc[j] == doctest::Approx(single[0][j]).epsilon(1e-9));
  CHECK_THROWS_AS(weighted_centroid({}, std::vector<double>{}), ValidationError);
}

TEST_CASE("closed-form centroid matches numeric minimization") {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rep % 9;
    const auto members = random_normalized(n, 6, rng);
    std::vector<double> w(n);
    for (auto& v : w) v = 1.0 + std::floor(sample_gamma(rng, 2.0, 0.05));
    const auto closed = unnormalized_centroid(members, w);
    for (std::size_t j = 0; j < 6; ++j) {
      std::vector<double> col;
      for (const auto& m : members) col.push_back(m[j]);
      CHECK(std::abs(closed[j] - numeric_band_minimizer(col, w)) <= 1e-8 * closed[j]);
    }
    const double base = member_distortion(members, w, closed);
    for (std::size_t j = 0; j < 6; ++j) {
      for (double f : {0.99, 1.01}) {
        auto p = closed;
        p[j] *= f;
        CHECK(member_distortion(members, w, p) > base);
      }
    }
  }
}

TEST_CASE("simplex centroid is the constrained optimum") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rep % 7;
    const auto members = random_normalized(n, 6, rng);
    std::vector<double> w(n);
    for (auto& v : w) v = 1.0 + rep % 5;
    const auto c = simplex_centroid(members, w);
    CHECK(std::abs(std::accumulate(c.begin(), c.end(), 0.0) - 1.0) < 1e-12);
    // Stationarity: the gradient is equal across bands.
    std::vector<double> grad(6, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 6; ++j) grad[j] += w[i] * (1.0 / members[i][j] - members[i][j] / (c[j] * c[j]));
    }
    const double spread = *std::max_element(grad.begin(), grad.end()) - *std::min_element(grad.begin(), grad.end());
    double scale = 0.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    CHECK(spread <= 1e-6 * std::max(1.0, scale));
    const double base = member_distortion(members, w, c);
    for (std::size_t a = 0; a < 6; ++a) {
      for (std::size_t b = 0; b < 6; ++b) {
        if (a == b) continue;
        auto p = c;
        const double eps = 1e-3 * std::min(c[a], c[b]);
        p[a] += eps;
        p[b] -= eps;
        CHECK(member_distortion(members, w, p) >= base);
      }
    }
    CHECK(base <= member_distortion(members, w, weighted_centroid(members, w)) + 1e-12);
  }
}

TEST_CASE("as many clusters as states gives zero distortion") {
  Rng rng(4);
  const auto spectra = random_normalized(7, 6, rng);
  const std::vector<double> w(7, 2.0);
  KMeansConfig cfg;
  cfg.clusters = 7;
  cfg.restarts = 5;
  const auto m = weighted_kmeans(spectra, w, cfg);
  CHECK(m.distortion == doctest::Approx(0.0).epsilon(1e-9));
  std::vector<std::size_t> sorted = m.assignment;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("two separated families are recovered") {
  Rng rng(5);
  std::vector<int> family;
  const auto spectra = two_families(20, rng, family);
  std::vector<double> w(spectra.size());
  for (auto& v : w) v = 1.0 + std::floor(30.0 * uniform_open01(rng));
  KMeansConfig cfg;
  cfg.clusters = 2;
  const auto m = weighted_kmeans(spectra, w, cfg);
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    CHECK((m.assignment[i] == m.assignment[0]) == (family[i] == family[0]));
  }
  for (const auto& c : m.centroids) {
    for (double v : c) CHECK(v > 0.0);
  }
}

TEST_CASE("distortion never increases and results are reproducible") {
  Rng rng(6);
  const auto spectra = random_normalized(103, 6, rng);
  std::vector<double> w(103);
  for (auto& v : w) v = 1.0 + std::floor(200.0 * uniform_open01(rng));
  KMeansConfig cfg;
  cfg.clusters = 9;
  const auto m = weighted_kmeans(spectra, w, cfg);
  CHECK(m.centroids.size() == 9);
  CHECK(m.assignment.size() == 103);
  for (std::size_t a : m.assignment) CHECK(a < 9);
  REQUIRE_FALSE(m.distortion_trace.empty());
  for (std::size_t i = 1; i < m.distortion_trace.size(); ++i) {
    CHECK(m.distortion_trace[i] <= m.distortion_trace[i - 1]);
  }
  CHECK(m.distortion == doctest::Approx(weighted_distortion(spectra, w, m.centroids, m.assignment)));
  const auto again = weighted_kmeans(spectra, w, cfg);
  CHECK(again.assignment == m.assignment);
  CHECK(again.distortion == m.distortion);
  for (const auto& c : m.centroids) CHECK(std::abs(std::accumulate(c.begin(), c.end(), 0.0) - 1.0) < 1e-12);

  const auto sweep = distortion_sweep(spectra, w, 5, cfg);
  REQUIRE(sweep.size() == 5);
  for (std::size_t i = 1; i < sweep.size(); ++i) CHECK(sweep[i] <= sweep[i - 1] + 1e-9);
}

TEST_CASE("assignments ignore the per-band constant") {
  Rng rng(7);
  const auto spectra = random_normalized(60, 6, rng);
  const std::vector<double> w(60, 1.0);
  KMeansConfig cfg;
  cfg.clusters = 4;
  const auto m = weighted_kmeans(spectra, w, cfg);
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    std::size_t best2 = 0, best1 = 0;
    double d2 = INFINITY, d1 = INFINITY;
    for (std::size_t c = 0; c < m.centroids.size(); ++c) {
      const double j2 = symmetric_kl(spectra[i], m.centroids[c]);
      const double j1 = j2 + static_cast<double>(spectra[i].size());
      if (j2 < d2) {
        d2 = j2;
        best2 = c;
      }
      if (j1 < d1) {
        d1 = j1;
        best1 = c;
      }
    }
    CHECK(best1 == best2);
    CHECK(m.assignment[i] == best2);
  }
}

TEST_CASE("rescaling raw spectra leaves clusters unchanged") {
  Rng rng(8);
  std::vector<int> family;
  const auto spectra = two_families(15, rng, family);
  std::vector<std::vector<double>> rescaled;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    auto f = spectra[i];
    const double scale = std::exp(sample_normal(rng, 0.0, 3.0));
    for (auto& v : f) v *= scale;
    rescaled.push_back(normalize_spectrum(f));
  }
  const std::vector<double> w(spectra.size(), 1.0);
  KMeansConfig cfg;
  cfg.clusters = 3;
  const auto a = weighted_kmeans(spectra, w, cfg);
  const auto b = weighted_kmeans(rescaled, w, cfg);
  CHECK(a.assignment == b.assignment);
}

TEST_CASE("k-means input validation") {
  Rng rng(9);
  const auto spectra = random_normalized(3, 6, rng);
  KMeansConfig cfg;
  cfg.clusters = 4;
  CHECK_THROWS_AS(weighted_kmeans(spectra, std::vector<double>(3, 1.0), cfg), ValidationError);
  cfg.clusters = 2;
  CHECK_THROWS_AS(weighted_kmeans(spectra, std::vector<double>{1.0, 0.0, 1.0}, cfg), ValidationError);
  CHECK_THROWS_AS(weighted_kmeans(spectra, std::vector<double>(2, 1.0), cfg), ValidationError);
  auto raw = spectra;
  raw[0][0] += 1.0;
  CHECK_THROWS_AS(weighted_kmeans(raw, std::vector<double>(3, 1.0), cfg), ValidationError);
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.clusters = 1;
  cfg.restarts = 2;
  const auto one = weighted_kmeans(spectra, std::vector<double>(3, 1.0), cfg);
  CHECK(one.centroids.size() == 1);
}

TEST_CASE("representative occurrences") {
  CHECK(representative_occurrences({10, 10, 10}) == 10);
  CHECK(representative_occurrences({0, 5, 100}) == 5);
  CHECK(representative_occurrences({4, 8}) == 4);
  CHECK(representative_occurrences({8, 4}) == 4);
  CHECK_THROWS_AS(representative_occurrences({}), ValidationError);
}

TEST_CASE("subject states pool posterior statistics") {
  auto make_state = [](std::size_t label, std::size_t occ, double shape, double rate, double prior_rate) {
    StateSummary s;
    s.label = label;
    s.occupancy = occ;
    s.posterior = {{shape, rate}, {shape, 2.0 * rate}};
    s.psd = {1.0, 1.0};
    s.rate = {prior_rate, prior_rate};
    return s;
  };
  std::vector<PosteriorSample> samples(3);
  for (auto& s : samples) s.trajectory = {0, 0, 2};
  samples[0].states = {make_state(0, 2, 11.0, 21.0, 1.0), make_state(2, 1, 6.0, 8.0, 2.0)};
  samples[1].states = {make_state(0, 2, 11.0, 23.0, 3.0), make_state(2, 1, 6.0, 9.0, 1.0)};
  samples[2].states = {make_state(0, 3, 16.0, 30.0, 2.0)};
  samples[2].trajectory = {0, 0, 0};

  const auto states = subject_states("s1", samples, 1.0);
  REQUIRE(states.size() == 2);
  CHECK(states[0].state == 0);
  CHECK(states[0].occurrences == 2);
  // shape 1 + 10 + 10 + 15, rate mean(1, 3, 2) + 20 + 20 + 28
  CHECK(states[0].spectrum[0] == doctest::Approx((2.0 + 68.0) / 37.0));
  CHECK(states[1].occurrences == 1);
  CHECK(std::abs(states[1].normalized[0] + states[1].normalized[1] - 1.0) < 1e-12);

  std::vector<PosteriorSample> rare(3, samples[2]);
  rare[0] = samples[0];
  const auto dropped = subject_states("s2", rare, 1.0);
  REQUIRE(dropped.size() == 1);
  CHECK(dropped[0].state == 0);

  CHECK(state_counts(samples, 2) == std::vector<std::size_t>{1, 1, 0});
  CHECK_THROWS_AS(subject_states("x", {}, 1.0), ValidationError);
}

TEST_CASE("modal trajectory") {
  std::vector<PosteriorSample> samples(4);
  samples[0].trajectory = {0, 1, 2};
  samples[1].trajectory = {0, 1, 3};
  samples[2].trajectory = {1, 2, 3};
  samples[3].trajectory = {1, 2, 2};
  CHECK(modal_trajectory(samples) == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(modal_trajectory({}), ValidationError);
}
