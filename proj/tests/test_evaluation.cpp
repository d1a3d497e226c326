#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sleepstate/error.hpp"
#include "sleepstate/evaluation.hpp"
#include "sleepstate/random.hpp"

using namespace sleepstate;

namespace {

StateSummary summary(std::size_t label, std::vector<double> map_values) {
  StateSummary s;
  s.label = label;
  s.occupancy = 1;
  for (double v : map_values) s.posterior.push_back({1.0, 2.0 * v});  // mode = v
  s.psd = map_values;
  s.rate = map_values;
  return s;
}

}  // namespace

TEST_CASE("spearman rho") {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  CHECK(spearman_rho(a, a) == doctest::Approx(1.0));
  const std::vector<double> rev{4, 3, 2, 1};
  CHECK(spearman_rho(a, rev) == doctest::Approx(-1.0));
  CHECK(spearman_rho(a, b) == doctest::Approx(0.8));
  CHECK(spearman_rho(b, a) == doctest::Approx(0.8));
  const std::vector<double> tied{1, 1, 2, 2}, c{1, 2, 3, 4};
  // mid-ranks (1.5, 1.5, 3.5, 3.5) against (1, 2, 3, 4)
  CHECK(spearman_rho(tied, c) == doctest::Approx(4.0 / std::sqrt(20.0)));
  const std::vector<double> flat{2, 2, 2, 2};
  CHECK_THROWS_WITH_AS(spearman_rho(flat, a), "rho undefined for a constant sequence", ValidationError);
  CHECK_THROWS_AS(spearman_rho(std::vector<double>{1.0}, std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(spearman_rho(a, std::vector<double>{1.0, 2.0}), ValidationError);

  Rng rng(1);
  std::vector<double> x(50), y(50);
  for (int i = 0; i < 50; ++i) {
    x[i] = std::floor(5.0 * uniform_open01(rng));
    y[i] = std::floor(5.0 * uniform_open01(rng));
  }
  const double r = spearman_rho(x, y);
  CHECK(r == doctest::Approx(spearman_rho(y, x)));
  CHECK(r >= -1.0);
  CHECK(r <= 1.0);
  // Strictly monotone transforms leave rho unchanged.
  std::vector<double> ex(50);
  std::transform(x.begin(), x.end(), ex.begin(), [](double v) { return std::exp(v); });
  CHECK(spearman_rho(ex, y) == doctest::Approx(r));
}

TEST_CASE("alpha reordering") {
  const std::vector<std::size_t> alpha{1};
  std::map<std::size_t, std::vector<double>> two{{3, {0.1, 0.9}}, {7, {0.9, 0.1}}};
  auto rank = reorder_by_alpha(two, alpha);
  CHECK(rank.at(3) == 1);
  CHECK(rank.at(7) == 2);

  std::map<std::size_t, std::vector<double>> tie{{0, {1.0, 1.0}}, {1, {3.0, 3.0}}, {2, {2.0, 2.0}}, {4, {2.0, 2.0}}};
  rank = reorder_by_alpha(tie, alpha);
  CHECK(rank.at(1) == 1);
  CHECK(rank.at(2) == 2);
  CHECK(rank.at(4) == 3);
  CHECK(rank.at(0) == 4);

  // Bijection onto 1..n.
  Rng rng(2);
  std::map<std::size_t, std::vector<double>> many;
  for (std::size_t s = 0; s < 12; ++s) many[s * 3] = {uniform_open01(rng), uniform_open01(rng), uniform_open01(rng)};
  rank = reorder_by_alpha(many, std::vector<std::size_t>{1, 2});
  std::vector<std::size_t> ranks;
  for (const auto& [k, v] : rank) ranks.push_back(v);
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t i = 0; i < ranks.size(); ++i) CHECK(ranks[i] == i + 1);

  CHECK_THROWS_AS(reorder_by_alpha(two, std::vector<std::size_t>{}), ValidationError);
  CHECK_THROWS_AS(reorder_by_alpha(two, std::vector<std::size_t>{5}), ValidationError);
}

TEST_CASE("alpha band lookup") {
  const std::vector<Band> bands{{0.5, 2.5}, {2.5, 4.5}, {4.5, 6.5}, {6.5, 8.5}, {10.5, 12.5}, {12.5, 35.0}};
  CHECK(bands_in_range(bands, 10.5, 12.5) == std::vector<std::size_t>{4});
  CHECK(bands_in_range(bands, 8.0, 12.0) == std::vector<std::size_t>{3, 4});
  CHECK_THROWS_AS(bands_in_range(bands, 8.6, 10.4), ValidationError);
}

TEST_CASE("hypnogram expansion") {
  Hypnogram h{{5, 4, 3}, 30.0};
  CHECK(expand_hypnogram(h, 15.0, 6) == std::vector<int>{5, 5, 4, 4, 3, 3});
  CHECK(expand_hypnogram(h, 15.0, 5) == std::vector<int>{5, 5, 4, 4, 3});
  CHECK(expand_hypnogram(h, 30.0, 3) == std::vector<int>{5, 4, 3});
  CHECK_THROWS_AS(expand_hypnogram(h, 15.0, 7), ValidationError);
  CHECK_THROWS_AS(expand_hypnogram(h, 20.0, 3), ValidationError);
  h.labels[1] = 6;
  CHECK_THROWS_AS(expand_hypnogram(h, 15.0, 6), ValidationError);
  h.labels[1] = 0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
}

TEST_CASE("rho distribution") {
  std::vector<PosteriorSample> samples(3);
  for (auto& s : samples) {
    s.trajectory = {0, 0, 1, 1, 2, 2};
    s.states = {summary(0, {1.0, 5.0}), summary(1, {1.0, 2.0}), summary(2, {5.0, 0.1})};
  }
  const std::vector<int> stages{5, 5, 4, 4, 1, 1};
  const auto d = rho_distribution(samples, stages, std::vector<std::size_t>{1});
  REQUIRE(d.rhos.size() == 3);
  CHECK(d.median == doctest::Approx(1.0));
  CHECK(std::all_of(d.rhos.begin(), d.rhos.end(), [&](double r) { return r == d.rhos[0]; }));

  samples[1].trajectory = {0, 1, 1, 0, 2, 2};
  const auto e = rho_distribution(samples, stages, std::vector<std::size_t>{1});
  CHECK(e.rhos[1] < 1.0);
  CHECK(e.median == doctest::Approx(1.0));
  CHECK_THROWS_AS(rho_distribution({}, stages, std::vector<std::size_t>{1}), ValidationError);

  std::map<std::size_t, std::size_t> ranks{{0, 1}, {1, 2}};
  const std::vector<std::size_t> traj{0, 1, 0, 1};
  const std::vector<int> st{5, 4, 5, 4};
  CHECK(rho_for_trajectory(traj, ranks, st) == doctest::Approx(1.0));
  const std::vector<std::size_t> bad{0, 9, 0, 1};
  CHECK_THROWS_AS(rho_for_trajectory(bad, ranks, st), InvariantViolation);
}

TEST_CASE("stage by cluster heatmap") {
  AlignedTrajectories a;
  for (int i = 0; i < 10; ++i) {
    a.stage.push_back(4);
    a.cluster.push_back(i < 9 ? 8 : 7);
  }
  for (int i = 0; i < 4; ++i) {
    a.stage.push_back(5);
    a.cluster.push_back(7);
  }
  const std::vector<std::size_t> order{7, 8};
  const std::vector<int> stages{5, 4, 3, 2, 1};
  const auto h = stage_cluster_heatmap(a, order, stages);
  REQUIRE(h.proportion.size() == 2);
  CHECK(h.proportion[1][1] == doctest::Approx(0.9));
  CHECK(h.proportion[0][1] == doctest::Approx(0.1));
  CHECK(h.proportion[0][0] == doctest::Approx(1.0));
  CHECK(h.empty_stages == std::vector<int>{3, 2, 1});
  for (std::size_t c = 0; c < 5; ++c) {
    double s = 0.0;
    for (const auto& row : h.proportion) s += row[c];
    const bool empty = std::find(h.empty_stages.begin(), h.empty_stages.end(), stages[c]) != h.empty_stages.end();
    CHECK(std::abs(s - (empty ? 0.0 : 1.0)) <= 1e-12);
  }

  auto shuffled = a;
  Rng rng(3);
  for (std::size_t i = shuffled.stage.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_open01(rng) * (i + 1));
    std::swap(shuffled.stage[i], shuffled.stage[j]);
    std::swap(shuffled.cluster[i], shuffled.cluster[j]);
  }
  CHECK(stage_cluster_heatmap(shuffled, order, stages).proportion == h.proportion);

  AlignedTrajectories single{{5, 4, 1}, {3, 3, 3}, 15.0};
  const auto one = stage_cluster_heatmap(single, std::vector<std::size_t>{3}, std::vector<int>{5, 4, 1});
  CHECK(one.proportion == std::vector<std::vector<double>>{{1.0, 1.0, 1.0}});

  CHECK_THROWS_AS(stage_cluster_heatmap(a, std::vector<std::size_t>{8}, stages), ValidationError);
  CHECK_THROWS_AS(stage_cluster_heatmap(AlignedTrajectories{}, order, stages), ValidationError);
}

TEST_CASE("cluster order by alpha") {
  const std::vector<std::vector<double>> centroids{{0.5, 0.3, 0.2}, {0.1, 0.1, 0.8}, {0.3, 0.6, 0.1}};
  CHECK(order_clusters_by_alpha(centroids, std::vector<std::size_t>{2}) == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("transition rate per minute") {
  AlignedTrajectories a{{2, 2, 2, 2}, {1, 3, 1, 3}, 15.0};
  CHECK(transition_rate_per_minute(a, 2) == doctest::Approx(3.0));
  AlignedTrajectories relabeled{{2, 2, 2, 2}, {9, 4, 9, 4}, 15.0};
  CHECK(transition_rate_per_minute(relabeled, 2) == doctest::Approx(3.0));
  AlignedTrajectories constant{{2, 2, 2, 2}, {1, 1, 1, 1}, 15.0};
  CHECK(transition_rate_per_minute(constant, 2) == 0.0);
  // A change across a window scored as another stage does not count.
  AlignedTrajectories split{{2, 2, 3, 2}, {1, 1, 5, 6}, 15.0};
  CHECK(transition_rate_per_minute(split, 2) == doctest::Approx(0.0));
  CHECK_THROWS_AS(transition_rate_per_minute(a, 5), ValidationError);
}

TEST_CASE("label matching") {
  const std::vector<std::size_t> truth{0, 0, 1, 1, 2, 2, 2};
  const std::vector<std::size_t> pred{5, 5, 3, 3, 9, 9, 3};
  CHECK(matched_accuracy(pred, truth) == doctest::Approx(6.0 / 7.0));
  const auto m = best_label_matching(pred, truth);
  CHECK(m.at(5) == 0);
  CHECK(m.at(3) == 1);
  CHECK(m.at(9) == 2);
  // More predicted labels than true ones: extras cannot all be matched.
  const std::vector<std::size_t> split{0, 1, 2, 3, 4, 5, 6};
  CHECK(matched_accuracy(split, truth) == doctest::Approx(3.0 / 7.0));
  CHECK(matched_accuracy(truth, truth) == 1.0);
  CHECK_THROWS_AS(matched_accuracy(pred, std::vector<std::size_t>{0}), ValidationError);
}
