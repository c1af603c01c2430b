#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "svyconform/cluster.hpp"
#include "svyconform/error.hpp"

using namespace svyconform;

namespace {

ClusterCalibration make_cal(const std::vector<std::vector<double>>& groups, double alpha, double center = 0.0) {
  std::vector<int> codes;
  std::vector<double> scores;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (double s : groups[g]) {
      codes.push_back(static_cast<int>(g) * 10);
      scores.push_back(s);
    }
  return ClusterCalibration(ScoreModel::constant(center), codes, scores, alpha);
}

const std::vector<double> kNone;

}  // namespace

TEST_CASE("grouping by cluster") {
  const auto cal = make_cal({{1, 2}, {3}, {4, 5, 6}}, 0.2);
  CHECK(cal.k() == 3);
  CHECK(cal.total() == 6);
  CHECK(cal.codes() == std::vector<int>{0, 10, 20});
  CHECK(cal.groups()[2] == std::vector<double>{4, 5, 6});
  CHECK_THROWS_AS(make_cal({}, 0.2), InvalidInput);
  CHECK_THROWS_AS(make_cal({{1}}, 1.5), InvalidInput);
}

TEST_CASE("subsample once keeps one score per cluster") {
  const auto cal = make_cal({{1, 2}, {3, 4}, {5, 6}, {7, 8}}, 0.2);
  Rng rng(1);
  const auto ctx = cluster_subsample_once(cal, rng);
  REQUIRE(ctx.size() == 4);
  CHECK(ctx.exchangeable());
  for (std::size_t j = 0; j < 4; ++j) {
    const double s = ctx.scores()[j];
    CHECK((s == cal.groups()[j][0] || s == cal.groups()[j][1]));
  }

  // Singleton clusters: exactly the exchangeable engine on all scores.
  const std::vector<double> all{0.5, 3, 1, 2.5, 4, 0.1, 2};
  std::vector<std::vector<double>> singles;
  for (double s : all) singles.push_back({s});
  const auto single_cal = make_cal(singles, 0.25);
  const auto sub = cluster_subsample_once(single_cal, rng);
  const CalibrationContext direct(ScoreModel::constant(0), all, {}, true, 0.25);
  CHECK(sub.unweighted_quantile() == direct.unweighted_quantile());
}

TEST_CASE("one repeated subsample equals subsampling once") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 10);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::vector<double>> groups(2 + t % 15);
    for (auto& g : groups) {
      g.resize(1 + gen() % 5);
      for (auto& v : g) v = std::round(u(gen) * 2) / 2;
    }
    const double alpha = 0.05 + 0.05 * (t % 10);
    const auto cal = make_cal(groups, alpha);
    Rng a(static_cast<std::uint64_t>(t)), b(static_cast<std::uint64_t>(t));
    const auto once = cluster_subsample_once(cal, a).unweighted_quantile();
    const auto rep = cluster_repeated_subsample_radius(cal, 1, b);
    CHECK(once == rep);
  }
}

TEST_CASE("repeated subsampling") {
  const auto constant = make_cal({{2, 2}, {2, 2, 2}, {2}, {2}, {2}}, 0.3);
  Rng rng(5);
  CHECK(cluster_repeated_subsample_radius(constant, 25, rng) == Cutoff::finite(2));

  // alpha below 1/(k+1): every radius is infinite.
  const auto few = make_cal({{1}, {2}, {3}}, 0.2);
  CHECK(cluster_repeated_subsample_radius(few, 10, rng).is_infinite());
  CHECK_THROWS_AS(cluster_repeated_subsample_radius(few, 0, rng), InvalidInput);

  // The radius never exceeds the largest calibration score when finite.
  const auto cal = make_cal({{1, 9}, {2, 8}, {3, 7}, {4, 6}, {5, 5}, {0, 10}, {1, 1}, {2, 2}, {3, 3}}, 0.3);
  const auto r = cluster_repeated_subsample_radius(cal, 40, rng);
  REQUIRE_FALSE(r.is_infinite());
  CHECK(r.value() <= 10);
}

TEST_CASE("double conformal") {
  const auto cal = make_cal({{1, 2, 3}, {4, 5, 6}}, 0.8);
  const auto r = cluster_double_conformal(cal);
  CHECK(r.upper == 6);
  CHECK(r.lower == -6);
  CHECK(r.method == "cluster-double");

  // Contains every cluster's own interval at level 1 - alpha/2.
  const auto many = make_cal({{1, 2}, {3, 1}, {0.5, 0.7}, {2, 2}, {1, 4}, {0.2, 0.1}, {3, 3}, {1, 1}, {2, 5}, {1}}, 0.4, 7);
  const auto d = cluster_double_conformal(many);
  CHECK(d.lower < 7);
  CHECK(d.upper > 7);
  const auto vac = cluster_double_conformal(make_cal({{1}, {2}}, 0.2));
  CHECK(vac.vacuous);

  ClusterCalibration supervised(fit_ols(MatrixView{std::vector<double>{0, 1, 2}, 3, 1}, std::vector<double>{0, 1, 3}),
                                std::vector<int>{0, 1}, std::vector<double>{1, 2}, 0.2);
  CHECK_THROWS_AS(cluster_double_conformal(supervised), InvalidInput);
  CHECK_THROWS_AS(cluster_double_conformal(make_cal({{1, 2}}, 0.2)), InvalidInput);
}

TEST_CASE("pooled eCDF") {
  // Equal cluster sizes: identical to the exchangeable engine on all scores.
  const std::vector<std::vector<double>> groups{{1, 5}, {2, 6}, {3, 7}, {4, 8}, {0.5, 9}};
  const auto cal = make_cal(groups, 0.2);
  std::vector<double> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  const CalibrationContext direct(ScoreModel::constant(0), all, {}, true, 0.2);
  CHECK(cluster_pooled_cdf_radius(cal) == direct.unweighted_quantile());

  // Clusters count equally regardless of their size.
  std::vector<double> big(99, 100.0);
  const auto lopsided = make_cal({{1}, big}, 0.6);
  // Mass 1/2 at 1, 1/2 at 100, tail 2/100: the 0.4 quantile is 1.
  CHECK(cluster_pooled_cdf_radius(lopsided) == Cutoff::finite(1));
  CHECK(cluster_pooled_cdf_radius(lopsided, PooledPadding::kPhantomCluster) == Cutoff::finite(100));

  const auto one = make_cal({{1, 2, 3, 4}}, 0.25);
  const CalibrationContext within(ScoreModel::constant(0), {1, 2, 3, 4}, {}, true, 0.25);
  CHECK(cluster_pooled_cdf_radius(one) == within.unweighted_quantile());
}

TEST_CASE("single observed cluster") {
  const auto cal = make_cal({{1, 2, 3, 4}, {7}}, 0.25);
  CHECK(observed_cluster_context(cal, 0).unweighted_quantile() == Cutoff::finite(4));
  CHECK(observed_cluster_context(cal, 10).unweighted_quantile().is_infinite());
  CHECK_THROWS_AS(observed_cluster_context(cal, 3), InvalidInput);

  const auto r = cluster_interval(cal, kNone, Cutoff::finite(4), "cluster-sub1");
  CHECK(r.lower == -4);
  CHECK(r.upper == 4);
  const auto v = cluster_interval(cal, kNone, Cutoff::infinity(), "cluster-sub1");
  CHECK(v.vacuous);
  CHECK_FALSE(v.warnings.empty());
}
