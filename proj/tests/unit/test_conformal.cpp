#include <doctest.h>

#include <cmath>
#include <random>

#include "svyconform/conformal.hpp"
#include "svyconform/error.hpp"

using namespace svyconform;

namespace {

ScoreModel constant_at(double c) { return ScoreModel::constant(c); }

ScoreModel three_class(std::vector<double> probs) {
  struct Fixed final : Predictor {
    std::vector<double> p;
    std::size_t dim() const override { return 0; }
    int n_classes() const override { return static_cast<int>(p.size()); }
    void predict_proba(std::span<const double>, std::span<double> out) const override {
      std::copy(p.begin(), p.end(), out.begin());
    }
  };
  auto f = std::make_shared<Fixed>();
  f->p = std::move(probs);
  return ScoreModel(f, ScoreKind::kOneMinusProb);
}

const std::vector<double> kNone;

}  // namespace

TEST_CASE("exchangeable split interval") {
  CalibrationContext ctx(constant_at(10), {1, 2, 3, 4}, {}, true, 0.25);
  auto r = split_interval_exchangeable(ctx, kNone);
  CHECK(r.lower == 6);
  CHECK(r.upper == 14);
  CHECK(r.level == 0.75);
  CHECK_FALSE(r.vacuous);
  CHECK(r.method == "split-exchangeable");

  CalibrationContext one(constant_at(0), {3}, {}, true, 0.4);
  auto v = split_interval_exchangeable(one, kNone);
  CHECK(v.vacuous);
  CHECK(std::isinf(v.lower));
  CHECK(v.contains(1e300));
  CHECK_FALSE(v.warnings.empty());

  CalibrationContext zero(constant_at(5), {0, 0, 0, 0, 0}, {}, true, 0.3);
  auto z = split_interval_exchangeable(zero, kNone);
  CHECK(z.lower == 5);
  CHECK(z.upper == 5);
  CHECK(z.length() == 0);
}

TEST_CASE("exchangeable engine refuses a non-exchangeable design") {
  CalibrationContext ctx(constant_at(0), {1, 2, 3}, {1, 2, 3}, false, 0.2);
  CHECK_THROWS_AS(split_interval_exchangeable(ctx, kNone), DesignMismatch);
  CHECK_NOTHROW(split_interval_exchangeable(ctx.ignoring_design(), kNone));
}

TEST_CASE("weighted split interval") {
  CalibrationContext ctx(constant_at(0), {1, 2, 3, 4}, {4, 3, 2, 1}, false, 0.25);
  auto r = split_interval_weighted(ctx, kNone, 3);
  CHECK(r.lower == -4);
  CHECK(r.upper == 4);
  CHECK(split_interval_weighted(ctx, kNone, 1e6).vacuous);
  CHECK_THROWS_AS(split_interval_weighted(ctx, kNone, 0), InvalidInput);
  CHECK_THROWS_AS(split_interval_weighted(ctx, kNone, -1), InvalidInput);
}

TEST_CASE("uniform weights reduce to the exchangeable region bit for bit") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 300; ++t) {
    std::vector<double> s(1 + t % 30);
    for (auto& v : s) v = std::abs(nd(gen));
    const double w = 0.5 + t;
    const double alpha = 0.05 + 0.9 * (t % 17) / 17.0;
    CalibrationContext ctx(constant_at(nd(gen)), s, std::vector<double>(s.size(), w), true, alpha);
    const auto a = split_interval_exchangeable(ctx, kNone);
    const auto b = split_interval_weighted(ctx, kNone, w);
    CHECK(a.lower == b.lower);
    CHECK(a.upper == b.upper);
    CHECK(a.vacuous == b.vacuous);
  }
}

TEST_CASE("width is non-decreasing in the test weight and nested in alpha") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.1, 5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(15), w(15);
    for (auto& v : s) v = u(gen);
    for (auto& v : w) v = u(gen);
    CalibrationContext ctx(constant_at(0), s, w, false, 0.2);
    double prev = 0;
    for (double tw = 0.1; tw < 50; tw *= 1.5) {
      const double len = split_interval_weighted(ctx, kNone, tw).length();
      CHECK(len >= prev);
      prev = len;
    }
    double prev_alpha_len = std::numeric_limits<double>::infinity();
    for (double alpha : {0.05, 0.1, 0.2, 0.3, 0.5}) {
      const double len = split_interval_weighted(ctx.with_alpha(alpha), kNone, 1.0).length();
      CHECK(len <= prev_alpha_len);
      prev_alpha_len = len;
    }
  }
}

TEST_CASE("unknown test weight modes") {
  CalibrationContext ctx(constant_at(0), {1, 2, 3, 4}, {4, 3, 2, 1}, false, 0.25);
  auto c = split_interval_conservative(ctx, kNone, 3);
  CHECK(c.upper == 4);
  CHECK(c.method == "split-weighted-conservative");
  const std::vector<double> grid{0.5, 1, 3, 100};
  auto regions = split_interval_sensitivity(ctx, kNone, grid);
  REQUIRE(regions.size() == 4);
  CHECK(regions[0].upper == 3);
  CHECK(regions[2].upper == 4);
  CHECK(regions[3].vacuous);
  CHECK_THROWS_AS(split_interval_sensitivity(ctx, kNone, std::vector<double>{}), InvalidInput);
}

TEST_CASE("classification sets") {
  CHECK(labels_within(std::vector<double>{0.8, 0.15, 0.05}, Cutoff::finite(0.3)) == std::vector<int>{0});
  CHECK(labels_within(std::vector<double>{0.8, 0.15, 0.05}, Cutoff::finite(1)) == std::vector<int>{0, 1, 2});
  CHECK(labels_within(std::vector<double>{0.5, 0.5}, Cutoff::finite(0.6)) == std::vector<int>{0, 1});
  CHECK(labels_within(std::vector<double>{0.5, 0.5}, Cutoff::infinity()) == std::vector<int>{0, 1});

  // Monotone in the cutoff.
  const std::vector<double> p{0.5, 0.3, 0.2};
  std::size_t prev = 0;
  for (double q = 0; q <= 1.0; q += 0.05) {
    const auto l = labels_within(p, Cutoff::finite(q));
    CHECK(l.size() >= prev);
    prev = l.size();
  }

  CalibrationContext ctx(three_class({0.7, 0.2, 0.1}), {0.1, 0.2, 0.3, 0.9}, {}, true, 0.25);
  auto r = classification_set(ctx, kNone);
  CHECK(r.kind == PredictionRegion::Kind::kSet);
  CHECK(r.labels == std::vector<int>{0, 1, 2});  // q = 0.9
  CHECK(r.vacuous);
  CHECK(r.contains(2));
  CHECK_FALSE(r.contains(3));

  CalibrationContext tight(three_class({0.7, 0.2, 0.1}), {0.1, 0.2, 0.3, 0.35, 0.4, 0.45, 0.5, 0.9}, {}, true, 0.4);
  auto s = classification_set(tight, kNone);  // rank ceil(0.6*9)=6 -> 0.45
  CHECK(s.labels == std::vector<int>{0});
  CHECK(s.length() == 1);

  CalibrationContext reg(constant_at(0), {1}, {}, true, 0.4);
  CHECK_THROWS_AS(classification_set(reg, kNone), InvalidInput);
}

TEST_CASE("stratified engine uses only the test stratum") {
  StratifiedCalibration strata;
  strata.add(0, CalibrationContext(constant_at(0), {1, 2, 3, 4}, {}, true, 0.25));
  strata.add(1, CalibrationContext(constant_at(0), {10, 20, 30, 40}, {}, true, 0.25));
  CHECK(stratified_interval(strata, kNone, 0).length() == 8);
  CHECK(stratified_interval(strata, kNone, 1).length() == 80);
  CHECK_THROWS_AS(stratified_interval(strata, kNone, 7), InvalidInput);

  StratifiedCalibration single;
  CalibrationContext ctx(constant_at(2), {1, 5, 2, 8, 3}, {}, true, 0.2);
  single.add(0, ctx);
  const auto a = stratified_interval(single, kNone, 0);
  const auto b = split_interval_exchangeable(ctx, kNone);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
}

TEST_CASE("post-stratification weights") {
  const std::vector<std::string> units{"a", "a", "a", "a", "a", "b", "b", "b", "b", "b"};
  const auto w = poststrat_weights(units, {{"a", 90.0}, {"b", 10.0}});
  CHECK(w.unit_weights[0] == 18);
  CHECK(w.unit_weights[9] == 2);
  CHECK(w.tail_weight("a") == 18);
  CHECK(w.tail_weight("b") == 2);
  CHECK_THROWS_AS(w.tail_weight("c"), InvalidInput);
  CHECK_THROWS_AS(poststrat_weights(units, {{"a", 90.0}}), InvalidInput);

  // Doubling every N_h leaves the normalized probabilities unchanged.
  const auto w2 = poststrat_weights(units, {{"a", 180.0}, {"b", 20.0}});
  const auto p1 = normalize_shift_weights({std::vector<double>(10, 0.0), w.unit_weights, w.tail_weight("b")});
  const auto p2 = normalize_shift_weights({std::vector<double>(10, 0.0), w2.unit_weights, w2.tail_weight("b")});
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(p1.p[i] - p2.p[i]) < 1e-15);

  // Proportional sample: all weights equal.
  const auto eq = poststrat_weights(units, {{"a", 50.0}, {"b", 50.0}});
  CHECK(std::all_of(eq.unit_weights.begin(), eq.unit_weights.end(), [](double v) { return v == 10; }));

  const std::map<std::string, std::size_t> counts{{"a", 5}, {"b", 0}};
  const auto partial = poststrat_weights(std::vector<std::string>(5, "a"), {{"a", 90.0}, {"b", 10.0}}, counts);
  CHECK_THROWS_AS(partial.tail_weight("b"), InvalidInput);
}

TEST_CASE("full conformal") {
  // Exact line: the true response conforms.
  std::vector<double> x{0, 1, 2, 3, 4, 5, 6, 7}, y;
  for (double v : x) y.push_back(3 + 2 * v);
  const std::vector<double> xt{2.5};
  GridSpec grid;
  grid.points = 201;
  grid.lo = 0;
  grid.hi = 16;  // contains 8 = 3 + 2*2.5 on the grid
  const auto values = make_grid(y, grid);
  const auto mask = full_conformal_mask(MatrixView{x, 8, 1}, y, xt, 0.2, values, {});
  for (std::size_t g = 0; g < values.size(); ++g)
    if (std::abs(values[g] - 8.0) < 1e-12) CHECK(mask[g]);

  // Small alpha: every grid point conforms and the region is the grid hull.
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  std::vector<double> xs(20), ys(20);
  for (std::size_t i = 0; i < 20; ++i) {
    xs[i] = nd(gen);
    ys[i] = xs[i] + nd(gen);
  }
  GridSpec g2;
  g2.points = 50;
  const auto all = full_conformal_interval(MatrixView{xs, 20, 1}, ys, xt, 0.01, g2);
  const auto v2 = make_grid(ys, g2);
  CHECK(all.lower == v2.front());
  CHECK(all.upper == v2.back());

  // Serial and parallel grids agree.
  FullConformalOptions serial;
  serial.policy = ExecPolicy::kSerial;
  const auto a = full_conformal_interval(MatrixView{xs, 20, 1}, ys, xt, 0.2, g2, serial);
  const auto b = full_conformal_interval(MatrixView{xs, 20, 1}, ys, xt, 0.2, g2);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);

  // Empty inclusion set is reported, not hidden.
  GridSpec far;
  far.points = 10;
  far.lo = 1e6;
  far.hi = 2e6;
  const auto e = full_conformal_interval(MatrixView{xs, 20, 1}, ys, xt, 0.2, far);
  CHECK(e.empty);
  CHECK_FALSE(e.contains(0));
  CHECK(e.length() == 0);
}

TEST_CASE("full and split conformal give similar intervals") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd;
  const std::size_t n = 400;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = nd(gen);
    y[i] = 1 + 2 * x[i] + nd(gen);
  }
  const std::vector<double> xt{0.3};
  GridSpec grid;
  grid.points = 400;
  const auto full = full_conformal_interval(MatrixView{x, n, 1}, y, xt, 0.1, grid);

  const std::size_t m = n / 2;
  const auto model = fit_ols(MatrixView{std::span<const double>(x).first(m), m, 1}, std::span<const double>(y).first(m));
  std::vector<double> scores;
  for (std::size_t i = m; i < n; ++i) scores.push_back(model.score(std::span<const double>(&x[i], 1), y[i]));
  CalibrationContext ctx(model, scores, {}, true, 0.1);
  const auto split = split_interval_exchangeable(ctx, xt);
  CHECK(std::abs(full.length() - split.length()) <= 0.1 * split.length());
}

TEST_CASE("calibration context validates inputs") {
  CHECK_THROWS_AS(CalibrationContext(constant_at(0), {}, {}, true, 0.1), InvalidInput);
  CHECK_THROWS_AS(CalibrationContext(constant_at(0), {1}, {}, true, 0.0), InvalidInput);
  CHECK_THROWS_AS(CalibrationContext(constant_at(0), {1}, {}, true, 1.0), InvalidInput);
  CHECK_THROWS_AS(CalibrationContext(constant_at(0), {1, 2}, {1}, true, 0.1), InvalidInput);
  CHECK_THROWS_AS(CalibrationContext(constant_at(0), {1}, {0}, true, 0.1), InvalidInput);
}
