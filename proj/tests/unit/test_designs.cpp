#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "svyconform/designs.hpp"
#include "svyconform/error.hpp"

using namespace svyconform;

namespace {

FinitePopulation make_pop(std::size_t n, std::vector<double> sizes = {}, std::vector<std::string> strata = {},
                          std::vector<std::string> clusters = {}) {
  FinitePopulation::Columns c;
  c.y.resize(n);
  std::iota(c.y.begin(), c.y.end(), 1.0);
  if (!sizes.empty()) c.size_measure = sizes;
  if (!strata.empty()) c.strata = encode_labels(strata);
  if (!clusters.empty()) c.clusters = encode_labels(clusters);
  return FinitePopulation(std::move(c));
}

DesignSpec spec_of(DesignKind kind, std::size_t n) {
  DesignSpec s;
  s.kind = kind;
  s.n = n;
  return s;
}

// Frequency of unit 0 over `reps` single draws, checked within 3 standard errors.
void check_first_unit_frequency(const FinitePopulation& pop, DesignKind kind, double expected, int reps) {
  Rng rng(99);
  int hits = 0;
  for (int r = 0; r < reps; ++r)
    if (draw(pop, spec_of(kind, 1), rng).unit_ids[0] == 1) ++hits;
  const double se = std::sqrt(expected * (1 - expected) / reps);
  CHECK(std::abs(hits / static_cast<double>(reps) - expected) <= 3 * se);
}

}  // namespace

TEST_CASE("design names parse") {
  for (auto k : {DesignKind::kSrsWr, DesignKind::kSrsWor, DesignKind::kPpsWr, DesignKind::kPpsWor,
                 DesignKind::kStratified, DesignKind::kCluster})
    CHECK(parse_design_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_design_kind("bernoulli"), InvalidInput);
  CHECK(spec_of(DesignKind::kSrsWr, 1).exchangeable());
  CHECK(spec_of(DesignKind::kSrsWor, 1).exchangeable());
  CHECK_FALSE(spec_of(DesignKind::kPpsWor, 1).exchangeable());
  CHECK_FALSE(spec_of(DesignKind::kCluster, 1).exchangeable());
}

TEST_CASE("census is a permutation with unit weights") {
  const auto pop = make_pop(25);
  Rng rng(1);
  const auto s = draw(pop, spec_of(DesignKind::kSrsWor, 25), rng);
  std::set<std::size_t> ids(s.unit_ids.begin(), s.unit_ids.end());
  CHECK(ids.size() == 25);
  CHECK(*ids.begin() == 1);
  CHECK(*ids.rbegin() == 25);
  for (double w : s.base_weight) CHECK(w == 1.0);
}

TEST_CASE("PPS single-draw probabilities follow the size measure") {
  check_first_unit_frequency(make_pop(4, {1, 1, 1, 1}), DesignKind::kPpsWr, 0.25, 100000);
  check_first_unit_frequency(make_pop(2, {3, 1}), DesignKind::kPpsWr, 0.75, 100000);
  check_first_unit_frequency(make_pop(2, {3, 1}), DesignKind::kPpsWor, 0.75, 100000);
  check_first_unit_frequency(make_pop(5), DesignKind::kSrsWr, 0.2, 100000);

  Rng rng(2);
  const auto s = draw(make_pop(2, {3, 1}), spec_of(DesignKind::kPpsWr, 4), rng);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(s.base_weight[i] == doctest::Approx(s.unit_ids[i] == 1 ? 4.0 / (4 * 3) : 4.0 / (4 * 1)));
}

TEST_CASE("draws are deterministic in the seed") {
  const auto pop = make_pop(200, std::vector<double>(200, 2.0));
  for (auto kind : {DesignKind::kSrsWr, DesignKind::kSrsWor, DesignKind::kPpsWr, DesignKind::kPpsWor}) {
    auto spec = spec_of(kind, 30);
    spec.seed = 5;
    CHECK(draw(pop, spec).unit_ids == draw(pop, spec).unit_ids);
    auto other = spec;
    other.seed = 6;
    CHECK(draw(pop, spec).unit_ids != draw(pop, other).unit_ids);
  }
}

TEST_CASE("without-replacement designs never repeat a unit") {
  std::vector<double> sizes(60);
  for (std::size_t i = 0; i < sizes.size(); ++i) sizes[i] = 1.0 + static_cast<double>(i % 7);
  const auto pop = make_pop(60, sizes);
  Rng rng(3);
  for (int r = 0; r < 200; ++r)
    for (auto kind : {DesignKind::kSrsWor, DesignKind::kPpsWor}) {
      const auto s = draw(pop, spec_of(kind, 40), rng);
      CHECK(std::set<std::size_t>(s.unit_ids.begin(), s.unit_ids.end()).size() == 40);
    }
  CHECK_THROWS_AS(draw(pop, spec_of(DesignKind::kSrsWor, 61), rng), InvalidInput);
  CHECK_NOTHROW(draw(pop, spec_of(DesignKind::kSrsWr, 61), rng));
}

TEST_CASE("SRSWOR weights sum to N") {
  const auto pop = make_pop(150);
  Rng rng(4);
  const auto s = draw(pop, spec_of(DesignKind::kSrsWor, 40), rng);
  CHECK(std::accumulate(s.base_weight.begin(), s.base_weight.end(), 0.0) == doctest::Approx(150));
  const auto pw = population_weights(pop, spec_of(DesignKind::kSrsWor, 40));
  CHECK(pw[0] == doctest::Approx(150.0 / 40.0));
}

TEST_CASE("stratified draws honour the allocation") {
  std::vector<std::string> strata;
  for (int i = 0; i < 30; ++i) strata.push_back(i < 20 ? "A" : "B");
  const auto pop = make_pop(30, {}, strata);
  DesignSpec spec;
  spec.kind = DesignKind::kStratified;
  spec.allocation = {{"A", 5}, {"B", 3}};
  Rng rng(5);
  const auto s = draw(pop, spec, rng);
  CHECK(s.size() == 8);
  CHECK(std::count(s.stratum_of.begin(), s.stratum_of.end(), 0) == 5);
  CHECK(std::count(s.stratum_of.begin(), s.stratum_of.end(), 1) == 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(pop.strata().codes[s.index(i)] == s.stratum_of[i]);
    CHECK(s.base_weight[i] == doctest::Approx(s.stratum_of[i] == 0 ? 4.0 : 10.0 / 3.0));
  }
  const auto pw = population_weights(pop, spec);
  CHECK(pw[0] == doctest::Approx(4.0));
  CHECK(pw[29] == doctest::Approx(10.0 / 3.0));

  spec.allocation = {{"A", 5}};
  CHECK_THROWS_AS(draw(pop, spec, rng), InvalidInput);
  spec.allocation = {{"A", 5}, {"B", 11}};
  CHECK_THROWS_AS(draw(pop, spec, rng), InvalidInput);
  spec.allocation = {{"A", 5}, {"B", 3}, {"C", 1}};
  CHECK_THROWS_AS(draw(pop, spec, rng), InvalidInput);
}

TEST_CASE("cluster draws take whole clusters") {
  std::vector<std::string> clusters;
  for (int i = 0; i < 40; ++i) clusters.push_back("C" + std::to_string(i / 4));
  const auto pop = make_pop(40, {}, {}, clusters);
  Rng rng(6);
  const auto s = draw(pop, spec_of(DesignKind::kCluster, 3), rng);
  CHECK(s.size() == 12);
  CHECK(std::set<int>(s.cluster_of.begin(), s.cluster_of.end()).size() == 3);
  for (double w : s.base_weight) CHECK(w == doctest::Approx(10.0 / 3.0));

  auto two_stage = spec_of(DesignKind::kCluster, 3);
  two_stage.within_cluster_n = 2;
  const auto t = draw(pop, two_stage, rng);
  CHECK(t.size() == 6);
  for (double w : t.base_weight) CHECK(w == doctest::Approx(10.0 / 3.0 * 2.0));
  CHECK_THROWS_AS(draw(pop, spec_of(DesignKind::kCluster, 11), rng), InvalidInput);
  CHECK_THROWS_AS(draw(make_pop(10), spec_of(DesignKind::kCluster, 1), rng), InvalidInput);
  CHECK_THROWS_AS(draw(make_pop(10), spec_of(DesignKind::kPpsWr, 1), rng), InvalidInput);
}

TEST_CASE("design split") {
  Rng rng(7);
  const auto pop = make_pop(10);
  const auto s = draw(pop, spec_of(DesignKind::kSrsWor, 10), rng);
  const auto split = design_split(s, 0.5, rng);
  CHECK(split.train.size() == 5);
  CHECK(split.calibration.size() == 5);
  std::set<std::size_t> all(split.train.unit_ids.begin(), split.train.unit_ids.end());
  all.insert(split.calibration.unit_ids.begin(), split.calibration.unit_ids.end());
  CHECK(all.size() == 10);

  std::vector<std::string> strata;
  for (int i = 0; i < 20; ++i) strata.push_back(i < 8 ? "A" : "B");
  const auto spop = make_pop(20, {}, strata);
  DesignSpec st;
  st.kind = DesignKind::kStratified;
  st.allocation = {{"A", 4}, {"B", 6}};
  const auto ss = draw(spop, st, rng);
  const auto sp = design_split(ss, 0.5, rng);
  CHECK(std::count(sp.calibration.stratum_of.begin(), sp.calibration.stratum_of.end(), 0) == 2);
  CHECK(std::count(sp.calibration.stratum_of.begin(), sp.calibration.stratum_of.end(), 1) == 3);

  std::vector<std::string> clusters;
  for (int i = 0; i < 40; ++i) clusters.push_back("C" + std::to_string(i / 10));
  const auto cpop = make_pop(40, {}, {}, clusters);
  const auto cs = draw(cpop, spec_of(DesignKind::kCluster, 4), rng);
  const auto cp = design_split(cs, 0.5, rng);
  std::set<int> tc(cp.train.cluster_of.begin(), cp.train.cluster_of.end());
  std::set<int> cc(cp.calibration.cluster_of.begin(), cp.calibration.cluster_of.end());
  CHECK(tc.size() == 2);
  CHECK(cc.size() == 2);
  for (int c : tc) CHECK(cc.count(c) == 0);

  CHECK_THROWS_AS(design_split(s, 0.0, rng), InvalidInput);
  CHECK_THROWS_AS(design_split(s, 1.0, rng), InvalidInput);
}

TEST_CASE("strata with a single draw are flagged and kept in training") {
  std::vector<std::string> strata;
  for (int i = 0; i < 20; ++i) strata.push_back(i < 10 ? "A" : "B");
  const auto pop = make_pop(20, {}, strata);
  DesignSpec st;
  st.kind = DesignKind::kStratified;
  st.allocation = {{"A", 1}, {"B", 6}};
  Rng rng(8);
  const auto sp = design_split(draw(pop, st, rng), 0.5, rng);
  CHECK(sp.flagged_strata == std::vector<int>{0});
  CHECK(std::count(sp.train.stratum_of.begin(), sp.train.stratum_of.end(), 0) == 1);
  CHECK(std::count(sp.calibration.stratum_of.begin(), sp.calibration.stratum_of.end(), 0) == 0);
  CHECK_FALSE(sp.train.flags.empty());
}
