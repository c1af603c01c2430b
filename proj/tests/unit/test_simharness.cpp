#include <doctest.h>

#include <cmath>

#include "svyconform/error.hpp"
#include "svyconform/simharness.hpp"

using namespace svyconform;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.name = "small";
  SyntheticPopSpec pop;
  pop.n_units = 1500;
  pop.n_strata = 3;
  pop.n_clusters = 60;
  pop.seed = 4;
  cfg.population.synthetic = pop;
  cfg.task = Task::kRegression;
  cfg.design.kind = DesignKind::kSrsWor;
  cfg.design.n = 80;
  cfg.methods = {{"conformal", Engine::kSplit, false, true, false}, {"naive", Engine::kSplit, false, false, false}};
  cfg.alphas = {0.2};
  cfg.replicates = 60;
  cfg.seed = 11;
  return cfg;
}

void check_rows_equal(const CoverageReport& a, const CoverageReport& b) {
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].coverage_mean == b.rows[i].coverage_mean);
    CHECK(a.rows[i].coverage_sd == b.rows[i].coverage_sd);
    CHECK(((std::isnan(a.rows[i].length_mean) && std::isnan(b.rows[i].length_mean)) ||
           a.rows[i].length_mean == b.rows[i].length_mean));
    CHECK(a.rows[i].vacuous_rate == b.rows[i].vacuous_rate);
  }
}

}  // namespace

TEST_CASE("naive baseline is the unpadded order statistic") {
  CHECK(naive_quantile_baseline(std::vector<double>{1, 2, 3, 4}, 0.75) == 3);
  CHECK(naive_quantile_baseline(std::vector<double>{4, 1, 3, 2}, 0.5) == 2);
  CHECK(naive_quantile_baseline(std::vector<double>{5}, 0.99) == 5);
  CHECK_THROWS_AS(naive_quantile_baseline(std::vector<double>{}, 0.5), InvalidInput);
}

TEST_CASE("names round trip") {
  for (auto t : {Task::kUnsupervised, Task::kRegression, Task::kClassification}) CHECK(parse_task(to_string(t)) == t);
  for (auto e : {Engine::kSplit, Engine::kStratified, Engine::kClusterSubsampleOnce, Engine::kClusterRepeated,
                 Engine::kClusterDouble, Engine::kClusterPooled})
    CHECK(parse_engine(to_string(e)) == e);
  CHECK_THROWS_AS(parse_task("ranking"), InvalidInput);
  CHECK_THROWS_AS(parse_engine("jackknife"), InvalidInput);
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.methods.clear();
  CHECK_THROWS_AS(run_experiment(cfg), InvalidInput);
  cfg = small_config();
  cfg.methods.push_back(cfg.methods[0]);
  CHECK_THROWS_AS(run_experiment(cfg), InvalidInput);
  cfg = small_config();
  cfg.alphas = {1.0};
  CHECK_THROWS_AS(run_experiment(cfg), InvalidInput);
  cfg = small_config();
  cfg.population.file = "pop.csv";
  CHECK_THROWS_AS(run_experiment(cfg), InvalidInput);
}

TEST_CASE("a single vacuous replicate has coverage one") {
  auto cfg = small_config();
  cfg.task = Task::kUnsupervised;
  cfg.design.n = 3;
  cfg.replicates = 1;
  cfg.methods = {{"conformal", Engine::kSplit, false, true, false}};
  const auto report = run_experiment(cfg);
  const auto* row = report.find("conformal", 0.2);
  REQUIRE(row != nullptr);
  CHECK(row->coverage_mean == 1.0);
  CHECK(row->vacuous_rate == 1.0);
  CHECK(std::isnan(row->length_mean));
}

TEST_CASE("conformal regions cover at least as often as the naive ones") {
  const auto report = run_experiment(small_config());
  const auto* c = report.find("conformal", 0.2);
  const auto* n = report.find("naive", 0.2);
  REQUIRE(c != nullptr);
  REQUIRE(n != nullptr);
  CHECK(c->coverage_mean >= n->coverage_mean);
  CHECK(c->length_mean >= n->length_mean);
  CHECK(c->coverage_lo <= c->coverage_mean);
  CHECK(c->coverage_hi >= c->coverage_mean);
  CHECK(c->stratum_names.size() == 3);
  CHECK(c->stratum_coverage.size() == 3);
  CHECK(c->replicates == 60);
}

TEST_CASE("reports do not depend on the execution policy") {
  auto cfg = small_config();
  cfg.methods.push_back({"weighted", Engine::kSplit, true, true, false});
  cfg.alphas = {0.2, 0.1};
  cfg.policy = ExecPolicy::kSerial;
  const auto serial = run_experiment(cfg);
  cfg.policy = ExecPolicy::kParallel;
  const auto parallel = run_experiment(cfg);
  check_rows_equal(serial, parallel);
}

TEST_CASE("incompatible methods are skipped with a reason") {
  auto cfg = small_config();
  cfg.design.kind = DesignKind::kPpsWor;
  cfg.population.synthetic->informativeness = 0.5;
  cfg.check_design = true;
  cfg.methods = {{"plain", Engine::kSplit, false, true, false},
                 {"weighted", Engine::kSplit, true, true, false},
                 {"strat", Engine::kStratified, false, true, false},
                 {"sub1", Engine::kClusterSubsampleOnce, false, true, false}};
  cfg.replicates = 5;
  const auto report = run_experiment(cfg);
  CHECK_FALSE(report.find("plain", 0.2)->skipped.empty());
  CHECK(report.find("weighted", 0.2)->skipped.empty());
  CHECK_FALSE(report.find("strat", 0.2)->skipped.empty());
  CHECK_FALSE(report.find("sub1", 0.2)->skipped.empty());

  cfg.check_design = false;
  const auto lenient = run_experiment(cfg);
  CHECK(lenient.find("plain", 0.2)->skipped.empty());
}

TEST_CASE("cluster, stratified and classification experiments run") {
  auto cfg = small_config();
  cfg.task = Task::kUnsupervised;
  cfg.design.kind = DesignKind::kCluster;
  cfg.design.n = 12;
  cfg.methods = {{"sub1", Engine::kClusterSubsampleOnce, false, true, false},
                 {"subB", Engine::kClusterRepeated, false, true, false},
                 {"double", Engine::kClusterDouble, false, true, false},
                 {"pool", Engine::kClusterPooled, false, true, false},
                 {"pool-naive", Engine::kClusterPooled, false, false, false}};
  cfg.replicates = 20;
  const auto cl = run_experiment(cfg);
  for (const auto& row : cl.rows) {
    CHECK(row.skipped.empty());
    CHECK(row.coverage_mean >= 0.0);
    CHECK(row.coverage_mean <= 1.0);
  }

  auto st = small_config();
  st.design.kind = DesignKind::kStratified;
  st.design.allocation = {{"S1", 30}, {"S2", 20}, {"S3", 20}};
  st.methods = {{"strat", Engine::kStratified, false, true, false},
                {"strat-w", Engine::kStratified, true, true, true}};
  st.replicates = 20;
  const auto sr = run_experiment(st);
  for (const auto& row : sr.rows) CHECK(row.skipped.empty());

  auto cc = small_config();
  cc.task = Task::kClassification;
  cc.population.synthetic->n_classes = 3;
  cc.design.n = 150;
  cc.replicates = 20;
  const auto cr = run_experiment(cc);
  const auto* row = cr.find("conformal", 0.2);
  CHECK(row->skipped.empty());
  CHECK(row->length_mean >= 1.0);
  CHECK(row->length_mean <= 3.0);
}

TEST_CASE("bands") {
  auto cfg = small_config();
  Band ok;
  ok.method = "conformal";
  ok.min = 0.75;
  Band cmp;
  cmp.method = "naive";
  cmp.metric = "length";
  cmp.less_than = "conformal";
  Band missing;
  missing.method = "nothing";
  Band too_high;
  too_high.method = "naive";
  too_high.min = 0.999;
  cfg.bands = {ok, cmp, missing, too_high};
  const auto report = run_experiment(cfg);
  REQUIRE(report.bands.size() == 4);
  CHECK(report.bands[0].passed);
  CHECK(report.bands[1].passed);
  CHECK_FALSE(report.bands[2].passed);
  CHECK_FALSE(report.bands[3].passed);
  CHECK_FALSE(report.all_bands_pass());

  Band bad_metric;
  bad_metric.method = "conformal";
  bad_metric.metric = "width";
  CHECK_THROWS_AS(evaluate_bands(report, std::vector<Band>{bad_metric}), InvalidInput);
}

TEST_CASE("residual size measure") {
  auto cfg = small_config();
  cfg.size_source = SizeSource::kResiduals;
  const auto pop = materialize_population(cfg);
  REQUIRE(pop.has_size_measure());
  for (double s : pop.size_measure()) CHECK(s >= 1.0);
}
