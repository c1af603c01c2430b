#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svyconform/cluster.hpp"
#include "svyconform/conformal.hpp"
#include "svyconform/designs.hpp"
#include "svyconform/population.hpp"

namespace svyconform {

enum class Task { kUnsupervised, kRegression, kClassification };
std::string_view to_string(Task task);
Task parse_task(std::string_view text);

enum class Engine { kSplit, kStratified, kClusterSubsampleOnce, kClusterRepeated, kClusterDouble, kClusterPooled };
std::string_view to_string(Engine engine);
/// split, stratified, cluster-sub1, cluster-subB, cluster-double, cluster-pool
Engine parse_engine(std::string_view text);

/// One row of the method matrix.
struct MethodSpec {
  std::string label;
  Engine engine = Engine::kSplit;
  /// Weighted quantile with the test unit's design weight. Without it the
  /// scores are treated as exchangeable even when the design is not (the
  /// design-ignoring baseline), unless ExperimentConfig::check_design is set.
  bool use_weights = false;
  /// Padded conformal quantile; false gives the naive unpadded quantile.
  bool conformal = true;
  /// Fit the model by weighted least squares / likelihood (supervised tasks).
  bool weighted_model = false;
};

enum class SizeSource {
  kColumn,     // the population's size measure
  kResiduals,  // 1 + sqrt|full-population OLS residual|
};

/// Acceptance band on one report cell. Unset bounds are not checked.
struct Band {
  std::string method;
  double alpha = 0.2;
  /// coverage, length, vacuous_rate or min_stratum_coverage
  std::string metric = "coverage";
  std::optional<double> min;
  std::optional<double> max;
  /// Strictly below / above the same metric of another method.
  std::string less_than;
  std::string greater_than;
};

struct PopulationSource {
  std::optional<SyntheticPopSpec> synthetic;
  std::string file;
  PopulationSchema schema;
};

struct ExperimentConfig {
  std::string name = "experiment";
  PopulationSource population;
  Task task = Task::kUnsupervised;
  DesignSpec design;
  SizeSource size_source = SizeSource::kColumn;
  std::vector<MethodSpec> methods;
  std::vector<double> alphas{0.2, 0.1};
  std::size_t replicates = 1000;
  double split_fraction = 0.5;
  std::uint64_t seed = 1;
  /// Unsupervised score center; defaults to the population median of y.
  std::optional<double> center;
  std::size_t subsamples = 20;  // B for cluster-subB
  PooledPadding pooled_padding = PooledPadding::kPhantomUnit;
  /// Skip unweighted methods on non-exchangeable designs instead of running
  /// them as design-ignoring baselines.
  bool check_design = false;
  std::vector<Band> bands;
  ExecPolicy policy = ExecPolicy::kParallel;

  void validate() const;
};

struct MethodRow {
  MethodSpec method;
  double alpha = 0.0;
  std::size_t replicates = 0;
  double coverage_mean = 0.0;
  double coverage_sd = 0.0;
  double coverage_lo = 0.0;
  double coverage_hi = 0.0;
  /// Mean finite region length (width or set size); NaN if every region was
  /// vacuous.
  double length_mean = 0.0;
  double length_lo = 0.0;
  double length_hi = 0.0;
  double vacuous_rate = 0.0;
  std::vector<std::string> stratum_names;
  std::vector<double> stratum_coverage;
  /// Empty when the method ran; the reason otherwise.
  std::string skipped;
};

struct BandResult {
  Band band;
  double value = 0.0;
  bool passed = false;
  std::string detail;
};

struct CoverageReport {
  std::string experiment;
  std::vector<MethodRow> rows;
  std::vector<BandResult> bands;

  const MethodRow* find(const std::string& label, double alpha) const;
  bool all_bands_pass() const;
};

/// The ceil(beta n)-th smallest score, no padding.
double naive_quantile_baseline(std::span<const double> scores, double beta);

/// Loads or generates the population, with the size measure the config asks for.
FinitePopulation materialize_population(const ExperimentConfig& cfg);

/// Runs every replicate and aggregates. Replicate r draws from RNG streams
/// derived from (seed, r), so the report does not depend on the policy or
/// thread count.
CoverageReport run_experiment(const ExperimentConfig& cfg);
CoverageReport run_experiment(const ExperimentConfig& cfg, const FinitePopulation& pop);

std::vector<BandResult> evaluate_bands(const CoverageReport& report, std::span<const Band> bands);

}  // namespace svyconform
