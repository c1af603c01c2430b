#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svyconform/designs.hpp"
#include "svyconform/population.hpp"
#include "svyconform/quantiles.hpp"
#include "svyconform/scores.hpp"

namespace svyconform {

enum class ExecPolicy { kSerial, kParallel };

/// An interval (possibly unbounded) for regression or a label set for
/// classification, tagged with the nominal level and the engine that built it.
struct PredictionRegion {
  enum class Kind { kInterval, kSet };

  Kind kind = Kind::kInterval;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::vector<int> labels;  // sorted
  int n_classes = 0;
  double level = 0.0;
  std::string method;
  /// Whole real line, or every label.
  bool vacuous = false;
  /// Full conformal only: no grid value conformed.
  bool empty = false;
  /// Full conformal only: conforming grid values were not contiguous and
  /// the region is their hull.
  bool non_contiguous = false;
  std::vector<std::string> warnings;

  /// Interval width (inf when unbounded), or set size.
  double length() const;
  bool contains(double y) const;

  /// center +/- radius; the +inf sentinel gives the vacuous region.
  static PredictionRegion interval(double center, Cutoff radius, double level, std::string method);
};

/// Calibration scores computed from a model fitted on a disjoint proper
/// training set, ready for repeated region queries.
class CalibrationContext {
 public:
  /// `exchangeable` records whether the calibration design allows the
  /// unweighted engine. Weights must be positive, one per score.
  CalibrationContext(ScoreModel model, std::vector<double> scores, std::vector<double> weights,
                     bool exchangeable, double alpha);

  /// Scores the sampled units of `calibration` with `model`; weights are
  /// the draws' base weights.
  static CalibrationContext from_sample(const FinitePopulation& pop, const DrawnSample& calibration,
                                        ScoreModel model, double alpha);

  /// Same scores, flagged exchangeable: the caller chooses to ignore the
  /// design (the design-ignoring baseline).
  CalibrationContext ignoring_design() const;
  CalibrationContext with_alpha(double alpha) const;

  const ScoreModel& model() const { return model_; }
  const std::vector<double>& scores() const { return scores_; }
  const std::vector<double>& weights() const { return weights_; }
  bool exchangeable() const { return exchangeable_; }
  double alpha() const { return alpha_; }
  double level() const { return 1.0 - alpha_; }
  std::size_t size() const { return scores_.size(); }

  const SortedScores& sorted() const { return sorted_; }
  const WeightedScoreCdf& weighted_cdf() const { return cdf_; }

  Cutoff unweighted_quantile() const { return sorted_.padded_quantile(level()); }
  Cutoff weighted_quantile(double test_weight) const { return cdf_.padded_quantile(level(), test_weight); }

 private:
  ScoreModel model_;
  std::vector<double> scores_;
  std::vector<double> weights_;
  bool exchangeable_;
  double alpha_;
  SortedScores sorted_;
  WeightedScoreCdf cdf_;
};

/// f(x) +/- the ceil((1-alpha)(n+1))-th smallest calibration residual.
/// Throws DesignMismatch unless the context is exchangeable.
PredictionRegion split_interval_exchangeable(const CalibrationContext& ctx, std::span<const double> x_test);

/// f(x) +/- the weighted padded quantile, with the test point's weight on
/// the +inf mass. Uniform weights give exactly the exchangeable region.
PredictionRegion split_interval_weighted(const CalibrationContext& ctx, std::span<const double> x_test,
                                         double test_weight);

/// Unknown test weights: using the largest population weight for every test
/// case is conservative, since the width is non-decreasing in the weight.
PredictionRegion split_interval_conservative(const CalibrationContext& ctx, std::span<const double> x_test,
                                             double max_weight);

/// One region per candidate test weight.
std::vector<PredictionRegion> split_interval_sensitivity(const CalibrationContext& ctx,
                                                         std::span<const double> x_test,
                                                         std::span<const double> weight_grid);

/// Labels whose score 1 - f(x)_y is at most the (weighted) conformal
/// quantile; every label when the quantile is the +inf sentinel.
PredictionRegion classification_set(const CalibrationContext& ctx, std::span<const double> x_test,
                                    std::optional<double> test_weight = std::nullopt);

/// Labels y with 1 - probs[y] <= qhat.
std::vector<int> labels_within(std::span<const double> probs, Cutoff qhat);

// ---------------------------------------------------------------------------
// Full conformal

struct GridSpec {
  std::size_t points = 200;
  /// Defaults to [min(y) - range, max(y) + range] of the training responses.
  std::optional<double> lo;
  std::optional<double> hi;
};

/// Fitting routine for full conformal. Must treat its rows symmetrically.
using SymmetricFitter =
    std::function<ScoreModel(MatrixView, std::span<const double>, std::optional<std::span<const double>>)>;

struct FullConformalOptions {
  /// Per-training-unit weights and the test weight; absent = exchangeable.
  std::optional<std::vector<double>> weights;
  double test_weight = 1.0;
  /// Pass the augmented weights to the fitter as well.
  bool weighted_fit = false;
  SymmetricFitter fitter;  // defaults to fit_ols
  ExecPolicy policy = ExecPolicy::kParallel;
};

/// For each grid value y: refit on the n+1 augmented points and keep y when
/// the test residual is at most the padded (weighted) quantile of the n
/// training residuals. Returns the hull of the kept values.
PredictionRegion full_conformal_interval(MatrixView x, std::span<const double> y, std::span<const double> x_test,
                                         double alpha, const GridSpec& grid = {},
                                         const FullConformalOptions& options = {});

/// Grid membership mask behind full_conformal_interval, exposed for tests
/// and benchmarks.
std::vector<char> full_conformal_mask(MatrixView x, std::span<const double> y, std::span<const double> x_test,
                                      double alpha, std::span<const double> grid_values,
                                      const FullConformalOptions& options);

std::vector<double> make_grid(std::span<const double> y, const GridSpec& grid);

// ---------------------------------------------------------------------------
// Stratified (Mondrian) calibration

class StratifiedCalibration {
 public:
  void add(int stratum, CalibrationContext ctx);
  bool has(int stratum) const { return by_stratum_.count(stratum) != 0; }
  const CalibrationContext& at(int stratum) const;
  const std::map<int, CalibrationContext>& contexts() const { return by_stratum_; }

  /// Groups the calibration draws by stratum and builds one context each.
  static StratifiedCalibration from_sample(const FinitePopulation& pop, const DrawnSample& calibration,
                                           const ScoreModel& model, double alpha);

 private:
  std::map<int, CalibrationContext> by_stratum_;
};

/// Region from the test stratum's calibration scores only. With a test
/// weight the weighted engine is used inside the stratum.
PredictionRegion stratified_interval(const StratifiedCalibration& strata, std::span<const double> x_test,
                                     int test_stratum, std::optional<double> test_weight = std::nullopt);

// ---------------------------------------------------------------------------
// Post-stratification

struct PoststratWeights {
  std::vector<double> unit_weights;           // N_h / n_h per sampled unit
  std::map<std::string, double> tail_weights;  // N_h / n_h per post-stratum

  /// Throws InvalidInput for a post-stratum with no sampled units.
  double tail_weight(const std::string& stratum) const;
};

PoststratWeights poststrat_weights(std::span<const std::string> unit_strata,
                                   const std::map<std::string, double>& population_sizes,
                                   const std::map<std::string, std::size_t>& sample_counts);

/// Counts n_h from the labels themselves.
PoststratWeights poststrat_weights(std::span<const std::string> unit_strata,
                                   const std::map<std::string, double>& population_sizes);

}  // namespace svyconform
