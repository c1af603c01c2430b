#include "svyconform/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "svyconform/error.hpp"

namespace svyconform {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_alpha(double alpha) { require(alpha > 0.0 && alpha < 1.0, "alpha must lie strictly inside (0,1)"); }

void note_saturation(PredictionRegion& r, std::size_t n) {
  r.warnings.push_back("alpha too small for n=" + std::to_string(n) +
                       " calibration points: quantile is +inf, region is vacuous");
}

}  // namespace

double PredictionRegion::length() const {
  if (kind == Kind::kSet) return static_cast<double>(labels.size());
  if (empty) return 0.0;
  return upper - lower;
}

bool PredictionRegion::contains(double y) const {
  if (kind == Kind::kSet) {
    if (!(y >= 0 && y == std::floor(y))) return false;
    return std::binary_search(labels.begin(), labels.end(), static_cast<int>(y));
  }
  if (empty) return false;
  return lower <= y && y <= upper;
}

PredictionRegion PredictionRegion::interval(double center, Cutoff radius, double level, std::string method) {
  PredictionRegion r;
  r.kind = Kind::kInterval;
  r.level = level;
  r.method = std::move(method);
  if (radius.is_infinite()) {
    r.vacuous = true;
    r.lower = -kInf;
    r.upper = kInf;
  } else {
    r.lower = center - radius.value();
    r.upper = center + radius.value();
  }
  return r;
}

// ---------------------------------------------------------------------------

CalibrationContext::CalibrationContext(ScoreModel model, std::vector<double> scores, std::vector<double> weights,
                                       bool exchangeable, double alpha)
    : model_(std::move(model)),
      scores_(std::move(scores)),
      weights_(std::move(weights)),
      exchangeable_(exchangeable),
      alpha_(alpha) {
  check_alpha(alpha_);
  require(!scores_.empty(), "calibration set is empty");
  if (weights_.empty()) weights_.assign(scores_.size(), 1.0);
  require(weights_.size() == scores_.size(), "calibration weights differ in length from scores");
  sorted_ = SortedScores(scores_);
  cdf_ = WeightedScoreCdf(scores_, weights_);
}

CalibrationContext CalibrationContext::from_sample(const FinitePopulation& pop, const DrawnSample& calibration,
                                                   ScoreModel model, double alpha) {
  require(!calibration.empty(), "calibration sample is empty");
  std::vector<double> scores;
  scores.reserve(calibration.size());
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    const auto u = calibration.index(i);
    require(u < pop.size(), "calibration unit id outside the population");
    scores.push_back(model.dim() == 0 ? model.score({}, pop.y(u)) : model.score(pop.x(u), pop.y(u)));
  }
  return CalibrationContext(std::move(model), std::move(scores), calibration.base_weight,
                            calibration.design.exchangeable(), alpha);
}

CalibrationContext CalibrationContext::ignoring_design() const {
  CalibrationContext c = *this;
  c.exchangeable_ = true;
  return c;
}

CalibrationContext CalibrationContext::with_alpha(double alpha) const {
  check_alpha(alpha);
  CalibrationContext c = *this;
  c.alpha_ = alpha;
  return c;
}

// ---------------------------------------------------------------------------

PredictionRegion split_interval_exchangeable(const CalibrationContext& ctx, std::span<const double> x_test) {
  if (!ctx.exchangeable())
    throw DesignMismatch("calibration design is not exchangeable; use split_interval_weighted with the test "
                         "unit's sampling weight");
  require(ctx.model().kind() == ScoreKind::kAbsResidual, "interval engines need an absolute-residual score");
  const Cutoff q = ctx.unweighted_quantile();
  auto r = PredictionRegion::interval(ctx.model().predict(x_test), q, ctx.level(), "split-exchangeable");
  if (q.is_infinite()) note_saturation(r, ctx.size());
  return r;
}

PredictionRegion split_interval_weighted(const CalibrationContext& ctx, std::span<const double> x_test,
                                         double test_weight) {
  require(std::isfinite(test_weight) && test_weight > 0.0, "test weight must be strictly positive");
  require(ctx.model().kind() == ScoreKind::kAbsResidual, "interval engines need an absolute-residual score");
  const Cutoff q = ctx.weighted_quantile(test_weight);
  auto r = PredictionRegion::interval(ctx.model().predict(x_test), q, ctx.level(), "split-weighted");
  if (q.is_infinite())
    r.warnings.push_back("finite calibration mass below the level for this test weight; region is vacuous");
  return r;
}

PredictionRegion split_interval_conservative(const CalibrationContext& ctx, std::span<const double> x_test,
                                             double max_weight) {
  auto r = split_interval_weighted(ctx, x_test, max_weight);
  r.method = "split-weighted-conservative";
  return r;
}

std::vector<PredictionRegion> split_interval_sensitivity(const CalibrationContext& ctx,
                                                         std::span<const double> x_test,
                                                         std::span<const double> weight_grid) {
  require(!weight_grid.empty(), "weight grid is empty");
  std::vector<PredictionRegion> out;
  out.reserve(weight_grid.size());
  for (double w : weight_grid) {
    out.push_back(split_interval_weighted(ctx, x_test, w));
    out.back().method = "split-weighted-sensitivity";
  }
  return out;
}

std::vector<int> labels_within(std::span<const double> probs, Cutoff qhat) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (qhat.is_infinite() || 1.0 - probs[k] <= qhat.value()) labels.push_back(static_cast<int>(k));
  return labels;
}

PredictionRegion classification_set(const CalibrationContext& ctx, std::span<const double> x_test,
                                    std::optional<double> test_weight) {
  require(ctx.model().kind() == ScoreKind::kOneMinusProb, "classification sets need the 1 - probability score");
  Cutoff q = Cutoff::infinity();
  if (test_weight) {
    require(std::isfinite(*test_weight) && *test_weight > 0.0, "test weight must be strictly positive");
    q = ctx.weighted_quantile(*test_weight);
  } else {
    if (!ctx.exchangeable())
      throw DesignMismatch("calibration design is not exchangeable; pass the test unit's sampling weight");
    q = ctx.unweighted_quantile();
  }
  PredictionRegion r;
  r.kind = PredictionRegion::Kind::kSet;
  r.level = ctx.level();
  r.method = test_weight ? "classification-weighted" : "classification";
  r.n_classes = ctx.model().n_classes();
  r.labels = labels_within(ctx.model().predict_proba(x_test), q);
  r.vacuous = q.is_infinite() || static_cast<int>(r.labels.size()) == r.n_classes;
  if (q.is_infinite()) note_saturation(r, ctx.size());
  return r;
}

// ---------------------------------------------------------------------------
// Full conformal

std::vector<double> make_grid(std::span<const double> y, const GridSpec& grid) {
  require(!y.empty(), "no training responses");
  require(grid.points >= 2, "grid needs at least two points");
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  const double range = *mx - *mn;
  const double lo = grid.lo.value_or(*mn - range);
  const double hi = grid.hi.value_or(*mx + range);
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "grid must cover a finite range");
  std::vector<double> g(grid.points);
  for (std::size_t i = 0; i < grid.points; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid.points - 1);
  return g;
}

std::vector<char> full_conformal_mask(MatrixView x, std::span<const double> y, std::span<const double> x_test,
                                      double alpha, std::span<const double> grid_values,
                                      const FullConformalOptions& options) {
  check_alpha(alpha);
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  require(y.size() == n && n >= 1, "training responses must match rows");
  require(x_test.size() == d, "test covariate dimension mismatch");
  if (options.weights) {
    require(options.weights->size() == n, "one weight per training unit is required");
    require(options.test_weight > 0.0, "test weight must be strictly positive");
  }
  const SymmetricFitter fitter =
      options.fitter ? options.fitter
                     : SymmetricFitter([](MatrixView mx, std::span<const double> my,
                                          std::optional<std::span<const double>> mw) { return fit_ols(mx, my, mw); });

  std::vector<double> aug_x(x.data.begin(), x.data.end());
  aug_x.insert(aug_x.end(), x_test.begin(), x_test.end());
  std::vector<double> aug_w;
  if (options.weights) {
    aug_w = *options.weights;
    aug_w.push_back(options.test_weight);
  }
  const double beta = 1.0 - alpha;
  const std::size_t m = grid_values.size();
  std::vector<char> keep(m, 0);
  std::string failure;
  std::mutex failure_mutex;

  auto evaluate = [&](std::size_t g) {
    try {
      std::vector<double> aug_y(y.begin(), y.end());
      aug_y.push_back(grid_values[g]);
      std::optional<std::span<const double>> fw;
      if (options.weighted_fit && options.weights) fw = std::span<const double>(aug_w);
      const ScoreModel model = fitter(MatrixView{aug_x, n + 1, d}, aug_y, fw);
      std::vector<double> residuals(n);
      for (std::size_t i = 0; i < n; ++i)
        residuals[i] = model.score(std::span<const double>(aug_x).subspan(i * d, d), aug_y[i]);
      const double test_score = model.score(x_test, grid_values[g]);
      const Cutoff q = options.weights
                           ? WeightedScoreCdf(residuals, *options.weights).padded_quantile(beta, options.test_weight)
                           : SortedScores(residuals).padded_quantile(beta);
      keep[g] = q.is_infinite() || test_score <= q.value();
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (failure.empty()) failure = e.what();
    }
  };

  if (options.policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t g = 0; g < m; ++g) evaluate(g);
  } else {
    for (std::size_t g = 0; g < m; ++g) evaluate(g);
  }
  if (!failure.empty()) throw InvalidInput("full conformal refit failed: " + failure);
  return keep;
}

PredictionRegion full_conformal_interval(MatrixView x, std::span<const double> y, std::span<const double> x_test,
                                         double alpha, const GridSpec& grid, const FullConformalOptions& options) {
  const auto values = make_grid(y, grid);
  const auto keep = full_conformal_mask(x, y, x_test, alpha, values, options);
  PredictionRegion r;
  r.kind = PredictionRegion::Kind::kInterval;
  r.level = 1.0 - alpha;
  r.method = options.weights ? "full-weighted" : "full";
  auto first = std::find(keep.begin(), keep.end(), 1);
  if (first == keep.end()) {
    r.empty = true;
    r.lower = std::numeric_limits<double>::quiet_NaN();
    r.upper = std::numeric_limits<double>::quiet_NaN();
    r.warnings.push_back("no grid value conformed; region is empty");
    return r;
  }
  auto last = std::find(keep.rbegin(), keep.rend(), 1);
  const auto lo = static_cast<std::size_t>(first - keep.begin());
  const auto hi = static_cast<std::size_t>(keep.rend() - last) - 1;
  r.lower = values[lo];
  r.upper = values[hi];
  r.non_contiguous = std::find(keep.begin() + static_cast<std::ptrdiff_t>(lo),
                               keep.begin() + static_cast<std::ptrdiff_t>(hi), 0) !=
                     keep.begin() + static_cast<std::ptrdiff_t>(hi);
  if (r.non_contiguous) r.warnings.push_back("conforming grid values are not contiguous; reporting their hull");
  if (lo == 0 || hi + 1 == keep.size())
    r.warnings.push_back("region reaches the grid boundary; widen the grid to see its true extent");
  return r;
}

// ---------------------------------------------------------------------------
// Stratified

void StratifiedCalibration::add(int stratum, CalibrationContext ctx) {
  by_stratum_.insert_or_assign(stratum, std::move(ctx));
}

const CalibrationContext& StratifiedCalibration::at(int stratum) const {
  auto it = by_stratum_.find(stratum);
  if (it == by_stratum_.end())
    throw InvalidInput("no calibration data for stratum code " + std::to_string(stratum));
  return it->second;
}

StratifiedCalibration StratifiedCalibration::from_sample(const FinitePopulation& pop, const DrawnSample& calibration,
                                                         const ScoreModel& model, double alpha) {
  require(calibration.stratified(), "calibration sample carries no stratum labels");
  const DesignSpec& d = calibration.design;
  const bool within_srs = d.kind == DesignKind::kStratified &&
                          (d.within_stratum_kind == DesignKind::kSrsWor || d.within_stratum_kind == DesignKind::kSrsWr);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < calibration.size(); ++i) groups[calibration.stratum_of[i]].push_back(i);
  StratifiedCalibration out;
  for (const auto& [h, positions] : groups) {
    auto part = calibration.subset(positions);
    auto ctx = CalibrationContext::from_sample(pop, part, model, alpha);
    out.add(h, CalibrationContext(ctx.model(), ctx.scores(), ctx.weights(), within_srs, alpha));
  }
  return out;
}

PredictionRegion stratified_interval(const StratifiedCalibration& strata, std::span<const double> x_test,
                                     int test_stratum, std::optional<double> test_weight) {
  if (!strata.has(test_stratum))
    throw InvalidInput("unknown or empty stratum code " + std::to_string(test_stratum));
  const auto& ctx = strata.at(test_stratum);
  auto r = test_weight ? split_interval_weighted(ctx, x_test, *test_weight) : split_interval_exchangeable(ctx, x_test);
  r.method = test_weight ? "stratified-weighted" : "stratified";
  return r;
}

// ---------------------------------------------------------------------------
// Post-stratification

double PoststratWeights::tail_weight(const std::string& stratum) const {
  auto it = tail_weights.find(stratum);
  if (it == tail_weights.end())
    throw InvalidInput("post-stratum '" + stratum + "' has no sampled units; its weight is undefined");
  return it->second;
}

PoststratWeights poststrat_weights(std::span<const std::string> unit_strata,
                                   const std::map<std::string, double>& population_sizes,
                                   const std::map<std::string, std::size_t>& sample_counts) {
  PoststratWeights out;
  for (const auto& [label, count] : sample_counts) {
    if (count == 0) continue;
    auto it = population_sizes.find(label);
    require(it != population_sizes.end(), "post-stratum '" + label + "' has unknown population size");
    require(it->second > 0.0, "post-stratum '" + label + "' has non-positive population size");
    out.tail_weights[label] = it->second / static_cast<double>(count);
  }
  out.unit_weights.reserve(unit_strata.size());
  for (const auto& label : unit_strata) {
    require(population_sizes.count(label) != 0, "sampled unit in post-stratum '" + label +
                                                    "' with unknown population size");
    auto it = out.tail_weights.find(label);
    require(it != out.tail_weights.end(), "post-stratum '" + label + "' has a zero sample count");
    out.unit_weights.push_back(it->second);
  }
  return out;
}

PoststratWeights poststrat_weights(std::span<const std::string> unit_strata,
                                   const std::map<std::string, double>& population_sizes) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : unit_strata) ++counts[s];
  return poststrat_weights(unit_strata, population_sizes, counts);
}

}  // namespace svyconform
