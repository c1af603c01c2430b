#include "svyconform/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "svyconform/error.hpp"

namespace svyconform {

ClusterCalibration::ClusterCalibration(ScoreModel model, std::span<const int> cluster_of,
                                       std::span<const double> scores, double alpha)
    : model_(std::move(model)), alpha_(alpha), total_(scores.size()) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie strictly inside (0,1)");
  require(cluster_of.size() == scores.size(), "one cluster code per score is required");
  require(!scores.empty(), "calibration set is empty");
  std::map<int, std::vector<double>> by_code;
  for (std::size_t i = 0; i < scores.size(); ++i) by_code[cluster_of[i]].push_back(scores[i]);
  for (auto& [code, s] : by_code) {
    codes_.push_back(code);
    groups_.push_back(std::move(s));
  }
}

ClusterCalibration ClusterCalibration::from_sample(const FinitePopulation& pop, const DrawnSample& calibration,
                                                   const ScoreModel& model, double alpha) {
  require(calibration.clustered(), "calibration sample carries no cluster labels");
  std::vector<double> scores;
  scores.reserve(calibration.size());
  for (std::size_t i = 0; i < calibration.size(); ++i) {
    const auto u = calibration.index(i);
    scores.push_back(model.dim() == 0 ? model.score({}, pop.y(u)) : model.score(pop.x(u), pop.y(u)));
  }
  return ClusterCalibration(model, calibration.cluster_of, scores, alpha);
}

CalibrationContext cluster_subsample_once(const ClusterCalibration& cal, Rng& rng) {
  std::vector<double> picked;
  picked.reserve(cal.k());
  for (const auto& g : cal.groups()) picked.push_back(g[rng.uniform_index(g.size())]);
  return CalibrationContext(cal.model(), std::move(picked), {}, true, cal.alpha());
}

Cutoff cluster_repeated_subsample_radius(const ClusterCalibration& cal, std::size_t B, Rng& rng) {
  require(B >= 1, "need at least one subsample");
  const std::size_t k = cal.k();
  std::vector<SortedScores> subsamples;
  std::vector<double> breakpoints;
  subsamples.reserve(B);
  breakpoints.reserve(B * k);
  for (std::size_t b = 0; b < B; ++b) {
    auto ctx = cluster_subsample_once(cal, rng);
    breakpoints.insert(breakpoints.end(), ctx.scores().begin(), ctx.scores().end());
    subsamples.push_back(ctx.sorted());
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

  // Sum of (1 + #{V >= r}) over subsamples against alpha * B * (k+1); the
  // tolerance makes an exact tie count as "not exceeding".
  const double threshold =
      cal.alpha() * static_cast<double>(B) * static_cast<double>(k + 1) * (1.0 + kCumulativeTolerance);
  auto exceeds = [&](double r) {
    std::size_t total = 0;
    for (const auto& s : subsamples) total += 1 + s.count_at_least(r);
    return static_cast<double>(total) > threshold;
  };
  // Past every score each p-value is 1/(k+1).
  if (static_cast<double>(B) > threshold) return Cutoff::infinity();
  // The mean p-value is non-increasing in r and equals 1 at the smallest
  // breakpoint, so the kept set is [0, largest breakpoint that exceeds].
  auto first_fail = std::partition_point(breakpoints.begin(), breakpoints.end(), exceeds);
  require(first_fail != breakpoints.begin(), "repeated subsampling excluded every score");
  return Cutoff::finite(*(first_fail - 1));
}

PredictionRegion cluster_double_conformal(const ClusterCalibration& cal) {
  require(cal.model().dim() == 0, "double conformal applies to the unsupervised setting only");
  require(cal.k() >= 2, "double conformal needs at least two clusters");
  const double beta = 1.0 - cal.alpha() / 2.0;
  const double center = cal.model().predict({});
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> uppers, neg_lowers;
  for (const auto& g : cal.groups()) {
    const Cutoff q = SortedScores(g).padded_quantile(beta);
    uppers.push_back(center + q.as_double());
    neg_lowers.push_back(-(center - q.as_double()));
  }
  const Cutoff up = SortedScores(uppers).padded_quantile(beta);
  const Cutoff lo = SortedScores(neg_lowers).padded_quantile(beta);
  PredictionRegion r;
  r.kind = PredictionRegion::Kind::kInterval;
  r.level = 1.0 - cal.alpha();
  r.method = "cluster-double";
  r.upper = up.as_double();
  r.lower = lo.is_infinite() ? -kInf : -lo.value();
  r.vacuous = std::isinf(r.upper) && std::isinf(r.lower);
  if (r.vacuous) r.warnings.push_back("too few clusters for this alpha; region is vacuous");
  return r;
}

Cutoff cluster_pooled_cdf_radius(const ClusterCalibration& cal, PooledPadding padding) {
  std::vector<double> scores, weights;
  scores.reserve(cal.total());
  weights.reserve(cal.total());
  for (const auto& g : cal.groups()) {
    const double w = 1.0 / static_cast<double>(g.size());
    for (double s : g) {
      scores.push_back(s);
      weights.push_back(w);
    }
  }
  const double tail = padding == PooledPadding::kPhantomUnit
                          ? static_cast<double>(cal.k()) / static_cast<double>(cal.total())
                          : 1.0;
  return WeightedScoreCdf(scores, weights).padded_quantile(1.0 - cal.alpha(), tail);
}

CalibrationContext observed_cluster_context(const ClusterCalibration& cal, int cluster_code) {
  auto it = std::lower_bound(cal.codes().begin(), cal.codes().end(), cluster_code);
  if (it == cal.codes().end() || *it != cluster_code)
    throw InvalidInput("cluster code " + std::to_string(cluster_code) + " is not in the calibration sample");
  const auto j = static_cast<std::size_t>(it - cal.codes().begin());
  return CalibrationContext(cal.model(), cal.groups()[j], {}, true, cal.alpha());
}

PredictionRegion cluster_interval(const ClusterCalibration& cal, std::span<const double> x_test, Cutoff radius,
                                  std::string method) {
  auto r = PredictionRegion::interval(cal.model().predict(x_test), radius, 1.0 - cal.alpha(), std::move(method));
  if (radius.is_infinite()) r.warnings.push_back("quantile is +inf; region is vacuous");
  return r;
}

}  // namespace svyconform
