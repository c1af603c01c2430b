#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svyconform/conformal.hpp"
#include "svyconform/rng.hpp"

namespace svyconform {

/// Calibration scores grouped by sampled cluster. Every engine below
/// returns a radius around f(x), so one query serves every test unit.
class ClusterCalibration {
 public:
  /// cluster_of[i] is the cluster code of scores[i].
  ClusterCalibration(ScoreModel model, std::span<const int> cluster_of, std::span<const double> scores, double alpha);

  static ClusterCalibration from_sample(const FinitePopulation& pop, const DrawnSample& calibration,
                                        const ScoreModel& model, double alpha);

  const ScoreModel& model() const { return model_; }
  double alpha() const { return alpha_; }
  std::size_t k() const { return groups_.size(); }
  std::size_t total() const { return total_; }
  /// Distinct cluster codes, ascending; groups()[j] holds the scores of codes()[j].
  const std::vector<int>& codes() const { return codes_; }
  const std::vector<std::vector<double>>& groups() const { return groups_; }

 private:
  ScoreModel model_;
  double alpha_;
  std::size_t total_ = 0;
  std::vector<int> codes_;
  std::vector<std::vector<double>> groups_;
};

/// One score drawn uniformly from each cluster: k exchangeable scores.
CalibrationContext cluster_subsample_once(const ClusterCalibration& cal, Rng& rng);

/// B one-per-cluster subsamples. A test score r is kept while the mean of
/// the B conformal p-values (1 + #{V >= r}) / (k + 1) exceeds alpha. By
/// Markov's inequality the region covers with probability >= 1 - 2 alpha.
/// The mean p-value is a step function of r, so it is evaluated at every
/// distinct subsampled score rather than on a grid.
Cutoff cluster_repeated_subsample_radius(const ClusterCalibration& cal, std::size_t B, Rng& rng);

/// Unsupervised only. Radius q_l from each cluster at level 1 - alpha/2,
/// then the padded 1 - alpha/2 quantile of the upper endpoints f + q_l
/// across clusters, mirrored for the lower endpoints.
PredictionRegion cluster_double_conformal(const ClusterCalibration& cal);

enum class PooledPadding {
  /// Tail weight k/n on the averaged eCDF: 1/(n+1) of the mass, so equal
  /// cluster sizes give the exchangeable engine on the pooled scores.
  kPhantomUnit,
  /// Tail weight of one whole cluster: 1/(k+1) of the mass.
  kPhantomCluster,
};

/// Mean of the k within-cluster eCDFs (unit weight 1/n_l), padded at +inf.
Cutoff cluster_pooled_cdf_radius(const ClusterCalibration& cal, PooledPadding padding = PooledPadding::kPhantomUnit);

/// Scores of a single cluster, which are exchangeable among themselves.
CalibrationContext observed_cluster_context(const ClusterCalibration& cal, int cluster_code);

/// f(x) +/- radius tagged with the cluster method.
PredictionRegion cluster_interval(const ClusterCalibration& cal, std::span<const double> x_test, Cutoff radius,
                                  std::string method);

}  // namespace svyconform
