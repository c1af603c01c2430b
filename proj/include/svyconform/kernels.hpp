#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svyconform/conformal.hpp"
#include "svyconform/population.hpp"
#include "svyconform/quantiles.hpp"
#include "svyconform/scores.hpp"

namespace svyconform::kernels {

/// Units per block. Partial sums are formed per block and combined in block
/// order, so serial and parallel runs give bit-identical totals for any
/// thread count.
inline constexpr std::size_t kBlock = 1024;

/// f(x_i) for every population unit (x ignored for dim-0 models).
std::vector<double> predict_all(const ScoreModel& model, const FinitePopulation& pop, ExecPolicy policy);

/// Class probabilities, row-major N x K.
std::vector<double> predict_proba_all(const ScoreModel& model, const FinitePopulation& pop, ExecPolicy policy);

/// Padded weighted quantile for each test weight; +inf marks vacuous.
std::vector<double> weighted_radii(const WeightedScoreCdf& cdf, double beta, std::span<const double> test_weights,
                                   ExecPolicy policy);

struct Tally {
  std::size_t units = 0;
  std::size_t covered = 0;
  std::size_t vacuous = 0;
  /// Sum of finite lengths (interval width or set size).
  double length_sum = 0.0;
  std::vector<std::size_t> group_units;
  std::vector<std::size_t> group_covered;
};

/// Coverage of center_i +/- radius_i for y_i. A single radius broadcasts.
/// `group` (optional) assigns each unit to 0..n_groups-1.
Tally tally_intervals(std::span<const double> center, std::span<const double> radius, std::span<const double> y,
                      std::span<const int> group, int n_groups, ExecPolicy policy);

/// Coverage of {k : 1 - p_ik <= q_i} for labels y_i; probs is N x K.
/// A single q broadcasts.
Tally tally_sets(std::span<const double> probs, int n_classes, std::span<const double> q, std::span<const double> y,
                 std::span<const int> group, int n_groups, ExecPolicy policy);

}  // namespace svyconform::kernels
