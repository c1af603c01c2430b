#pragma once

#include <compare>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace svyconform {

/// A score threshold on the augmented real line: a finite value or the +inf
/// point mass used to pad the empirical distribution. Kept distinct from a
/// floating-point infinity so callers have to handle the vacuous case.
class Cutoff {
 public:
  static constexpr Cutoff finite(double v) { return Cutoff(false, v); }
  static constexpr Cutoff infinity() { return Cutoff(true, 0.0); }

  constexpr bool is_infinite() const { return infinite_; }
  /// The finite value. Precondition: !is_infinite().
  double value() const;
  /// +inf for the sentinel, the value otherwise.
  constexpr double as_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  /// Infinity orders above every finite value.
  friend constexpr std::partial_ordering operator<=>(const Cutoff& a, const Cutoff& b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ <=> b.infinite_;
    return a.value_ <=> b.value_;
  }
  friend constexpr bool operator==(const Cutoff& a, const Cutoff& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

 private:
  constexpr Cutoff(bool inf, double v) : infinite_(inf), value_(v) {}
  bool infinite_;
  double value_;
};

/// Relative slack on ">= beta" comparisons of cumulative mass. Absorbs
/// summation rounding so that exact ties in real arithmetic are treated as
/// reaching the level.
inline constexpr double kCumulativeTolerance = 1e-12;

/// Smallest integer k >= 1 with k >= beta * m, evaluated with
/// kCumulativeTolerance. For m = n+1 this is the conformal rank.
std::size_t ceil_rank(double beta, std::size_t m);

/// The ceil(beta (n+1))-th smallest element of scores plus a point at +inf.
Cutoff conformal_quantile_unweighted(std::span<const double> scores, double beta);

/// Calibration scores with their (unnormalized) weights and the weight given
/// to the test point, which carries the +inf mass.
struct WeightedScores {
  std::vector<double> scores;
  std::vector<double> weights;
  double tail_weight = 1.0;

  void validate() const;
};

struct ShiftProbabilities {
  std::vector<double> p;  // p_1..p_n
  double tail = 0.0;      // p_{n+1}
};

/// p_i = w_i / (sum w + w_tail), p_{n+1} = w_tail / (sum w + w_tail).
ShiftProbabilities normalize_shift_weights(const WeightedScores& ws);

struct PaddedQuantileQuery {
  double beta = 0.5;
  WeightedScores scores_and_weights;
};

/// beta-quantile of sum_i p_i delta_{V_i} + p_{n+1} delta_{+inf}: the
/// smallest score whose cumulative normalized weight reaches beta, or the
/// sentinel when the finite mass never does.
Cutoff conformal_quantile_weighted(const PaddedQuantileQuery& query);

/// Unweighted scores sorted once for repeated queries.
class SortedScores {
 public:
  SortedScores() = default;
  explicit SortedScores(std::span<const double> scores);

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& values() const { return sorted_; }

  /// ceil(beta (n+1))-th smallest of scores plus +inf.
  Cutoff padded_quantile(double beta) const;
  /// ceil(beta n)-th smallest of scores, no padding.
  double order_statistic(double beta) const;
  /// Number of scores >= v.
  std::size_t count_at_least(double v) const;

 private:
  std::vector<double> sorted_;
};

/// Weighted scores grouped into a step CDF (ascending distinct values,
/// cumulative weight per step) for repeated queries with different test
/// weights. Cumulative sums are carried in long double.
class WeightedScoreCdf {
 public:
  WeightedScoreCdf() = default;
  WeightedScoreCdf(std::span<const double> scores, std::span<const double> weights);

  std::size_t steps() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  long double total_weight() const { return cumulative_.empty() ? 0.0L : cumulative_.back(); }

  /// Padded quantile with the +inf point carrying `tail_weight`.
  Cutoff padded_quantile(double beta, double tail_weight) const;
  /// Quantile of the finite weighted scores alone (no padding).
  double unpadded_quantile(double beta) const;

 private:
  std::vector<double> values_;
  std::vector<long double> cumulative_;
};

}  // namespace svyconform
