#include "svyconform/quantiles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svyconform/error.hpp"

namespace svyconform {

double Cutoff::value() const {
  if (infinite_) throw InvalidInput("cutoff is the +inf sentinel");
  return value_;
}

namespace {

void check_beta(double beta) { require(beta > 0.0 && beta < 1.0, "beta must lie strictly inside (0,1)"); }

}  // namespace

std::size_t ceil_rank(double beta, std::size_t m) {
  const double target = beta * static_cast<double>(m) * (1.0 - kCumulativeTolerance);
  const double k = std::ceil(target);
  return k < 1.0 ? 1 : static_cast<std::size_t>(k);
}

Cutoff conformal_quantile_unweighted(std::span<const double> scores, double beta) {
  require(!scores.empty(), "conformal quantile of an empty score set");
  check_beta(beta);
  return SortedScores(scores).padded_quantile(beta);
}

void WeightedScores::validate() const {
  require(!scores.empty(), "weighted scores must be non-empty");
  require(scores.size() == weights.size(), "scores and weights differ in length");
  for (double w : weights) require(std::isfinite(w) && w > 0.0, "weights must be strictly positive");
  require(std::isfinite(tail_weight) && tail_weight > 0.0, "tail weight must be strictly positive");
  for (double s : scores) require(!std::isnan(s), "scores must not be NaN");
}

ShiftProbabilities normalize_shift_weights(const WeightedScores& ws) {
  ws.validate();
  long double total = ws.tail_weight;
  for (double w : ws.weights) total += w;
  ShiftProbabilities out;
  out.p.reserve(ws.weights.size());
  for (double w : ws.weights) out.p.push_back(static_cast<double>(w / total));
  out.tail = static_cast<double>(ws.tail_weight / total);
  return out;
}

Cutoff conformal_quantile_weighted(const PaddedQuantileQuery& query) {
  check_beta(query.beta);
  const auto& ws = query.scores_and_weights;
  ws.validate();
  return WeightedScoreCdf(ws.scores, ws.weights).padded_quantile(query.beta, ws.tail_weight);
}

// ---------------------------------------------------------------------------

SortedScores::SortedScores(std::span<const double> scores) : sorted_(scores.begin(), scores.end()) {
  std::sort(sorted_.begin(), sorted_.end());
}

Cutoff SortedScores::padded_quantile(double beta) const {
  require(!sorted_.empty(), "conformal quantile of an empty score set");
  check_beta(beta);
  const std::size_t k = ceil_rank(beta, sorted_.size() + 1);
  if (k > sorted_.size()) return Cutoff::infinity();
  return Cutoff::finite(sorted_[k - 1]);
}

double SortedScores::order_statistic(double beta) const {
  require(!sorted_.empty(), "order statistic of an empty score set");
  require(beta > 0.0 && beta <= 1.0, "beta must lie in (0,1]");
  const std::size_t k = std::min(ceil_rank(beta, sorted_.size()), sorted_.size());
  return sorted_[k - 1];
}

std::size_t SortedScores::count_at_least(double v) const {
  return static_cast<std::size_t>(sorted_.end() - std::lower_bound(sorted_.begin(), sorted_.end(), v));
}

// ---------------------------------------------------------------------------

WeightedScoreCdf::WeightedScoreCdf(std::span<const double> scores, std::span<const double> weights) {
  require(!scores.empty(), "weighted CDF of an empty score set");
  require(scores.size() == weights.size(), "scores and weights differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  long double acc = 0.0L;
  for (auto i : order) {
    require(std::isfinite(weights[i]) && weights[i] > 0.0, "weights must be strictly positive");
    acc += weights[i];
    if (!values_.empty() && values_.back() == scores[i]) {
      cumulative_.back() = acc;  // tie: same step
    } else {
      values_.push_back(scores[i]);
      cumulative_.push_back(acc);
    }
  }
}

Cutoff WeightedScoreCdf::padded_quantile(double beta, double tail_weight) const {
  require(!values_.empty(), "weighted CDF is empty");
  check_beta(beta);
  require(std::isfinite(tail_weight) && tail_weight > 0.0, "tail weight must be strictly positive");
  const long double threshold =
      static_cast<long double>(beta) * (cumulative_.back() + tail_weight) * (1.0L - kCumulativeTolerance);
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), threshold);
  if (it == cumulative_.end()) return Cutoff::infinity();
  return Cutoff::finite(values_[static_cast<std::size_t>(it - cumulative_.begin())]);
}

double WeightedScoreCdf::unpadded_quantile(double beta) const {
  require(!values_.empty(), "weighted CDF is empty");
  require(beta > 0.0 && beta <= 1.0, "beta must lie in (0,1]");
  const long double threshold = static_cast<long double>(beta) * cumulative_.back() * (1.0L - kCumulativeTolerance);
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), threshold);
  if (it == cumulative_.end()) return values_.back();
  return values_[static_cast<std::size_t>(it - cumulative_.begin())];
}

}  // namespace svyconform
