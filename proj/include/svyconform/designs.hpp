#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svyconform/population.hpp"
#include "svyconform/rng.hpp"

namespace svyconform {

enum class DesignKind { kSrsWr, kSrsWor, kPpsWr, kPpsWor, kStratified, kCluster };

std::string_view to_string(DesignKind kind);
/// Accepts the CLI spellings: srs-wr, srs-wor, pps-wr, pps-wor, stratified, cluster.
DesignKind parse_design_kind(std::string_view text);

struct DesignSpec {
  DesignKind kind = DesignKind::kSrsWor;
  /// Sample size; number of clusters k for kCluster; unused for kStratified.
  std::size_t n = 0;
  /// kStratified: stratum name -> sample count. Must cover every stratum.
  std::map<std::string, std::size_t> allocation;
  /// kStratified: design used inside each stratum.
  DesignKind within_stratum_kind = DesignKind::kSrsWor;
  /// kCluster: 0 takes every unit of a sampled cluster (one stage); m > 0
  /// takes an SRSWOR of min(m, cluster size) units (two stage).
  std::size_t within_cluster_n = 0;
  /// Name of the size column, for provenance only; the sizes themselves come
  /// from the population.
  std::string size_measure_col;
  std::uint64_t seed = 0;

  /// SRS designs, the ones for which calibration scores are exchangeable.
  bool exchangeable() const;
  bool requires_size_measure() const;
};

/// One realized sample. Entry i is the i-th draw; WR designs may repeat ids.
struct DrawnSample {
  std::vector<std::size_t> unit_ids;  // population ids, 1-based
  std::vector<double> base_weight;    // 1/pi for the draw
  std::vector<int> stratum_of;        // stratified designs only
  std::vector<int> cluster_of;        // cluster designs only
  DesignSpec design;
  std::vector<std::string> flags;     // notes raised by design_split

  std::size_t size() const { return unit_ids.size(); }
  bool empty() const { return unit_ids.empty(); }
  /// 0-based population index of draw i.
  std::size_t index(std::size_t i) const { return unit_ids[i] - 1; }
  bool stratified() const { return !stratum_of.empty(); }
  bool clustered() const { return !cluster_of.empty(); }

  /// Draws at the given positions, metadata carried along.
  DrawnSample subset(std::span<const std::size_t> positions) const;
};

/// Validates `spec` against `pop`; throws InvalidInput with the reason.
void validate(const DesignSpec& spec, const FinitePopulation& pop);

/// Draws one sample. Pure given the RNG state.
///
/// PPS designs select unit j with single-draw probability p_j = s_j / sum(s).
/// Both PPSWR and PPSWOR report base weight 1/(n p_j), the with-replacement
/// weight; PPSWOR selects draw by draw in proportion to the remaining sizes.
DrawnSample draw(const FinitePopulation& pop, const DesignSpec& spec, Rng& rng);

/// Convenience overload seeding the RNG from spec.seed.
DrawnSample draw(const FinitePopulation& pop, const DesignSpec& spec);

/// Base weight a population unit would carry if drawn under `spec`.
/// Used as the test-case weight for weighted conformal regions.
std::vector<double> population_weights(const FinitePopulation& pop, const DesignSpec& spec);

struct SplitResult {
  DrawnSample train;
  DrawnSample calibration;
  /// Stratum codes too small to place on both sides; they went wholly to
  /// training.
  std::vector<int> flagged_strata;
};

/// Proper-training / calibration split that mimics the design: uniform for
/// unstructured samples, within each stratum for stratified samples, and by
/// whole clusters for cluster samples.
SplitResult design_split(const DrawnSample& sample, double frac_train, Rng& rng);

}  // namespace svyconform
