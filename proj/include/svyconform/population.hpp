#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svyconform {

enum class ResponseKind { kReal, kCategorical };

/// Integer-coded labels (strata, clusters, classes) with their display names.
/// Codes index into `names`; encode_labels numbers them by first appearance.
struct LabelColumn {
  std::vector<int> codes;
  std::vector<std::string> names;

  std::size_t n_levels() const { return names.size(); }
  /// Units carrying each code, in id order.
  std::vector<std::vector<std::size_t>> members() const;
};

LabelColumn encode_labels(const std::vector<std::string>& raw);

/// A fixed table of N units. Unit i (0-based index) has population id i+1.
/// Immutable after construction and safe to share across threads.
class FinitePopulation {
 public:
  struct Columns {
    std::size_t dim = 0;
    std::vector<double> x;  // row-major N x dim
    std::vector<double> y;
    ResponseKind response = ResponseKind::kReal;
    std::vector<std::string> class_names;  // categorical only
    std::optional<LabelColumn> strata;
    std::optional<LabelColumn> clusters;
    std::optional<std::vector<double>> size_measure;
    std::vector<std::string> covariate_names;
    std::vector<std::string> source_ids;  // id text as read; empty = "1".."N"
  };

  /// Validates every invariant; throws InvalidInput on violation.
  explicit FinitePopulation(Columns columns);

  std::size_t size() const { return c_.y.size(); }
  std::size_t dim() const { return c_.dim; }

  std::span<const double> x(std::size_t i) const {
    return {c_.x.data() + i * c_.dim, c_.dim};
  }
  std::span<const double> x_data() const { return c_.x; }
  double y(std::size_t i) const { return c_.y[i]; }
  std::span<const double> y_data() const { return c_.y; }

  ResponseKind response_kind() const { return c_.response; }
  int n_classes() const { return static_cast<int>(c_.class_names.size()); }
  const std::vector<std::string>& class_names() const { return c_.class_names; }

  bool has_strata() const { return c_.strata.has_value(); }
  const LabelColumn& strata() const;
  bool has_clusters() const { return c_.clusters.has_value(); }
  const LabelColumn& clusters() const;
  bool has_size_measure() const { return c_.size_measure.has_value(); }
  std::span<const double> size_measure() const;

  const std::vector<std::string>& covariate_names() const { return c_.covariate_names; }
  std::string source_id(std::size_t i) const;

  const Columns& columns() const { return c_; }

  /// Copy with the size measure replaced (e.g. residual-driven PPS sizes).
  FinitePopulation with_size_measure(std::vector<double> sizes) const;

 private:
  Columns c_;
};

/// Column-role mapping for delimited text input. Empty names mean "absent".
struct PopulationSchema {
  std::string id_col;
  std::string y_col;
  std::vector<std::string> x_cols;
  std::string stratum_col;
  std::string cluster_col;
  std::string size_col;
  ResponseKind response = ResponseKind::kReal;
};

struct LoadedPopulation {
  FinitePopulation population;
  std::size_t dropped_rows = 0;
};

/// Reads a CSV with a header row. Rows with a missing value ("", "NA",
/// "NaN") in any mapped column are dropped and counted.
LoadedPopulation load_population(const std::string& path, const PopulationSchema& schema);

/// Writes a CSV that load_population reads back field-for-field with
/// schema_for_written().
void write_population(const FinitePopulation& pop, const std::string& path);
PopulationSchema schema_for_written(const FinitePopulation& pop);

struct SyntheticPopSpec {
  std::size_t n_units = 6000;
  std::size_t n_strata = 1;
  std::size_t n_clusters = 1;
  std::size_t covariate_dim = 3;
  double noise_scale = 50.0;
  /// 0: size measure independent of y. 1: y is the size measure.
  double informativeness = 0.0;
  /// Log-scale standard deviation of the lognormal size measure.
  double size_dispersion = 1.0;
  /// 0 for a real response; K >= 2 for multinomial-logistic labels 0..K-1.
  int n_classes = 0;
  std::uint64_t seed = 1;
};

FinitePopulation generate_population(const SyntheticPopSpec& spec);

}  // namespace svyconform
