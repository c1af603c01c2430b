#include "svyconform/population.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "svyconform/csv.hpp"
#include "svyconform/error.hpp"
#include "svyconform/rng.hpp"

namespace svyconform {

std::vector<std::vector<std::size_t>> LabelColumn::members() const {
  std::vector<std::vector<std::size_t>> out(names.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    out[static_cast<std::size_t>(codes[i])].push_back(i);
  return out;
}

LabelColumn encode_labels(const std::vector<std::string>& raw) {
  LabelColumn col;
  std::map<std::string, int> index;
  col.codes.reserve(raw.size());
  for (const auto& r : raw) {
    auto [it, inserted] = index.emplace(r, static_cast<int>(col.names.size()));
    if (inserted) col.names.push_back(r);
    col.codes.push_back(it->second);
  }
  return col;
}

FinitePopulation::FinitePopulation(Columns columns) : c_(std::move(columns)) {
  const std::size_t n = c_.y.size();
  require(n >= 1, "population must contain at least one unit");
  require(c_.x.size() == n * c_.dim,
          "covariate table has inconsistent dimension: expected " +
              std::to_string(n * c_.dim) + " values, got " + std::to_string(c_.x.size()));
  if (c_.covariate_names.empty())
    for (std::size_t j = 0; j < c_.dim; ++j) c_.covariate_names.push_back("x" + std::to_string(j + 1));
  require(c_.covariate_names.size() == c_.dim, "covariate name count differs from dimension");
  for (double v : c_.x) require(std::isfinite(v), "covariates must be finite");
  for (double v : c_.y) require(std::isfinite(v), "responses must be finite");
  if (c_.strata) {
    require(c_.strata->codes.size() == n, "stratum labels must be given for every unit");
  }
  if (c_.clusters) {
    require(c_.clusters->codes.size() == n, "cluster labels must be given for every unit");
  }
  if (c_.size_measure) {
    require(c_.size_measure->size() == n, "size measure must be given for every unit");
    for (double s : *c_.size_measure)
      require(std::isfinite(s) && s > 0.0, "size measure must be strictly positive");
  }
  if (c_.response == ResponseKind::kCategorical) {
    require(!c_.class_names.empty(), "categorical response needs class names");
    const double k = static_cast<double>(c_.class_names.size());
    for (double v : c_.y)
      require(v >= 0 && v < k && v == std::floor(v), "class label out of range 0..K-1");
  }
  require(c_.source_ids.empty() || c_.source_ids.size() == n, "source id count differs from N");
}

const LabelColumn& FinitePopulation::strata() const {
  if (!c_.strata) throw InvalidInput("population has no stratum labels");
  return *c_.strata;
}

const LabelColumn& FinitePopulation::clusters() const {
  if (!c_.clusters) throw InvalidInput("population has no cluster labels");
  return *c_.clusters;
}

std::span<const double> FinitePopulation::size_measure() const {
  if (!c_.size_measure) throw InvalidInput("population has no size measure");
  return *c_.size_measure;
}

std::string FinitePopulation::source_id(std::size_t i) const {
  return c_.source_ids.empty() ? std::to_string(i + 1) : c_.source_ids[i];
}

FinitePopulation FinitePopulation::with_size_measure(std::vector<double> sizes) const {
  Columns c = c_;
  c.size_measure = std::move(sizes);
  return FinitePopulation(std::move(c));
}

// ---------------------------------------------------------------------------
// Delimited text

namespace {

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "N/A";
}

std::size_t column_or_throw(const csv::Table& t, const std::string& name, const std::string& role) {
  auto c = t.column(name);
  if (!c) throw InvalidInput(role + " column '" + name + "' not found in header");
  return *c;
}

}  // namespace

LoadedPopulation load_population(const std::string& path, const PopulationSchema& schema) {
  const csv::Table table = csv::read_file(path);
  require(!schema.y_col.empty(), "schema must name a response column");

  std::vector<std::size_t> mapped;
  const std::size_t y_idx = column_or_throw(table, schema.y_col, "response");
  mapped.push_back(y_idx);
  std::optional<std::size_t> id_idx, s_idx, c_idx, z_idx;
  if (!schema.id_col.empty()) id_idx = column_or_throw(table, schema.id_col, "id");
  std::vector<std::size_t> x_idx;
  for (const auto& xc : schema.x_cols) x_idx.push_back(column_or_throw(table, xc, "covariate"));
  if (!schema.stratum_col.empty()) s_idx = column_or_throw(table, schema.stratum_col, "stratum");
  if (!schema.cluster_col.empty()) c_idx = column_or_throw(table, schema.cluster_col, "cluster");
  if (!schema.size_col.empty()) z_idx = column_or_throw(table, schema.size_col, "size");
  for (auto i : x_idx) mapped.push_back(i);
  for (auto o : {id_idx, s_idx, c_idx, z_idx})
    if (o) mapped.push_back(*o);

  FinitePopulation::Columns cols;
  cols.dim = x_idx.size();
  cols.covariate_names = schema.x_cols;
  cols.response = schema.response;
  std::vector<std::string> strata_raw, clusters_raw, y_raw;
  std::vector<double> sizes;
  std::size_t dropped = 0;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (std::any_of(mapped.begin(), mapped.end(), [&](std::size_t c) { return is_missing(row[c]); })) {
      ++dropped;
      continue;
    }
    const std::string where = " at data row " + std::to_string(r + 1);
    for (auto c : x_idx) {
      auto v = csv::parse_double(row[c]);
      if (!v) throw InvalidInput("non-numeric covariate '" + row[c] + "'" + where);
      cols.x.push_back(*v);
    }
    if (schema.response == ResponseKind::kReal) {
      auto v = csv::parse_double(row[y_idx]);
      if (!v) throw InvalidInput("non-numeric response '" + row[y_idx] + "'" + where);
      cols.y.push_back(*v);
    } else {
      y_raw.push_back(row[y_idx]);
    }
    if (z_idx) {
      auto v = csv::parse_double(row[*z_idx]);
      if (!v) throw InvalidInput("non-numeric size measure" + where);
      if (!(*v > 0.0)) throw InvalidInput("non-positive size measure " + row[*z_idx] + where);
      sizes.push_back(*v);
    }
    if (s_idx) strata_raw.push_back(row[*s_idx]);
    if (c_idx) clusters_raw.push_back(row[*c_idx]);
    if (id_idx) cols.source_ids.push_back(row[*id_idx]);
  }
  require(!y_raw.empty() || !cols.y.empty(), "no complete rows in '" + path + "'");

  if (schema.response == ResponseKind::kCategorical) {
    // Integer labels 0..K-1 are used as-is; anything else is coded in
    // sorted order.
    bool integral = true;
    long max_label = -1;
    for (const auto& s : y_raw) {
      auto v = csv::parse_double(s);
      if (!v || *v < 0 || *v != std::floor(*v)) {
        integral = false;
        break;
      }
      max_label = std::max(max_label, static_cast<long>(*v));
    }
    if (integral) {
      for (long k = 0; k <= max_label; ++k) cols.class_names.push_back(std::to_string(k));
      for (const auto& s : y_raw) cols.y.push_back(*csv::parse_double(s));
    } else {
      std::set<std::string> distinct(y_raw.begin(), y_raw.end());
      std::map<std::string, int> code;
      for (const auto& s : distinct) {
        code[s] = static_cast<int>(cols.class_names.size());
        cols.class_names.push_back(s);
      }
      for (const auto& s : y_raw) cols.y.push_back(code[s]);
    }
  }
  if (z_idx) cols.size_measure = std::move(sizes);
  if (s_idx) cols.strata = encode_labels(strata_raw);
  if (c_idx) cols.clusters = encode_labels(clusters_raw);

  std::set<std::string> seen;
  for (const auto& id : cols.source_ids)
    require(seen.insert(id).second, "duplicate id '" + id + "' in '" + path + "'");

  return LoadedPopulation{FinitePopulation(std::move(cols)), dropped};
}

PopulationSchema schema_for_written(const FinitePopulation& pop) {
  PopulationSchema s;
  s.id_col = "id";
  s.y_col = "y";
  s.x_cols = pop.covariate_names();
  if (pop.has_strata()) s.stratum_col = "stratum";
  if (pop.has_clusters()) s.cluster_col = "cluster";
  if (pop.has_size_measure()) s.size_col = "size";
  s.response = pop.response_kind();
  return s;
}

void write_population(const FinitePopulation& pop, const std::string& path) {
  const auto schema = schema_for_written(pop);
  csv::Table t;
  t.header.push_back(schema.id_col);
  t.header.push_back(schema.y_col);
  for (const auto& n : schema.x_cols) t.header.push_back(n);
  if (pop.has_strata()) t.header.push_back(schema.stratum_col);
  if (pop.has_clusters()) t.header.push_back(schema.cluster_col);
  if (pop.has_size_measure()) t.header.push_back(schema.size_col);

  for (std::size_t i = 0; i < pop.size(); ++i) {
    std::vector<std::string> row;
    row.push_back(pop.source_id(i));
    if (pop.response_kind() == ResponseKind::kCategorical)
      row.push_back(pop.class_names()[static_cast<std::size_t>(pop.y(i))]);
    else
      row.push_back(csv::format_double(pop.y(i)));
    for (double v : pop.x(i)) row.push_back(csv::format_double(v));
    if (pop.has_strata()) row.push_back(pop.strata().names[pop.strata().codes[i]]);
    if (pop.has_clusters()) row.push_back(pop.clusters().names[pop.clusters().codes[i]]);
    if (pop.has_size_measure()) row.push_back(csv::format_double(pop.size_measure()[i]));
    t.rows.push_back(std::move(row));
  }
  csv::write_file(path, t);
}

// ---------------------------------------------------------------------------
// Synthetic populations

FinitePopulation generate_population(const SyntheticPopSpec& spec) {
  require(spec.n_units >= 1, "n_units must be >= 1");
  require(spec.n_clusters >= 1 && spec.n_clusters <= spec.n_units, "need 1 <= n_clusters <= n_units");
  require(spec.n_strata >= 1 && spec.n_strata <= spec.n_units, "need 1 <= n_strata <= n_units");
  require(spec.noise_scale > 0.0, "noise_scale must be positive");
  require(spec.informativeness >= 0.0 && spec.informativeness <= 1.0, "informativeness must lie in [0,1]");
  require(spec.size_dispersion >= 0.0, "size_dispersion must be non-negative");
  require(spec.n_classes == 0 || spec.n_classes >= 2, "n_classes must be 0 or >= 2");

  const std::size_t n = spec.n_units;
  const std::size_t d = spec.covariate_dim;
  const std::size_t H = spec.n_strata;
  const std::size_t K = spec.n_clusters;
  Rng rng(derive_seed(spec.seed, Stream::kPopulation, 0));

  FinitePopulation::Columns cols;
  cols.dim = d;
  cols.x.resize(n * d);
  for (auto& v : cols.x) v = rng.normal();

  // Strata: contiguous id blocks with sizes proportional to H-h, every block
  // non-empty. Later (smaller) strata are less noisy.
  std::vector<int> stratum(n, 0);
  {
    const double total = static_cast<double>(H * (H + 1) / 2);
    std::vector<std::size_t> sizes(H, 1);
    std::size_t assigned = H;
    for (std::size_t h = 0; h < H; ++h) {
      auto extra = static_cast<std::size_t>(std::floor(static_cast<double>(n - H) * static_cast<double>(H - h) / total));
      sizes[h] += extra;
      assigned += extra;
    }
    sizes[0] += n - assigned;
    std::size_t i = 0;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t c = 0; c < sizes[h]; ++c) stratum[i++] = static_cast<int>(h);
  }

  // Clusters: one unit each, then the rest spread by lognormal cluster
  // weights so sizes are heterogeneous. Assignment order is shuffled.
  std::vector<int> cluster(n, 0);
  std::vector<double> cluster_effect(K, 0.0);
  if (K > 1) {
    std::vector<double> cum(K);
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      acc += std::exp(rng.normal());
      cum[k] = acc;
    }
    std::vector<int> labels(n);
    for (std::size_t k = 0; k < K; ++k) labels[k] = static_cast<int>(k);
    for (std::size_t i = K; i < n; ++i) {
      const double u = rng.uniform() * acc;
      auto it = std::upper_bound(cum.begin(), cum.end(), u);
      labels[i] = static_cast<int>(std::min<std::size_t>(it - cum.begin(), K - 1));
    }
    shuffle(labels, rng);
    cluster = std::move(labels);
    for (auto& e : cluster_effect) e = 0.5 * spec.noise_scale * rng.normal();
  }

  std::vector<double> size(n);
  for (auto& s : size) s = spec.noise_scale * std::exp(spec.size_dispersion * rng.normal());

  cols.y.resize(n);
  if (spec.n_classes == 0) {
    const double iota = spec.informativeness;
    for (std::size_t i = 0; i < n; ++i) {
      double signal = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        signal += 0.5 * spec.noise_scale * static_cast<double>(j + 1) * cols.x[i * d + j];
      const double mult = 1.0 + 0.5 * static_cast<double>(H - 1 - static_cast<std::size_t>(stratum[i]));
      const double reg = signal + cluster_effect[static_cast<std::size_t>(cluster[i])] +
                         spec.noise_scale * mult * rng.normal();
      cols.y[i] = iota == 1.0 ? size[i] : (1.0 - iota) * reg + iota * size[i];
    }
  } else {
    // Multinomial logistic truth with class 0 as reference.
    const auto k_classes = static_cast<std::size_t>(spec.n_classes);
    std::vector<double> logits(k_classes);
    for (std::size_t i = 0; i < n; ++i) {
      logits[0] = 0.0;
      for (std::size_t k = 1; k < k_classes; ++k) {
        double eta = 0.3 * static_cast<double>(k);
        for (std::size_t j = 0; j < d; ++j)
          eta += 1.5 * std::cos(static_cast<double>(2 * k + 3 * j)) * cols.x[i * d + j];
        logits[k] = eta;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      double u = rng.uniform() * z;
      std::size_t label = 0;
      while (label + 1 < k_classes && u >= logits[label]) u -= logits[label++];
      cols.y[i] = static_cast<double>(label);
    }
    cols.response = ResponseKind::kCategorical;
    for (int k = 0; k < spec.n_classes; ++k) cols.class_names.push_back(std::to_string(k));
  }

  std::vector<std::string> sn(H), cn(K);
  for (std::size_t h = 0; h < H; ++h) sn[h] = "S" + std::to_string(h + 1);
  for (std::size_t k = 0; k < K; ++k) cn[k] = "C" + std::to_string(k + 1);
  cols.strata = LabelColumn{stratum, sn};
  cols.clusters = LabelColumn{cluster, cn};
  cols.size_measure = std::move(size);
  return FinitePopulation(std::move(cols));
}

}  // namespace svyconform
