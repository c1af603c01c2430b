#include "svyconform/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "svyconform/error.hpp"
#include "svyconform/kernels.hpp"
#include "svyconform/rng.hpp"

namespace svyconform {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kUnsupervised: return "unsupervised";
    case Task::kRegression: return "regression";
    case Task::kClassification: return "classification";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  for (auto t : {Task::kUnsupervised, Task::kRegression, Task::kClassification})
    if (text == to_string(t)) return t;
  throw InvalidInput("unknown task '" + std::string(text) + "' (expected unsupervised, regression or classification)");
}

std::string_view to_string(Engine engine) {
  switch (engine) {
    case Engine::kSplit: return "split";
    case Engine::kStratified: return "stratified";
    case Engine::kClusterSubsampleOnce: return "cluster-sub1";
    case Engine::kClusterRepeated: return "cluster-subB";
    case Engine::kClusterDouble: return "cluster-double";
    case Engine::kClusterPooled: return "cluster-pool";
  }
  return "?";
}

Engine parse_engine(std::string_view text) {
  for (auto e : {Engine::kSplit, Engine::kStratified, Engine::kClusterSubsampleOnce, Engine::kClusterRepeated,
                 Engine::kClusterDouble, Engine::kClusterPooled})
    if (text == to_string(e)) return e;
  throw InvalidInput("unknown engine '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
  require(!methods.empty(), "experiment '" + name + "' has an empty method matrix");
  require(replicates >= 1, "replicates must be >= 1");
  require(!alphas.empty(), "at least one alpha is required");
  for (double a : alphas) require(a > 0.0 && a < 1.0, "each alpha must lie strictly inside (0,1)");
  require(split_fraction > 0.0 && split_fraction < 1.0, "split_fraction must lie strictly inside (0,1)");
  require(subsamples >= 1, "subsamples must be >= 1");
  require(population.synthetic.has_value() != !population.file.empty(),
          "population must be either synthetic or a file, not both");
  std::vector<std::string> labels;
  for (const auto& m : methods) {
    require(!m.label.empty(), "every method needs a label");
    require(std::find(labels.begin(), labels.end(), m.label) == labels.end(),
            "duplicate method label '" + m.label + "'");
    labels.push_back(m.label);
  }
}

const MethodRow* CoverageReport::find(const std::string& label, double alpha) const {
  for (const auto& r : rows)
    if (r.method.label == label && std::abs(r.alpha - alpha) < 1e-12) return &r;
  return nullptr;
}

bool CoverageReport::all_bands_pass() const {
  return std::all_of(bands.begin(), bands.end(), [](const BandResult& b) { return b.passed; });
}

double naive_quantile_baseline(std::span<const double> scores, double beta) {
  require(!scores.empty(), "naive quantile of an empty score set");
  return SortedScores(scores).order_statistic(beta);
}

FinitePopulation materialize_population(const ExperimentConfig& cfg) {
  FinitePopulation pop = cfg.population.synthetic ? generate_population(*cfg.population.synthetic)
                                                  : load_population(cfg.population.file, cfg.population.schema).population;
  if (cfg.size_source == SizeSource::kResiduals) {
    require(pop.response_kind() == ResponseKind::kReal, "residual sizes need a real response");
    const auto model = fit_ols(MatrixView{pop.x_data(), pop.size(), pop.dim()}, pop.y_data());
    std::vector<double> sizes(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) sizes[i] = 1.0 + std::sqrt(model.score(pop.x(i), pop.y(i)));
    pop = pop.with_size_measure(std::move(sizes));
  }
  return pop;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cell {
  double coverage = 0.0;
  double length = 0.0;  // NaN when every region was vacuous
  double vacuous = 0.0;
  std::vector<double> stratum_coverage;
};

std::string skip_reason(const ExperimentConfig& cfg, const FinitePopulation& pop, const MethodSpec& m) {
  const auto& d = cfg.design;
  const bool cluster_engine = m.engine != Engine::kSplit && m.engine != Engine::kStratified;
  if (m.weighted_model && cfg.task == Task::kUnsupervised) return "no model is fitted in the unsupervised task";
  if (m.engine == Engine::kStratified) {
    if (d.kind != DesignKind::kStratified) return "stratified engine needs a stratified design";
    const bool within_srs = d.within_stratum_kind == DesignKind::kSrsWor || d.within_stratum_kind == DesignKind::kSrsWr;
    if (!m.use_weights && !within_srs && cfg.check_design)
      return "within-stratum design is not exchangeable; enable use_weights";
  }
  if (cluster_engine) {
    if (d.kind != DesignKind::kCluster) return "cluster engines need a cluster design";
    if (cfg.task == Task::kClassification) return "cluster engines produce intervals, not label sets";
    if (m.use_weights) return "cluster engines do not use design weights";
    if (m.engine == Engine::kClusterDouble && cfg.task != Task::kUnsupervised)
      return "double conformal applies to the unsupervised task only";
    if (!m.conformal && (m.engine == Engine::kClusterRepeated || m.engine == Engine::kClusterDouble))
      return "engine has no naive counterpart";
  }
  if (m.engine == Engine::kSplit && !m.use_weights && !d.exchangeable() && cfg.check_design)
    return "design is not exchangeable; enable use_weights";
  if (cfg.task == Task::kClassification && pop.response_kind() != ResponseKind::kCategorical)
    return "classification needs a categorical response";
  if (cfg.task != Task::kClassification && pop.response_kind() != ResponseKind::kReal)
    return "interval tasks need a real response";
  return {};
}

double population_median(std::span<const double> y) {
  std::vector<double> v(y.begin(), y.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

class Replicate {
 public:
  Replicate(const ExperimentConfig& cfg, const FinitePopulation& pop, std::span<const double> pop_weights,
            std::span<const int> groups, int n_groups, std::size_t r)
      : cfg_(cfg), pop_(pop), pop_weights_(pop_weights), groups_(groups), n_groups_(n_groups), r_(r) {}

  std::vector<Cell> run(const std::vector<char>& active, double center) {
    Rng draw_rng(derive_seed(cfg_.seed, Stream::kDraw, r_));
    const DrawnSample sample = draw(pop_, cfg_.design, draw_rng);
    if (cfg_.task == Task::kUnsupervised) {
      calibration_ = sample;
      fitted_[0] = ScoreModel::constant(center);
    } else {
      Rng split_rng(derive_seed(cfg_.seed, Stream::kSplit, r_));
      auto split = design_split(sample, cfg_.split_fraction, split_rng);
      train_ = std::move(split.train);
      calibration_ = std::move(split.calibration);
    }
    std::vector<Cell> out(cfg_.methods.size() * cfg_.alphas.size());
    for (std::size_t m = 0; m < cfg_.methods.size(); ++m) {
      if (!active[m]) continue;
      const auto& method = cfg_.methods[m];
      const int slot = method.weighted_model ? 1 : 0;
      model_for(slot);
      for (std::size_t a = 0; a < cfg_.alphas.size(); ++a) {
        Rng sub_rng(derive_seed(derive_seed(cfg_.seed, Stream::kSubsample, r_), Stream::kMisc, m));
        out[m * cfg_.alphas.size() + a] = evaluate(method, slot, cfg_.alphas[a], sub_rng);
      }
    }
    return out;
  }

 private:
  // Slot 0 holds the unweighted fit (or the constant center), slot 1 the
  // design-weighted fit.
  const ScoreModel& model_for(int slot) {
    const bool weighted = slot == 1;
    if (fitted_[slot]) return *fitted_[slot];
    const std::size_t d = pop_.dim();
    std::vector<double> xs(train_.size() * d), ys(train_.size());
    for (std::size_t i = 0; i < train_.size(); ++i) {
      const auto u = train_.index(i);
      std::copy(pop_.x(u).begin(), pop_.x(u).end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
      ys[i] = pop_.y(u);
    }
    const MatrixView xv{xs, train_.size(), d};
    std::optional<std::span<const double>> w;
    if (weighted) w = std::span<const double>(train_.base_weight);
    fitted_[slot] = cfg_.task == Task::kClassification
                        ? fit_multinomial_logit(xv, ys, pop_.n_classes(), w)
                        : fit_ols(xv, ys, w, pop_.covariate_names());
    return *fitted_[slot];
  }

  const std::vector<double>& centers(int slot_index) {
    const ScoreModel& model = *fitted_[slot_index];
    auto& slot = centers_[slot_index];
    if (slot.empty())
      slot = cfg_.task == Task::kClassification ? kernels::predict_proba_all(model, pop_, ExecPolicy::kSerial)
                                                : kernels::predict_all(model, pop_, ExecPolicy::kSerial);
    return slot;
  }

  // Per-unit (or broadcast) score cutoff for one method at one level.
  std::vector<double> cutoffs(const MethodSpec& method, const ScoreModel& model, double alpha, Rng& rng) {
    const double beta = 1.0 - alpha;
    switch (method.engine) {
      case Engine::kSplit: {
        const auto ctx = CalibrationContext::from_sample(pop_, calibration_, model, alpha);
        return split_cutoffs(ctx, method, beta, pop_weights_);
      }
      case Engine::kStratified: {
        const auto strata = StratifiedCalibration::from_sample(pop_, calibration_, model, alpha);
        const auto& codes = pop_.strata().codes;
        std::vector<double> out(pop_.size(), kInf);
        for (const auto& [h, ctx] : strata.contexts()) {
          std::vector<std::size_t> units;
          std::vector<double> w;
          for (std::size_t i = 0; i < pop_.size(); ++i)
            if (codes[i] == h) {
              units.push_back(i);
              w.push_back(pop_weights_[i]);
            }
          const auto q = split_cutoffs(ctx, method, beta, w);
          for (std::size_t j = 0; j < units.size(); ++j) out[units[j]] = q.size() == 1 ? q[0] : q[j];
        }
        return out;
      }
      case Engine::kClusterSubsampleOnce: {
        const auto cal = ClusterCalibration::from_sample(pop_, calibration_, model, alpha);
        const auto ctx = cluster_subsample_once(cal, rng);
        return {method.conformal ? ctx.unweighted_quantile().as_double() : ctx.sorted().order_statistic(beta)};
      }
      case Engine::kClusterRepeated: {
        const auto cal = ClusterCalibration::from_sample(pop_, calibration_, model, alpha);
        return {cluster_repeated_subsample_radius(cal, cfg_.subsamples, rng).as_double()};
      }
      case Engine::kClusterDouble: {
        const auto cal = ClusterCalibration::from_sample(pop_, calibration_, model, alpha);
        const auto region = cluster_double_conformal(cal);
        // Symmetric around the center by construction.
        return {region.upper - model.predict({})};
      }
      case Engine::kClusterPooled: {
        const auto cal = ClusterCalibration::from_sample(pop_, calibration_, model, alpha);
        if (method.conformal) return {cluster_pooled_cdf_radius(cal, cfg_.pooled_padding).as_double()};
        std::vector<double> s, w;
        for (const auto& g : cal.groups())
          for (double v : g) {
            s.push_back(v);
            w.push_back(1.0 / static_cast<double>(g.size()));
          }
        return {WeightedScoreCdf(s, w).unpadded_quantile(beta)};
      }
    }
    return {};
  }

  static std::vector<double> split_cutoffs(const CalibrationContext& ctx, const MethodSpec& method, double beta,
                                           std::span<const double> test_weights) {
    if (!method.use_weights)
      return {method.conformal ? ctx.unweighted_quantile().as_double() : ctx.sorted().order_statistic(beta)};
    if (!method.conformal) return {ctx.weighted_cdf().unpadded_quantile(beta)};
    return kernels::weighted_radii(ctx.weighted_cdf(), beta, test_weights, ExecPolicy::kSerial);
  }

  Cell evaluate(const MethodSpec& method, int slot, double alpha, Rng& rng) {
    const auto q = cutoffs(method, *fitted_[slot], alpha, rng);
    const auto& c = centers(slot);
    const kernels::Tally t =
        cfg_.task == Task::kClassification
            ? kernels::tally_sets(c, pop_.n_classes(), q, pop_.y_data(), groups_, n_groups_, ExecPolicy::kSerial)
            : kernels::tally_intervals(c, q, pop_.y_data(), groups_, n_groups_, ExecPolicy::kSerial);
    Cell cell;
    const auto units = static_cast<double>(t.units);
    cell.coverage = static_cast<double>(t.covered) / units;
    cell.vacuous = static_cast<double>(t.vacuous) / units;
    const std::size_t finite = cfg_.task == Task::kClassification ? t.units : t.units - t.vacuous;
    cell.length = finite == 0 ? std::numeric_limits<double>::quiet_NaN() : t.length_sum / static_cast<double>(finite);
    for (std::size_t g = 0; g < t.group_units.size(); ++g)
      cell.stratum_coverage.push_back(t.group_units[g] == 0 ? std::numeric_limits<double>::quiet_NaN()
                                                            : static_cast<double>(t.group_covered[g]) /
                                                                  static_cast<double>(t.group_units[g]));
    return cell;
  }

  const ExperimentConfig& cfg_;
  const FinitePopulation& pop_;
  std::span<const double> pop_weights_;
  std::span<const int> groups_;
  int n_groups_;
  std::size_t r_;
  DrawnSample train_;
  DrawnSample calibration_;
  std::optional<ScoreModel> fitted_[2];
  std::vector<double> centers_[2];
};

struct Summary {
  double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;
  std::size_t count = 0;
};

// mean +/- 2 SD / sqrt(R), skipping NaN entries.
Summary summarize(const std::vector<double>& v) {
  Summary s;
  long double sum = 0.0L;
  for (double x : v)
    if (!std::isnan(x)) {
      sum += x;
      ++s.count;
    }
  if (s.count == 0) {
    s.mean = s.sd = s.lo = s.hi = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = static_cast<double>(sum / static_cast<long double>(s.count));
  long double ss = 0.0L;
  for (double x : v)
    if (!std::isnan(x)) ss += (x - s.mean) * (x - s.mean);
  s.sd = s.count > 1 ? std::sqrt(static_cast<double>(ss / static_cast<long double>(s.count - 1))) : 0.0;
  const double half = 2.0 * s.sd / std::sqrt(static_cast<double>(s.count));
  s.lo = s.mean - half;
  s.hi = s.mean + half;
  return s;
}

}  // namespace

CoverageReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, materialize_population(cfg));
}

CoverageReport run_experiment(const ExperimentConfig& cfg, const FinitePopulation& pop) {
  cfg.validate();
  validate(cfg.design, pop);
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_alphas = cfg.alphas.size();

  CoverageReport report;
  report.experiment = cfg.name;
  std::vector<char> active(n_methods);
  std::vector<std::string> reasons(n_methods);
  for (std::size_t m = 0; m < n_methods; ++m) {
    reasons[m] = skip_reason(cfg, pop, cfg.methods[m]);
    active[m] = reasons[m].empty();
  }

  const auto pop_weights = population_weights(pop, cfg.design);
  std::vector<int> groups;
  std::vector<std::string> group_names;
  if (pop.has_strata()) {
    groups = pop.strata().codes;
    group_names = pop.strata().names;
  }
  const int n_groups = static_cast<int>(group_names.size());
  const double center = cfg.center.value_or(pop.response_kind() == ResponseKind::kReal ? population_median(pop.y_data())
                                                                                       : 0.0);

  std::vector<std::vector<Cell>> results(cfg.replicates);
  std::string failure;
  std::mutex failure_mutex;
  auto run_one = [&](std::size_t r) {
    try {
      Replicate rep(cfg, pop, pop_weights, groups, n_groups, r);
      results[r] = rep.run(active, center);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (failure.empty()) failure = "replicate " + std::to_string(r) + ": " + e.what();
    }
  };
  const auto R = static_cast<long>(cfg.replicates);
  if (cfg.policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < R; ++r) run_one(static_cast<std::size_t>(r));
  } else {
    for (long r = 0; r < R; ++r) run_one(static_cast<std::size_t>(r));
  }
  if (!failure.empty()) throw Error("experiment '" + cfg.name + "' failed in " + failure);

  for (std::size_t m = 0; m < n_methods; ++m) {
    for (std::size_t a = 0; a < n_alphas; ++a) {
      MethodRow row;
      row.method = cfg.methods[m];
      row.alpha = cfg.alphas[a];
      row.stratum_names = group_names;
      if (!active[m]) {
        row.skipped = reasons[m];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.coverage_mean = row.coverage_sd = row.coverage_lo = row.coverage_hi = nan;
        row.length_mean = row.length_lo = row.length_hi = row.vacuous_rate = nan;
        row.stratum_coverage.assign(group_names.size(), nan);
        report.rows.push_back(std::move(row));
        continue;
      }
      const std::size_t k = m * n_alphas + a;
      std::vector<double> cov, len, vac;
      std::vector<std::vector<double>> strat(group_names.size());
      for (const auto& res : results) {
        cov.push_back(res[k].coverage);
        len.push_back(res[k].length);
        vac.push_back(res[k].vacuous);
        for (std::size_t g = 0; g < strat.size(); ++g) strat[g].push_back(res[k].stratum_coverage[g]);
      }
      const auto c = summarize(cov);
      const auto l = summarize(len);
      row.replicates = cfg.replicates;
      row.coverage_mean = c.mean;
      row.coverage_sd = c.sd;
      row.coverage_lo = std::max(0.0, c.lo);
      row.coverage_hi = std::min(1.0, c.hi);
      row.length_mean = l.mean;
      row.length_lo = l.lo;
      row.length_hi = l.hi;
      row.vacuous_rate = summarize(vac).mean;
      for (const auto& s : strat) row.stratum_coverage.push_back(summarize(s).mean);
      report.rows.push_back(std::move(row));
    }
  }
  report.bands = evaluate_bands(report, cfg.bands);
  return report;
}

namespace {

std::optional<double> metric_of(const MethodRow& row, const std::string& metric) {
  if (metric == "coverage") return row.coverage_mean;
  if (metric == "length") return row.length_mean;
  if (metric == "vacuous_rate") return row.vacuous_rate;
  if (metric == "min_stratum_coverage") {
    if (row.stratum_coverage.empty()) return std::nullopt;
    double m = kInf;
    for (double v : row.stratum_coverage)
      if (!std::isnan(v)) m = std::min(m, v);
    return m;
  }
  throw InvalidInput("unknown band metric '" + metric + "'");
}

}  // namespace

std::vector<BandResult> evaluate_bands(const CoverageReport& report, std::span<const Band> bands) {
  std::vector<BandResult> out;
  for (const auto& band : bands) {
    BandResult br;
    br.band = band;
    br.value = std::numeric_limits<double>::quiet_NaN();
    const MethodRow* row = report.find(band.method, band.alpha);
    if (row == nullptr || !row->skipped.empty()) {
      br.detail = row == nullptr ? "no such method/alpha in the report" : "method was skipped: " + row->skipped;
      out.push_back(std::move(br));
      continue;
    }
    const auto v = metric_of(*row, band.metric);
    if (!v || std::isnan(*v)) {
      br.detail = "metric unavailable";
      out.push_back(std::move(br));
      continue;
    }
    br.value = *v;
    br.passed = true;
    std::string detail;
    auto fail = [&](const std::string& why) {
      br.passed = false;
      detail += (detail.empty() ? "" : "; ") + why;
    };
    if (band.min && !(*v >= *band.min)) fail("below minimum " + std::to_string(*band.min));
    if (band.max && !(*v <= *band.max)) fail("above maximum " + std::to_string(*band.max));
    auto compare = [&](const std::string& other, bool want_less) {
      if (other.empty()) return;
      const MethodRow* o = report.find(other, band.alpha);
      const auto ov = (o && o->skipped.empty()) ? metric_of(*o, band.metric) : std::nullopt;
      if (!ov || std::isnan(*ov)) return fail("comparison method '" + other + "' unavailable");
      if (want_less ? !(*v < *ov) : !(*v > *ov))
        fail(std::string("not ") + (want_less ? "below" : "above") + " '" + other + "' (" + std::to_string(*ov) + ")");
    };
    compare(band.less_than, true);
    compare(band.greater_than, false);
    br.detail = br.passed ? "ok" : detail;
    out.push_back(std::move(br));
  }
  return out;
}

}  // namespace svyconform
