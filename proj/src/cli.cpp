#include "svyconform/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "svyconform/cluster.hpp"
#include "svyconform/config.hpp"
#include "svyconform/conformal.hpp"
#include "svyconform/csv.hpp"
#include "svyconform/designs.hpp"
#include "svyconform/error.hpp"
#include "svyconform/report.hpp"
#include "svyconform/simharness.hpp"

namespace svyconform {

namespace {

struct SchemaFlags {
  std::string id_col = "id";
  std::string y_col = "y";
  std::string x_cols;
  std::string stratum_col;
  std::string cluster_col;
  std::string size_col;

  void attach(CLI::App* app) {
    app->add_option("--id-col", id_col, "Unit id column")->capture_default_str();
    app->add_option("--y-col", y_col, "Response column")->capture_default_str();
    app->add_option("--x-cols", x_cols, "Comma-separated covariate columns");
    app->add_option("--stratum-col", stratum_col, "Stratum label column");
    app->add_option("--cluster-col", cluster_col, "Cluster label column");
    app->add_option("--size-col", size_col, "Size measure column (PPS designs)");
  }

  PopulationSchema schema(ResponseKind response) const {
    PopulationSchema s;
    s.id_col = id_col;
    s.y_col = y_col;
    s.x_cols = csv::split(x_cols, ',');
    s.stratum_col = stratum_col;
    s.cluster_col = cluster_col;
    s.size_col = size_col;
    s.response = response;
    return s;
  }
};

std::map<std::string, std::size_t> parse_allocation(const std::string& text) {
  std::map<std::string, std::size_t> out;
  for (const auto& part : csv::split(text, ',')) {
    const auto eq = part.rfind('=');
    require(eq != std::string::npos && eq > 0, "allocation entries look like NAME=COUNT, got '" + part + "'");
    const auto count = csv::parse_double(part.substr(eq + 1));
    require(count && *count >= 0 && *count == std::floor(*count), "allocation count must be a whole number: '" + part + "'");
    out[part.substr(0, eq)] = static_cast<std::size_t>(*count);
  }
  return out;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const auto& part : csv::split(text, ',')) {
    const auto v = csv::parse_double(part);
    require(v.has_value(), std::string("malformed number in ") + what + ": '" + part + "'");
    out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  SyntheticPopSpec spec;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const auto pop = generate_population(a.spec);
  write_population(pop, a.out);
  out << "wrote " << pop.size() << " units to " << a.out << "\n";
  return 0;
}

struct DrawArgs {
  std::string population;
  SchemaFlags schema;
  std::string design = "srs-wor";
  std::size_t n = 0;
  std::string alloc;
  std::string within = "srs-wor";
  std::size_t within_cluster_n = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_draw(const DrawArgs& a, std::ostream& out, std::ostream& err) {
  const auto loaded = load_population(a.population, a.schema.schema(ResponseKind::kReal));
  if (loaded.dropped_rows) err << "dropped " << loaded.dropped_rows << " rows with missing values\n";
  const auto& pop = loaded.population;
  DesignSpec spec;
  spec.kind = parse_design_kind(a.design);
  spec.n = a.n;
  if (!a.alloc.empty()) spec.allocation = parse_allocation(a.alloc);
  spec.within_stratum_kind = parse_design_kind(a.within);
  spec.within_cluster_n = a.within_cluster_n;
  spec.size_measure_col = a.schema.size_col;
  spec.seed = a.seed;
  const auto sample = draw(pop, spec);

  csv::Table t;
  const auto schema = a.schema.schema(ResponseKind::kReal);
  t.header = {schema.id_col, schema.y_col};
  for (const auto& x : schema.x_cols) t.header.push_back(x);
  if (pop.has_strata()) t.header.push_back(schema.stratum_col);
  if (pop.has_clusters()) t.header.push_back(schema.cluster_col);
  if (pop.has_size_measure()) t.header.push_back(schema.size_col);
  t.header.push_back("weight");
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto u = sample.index(i);
    std::vector<std::string> row{pop.source_id(u), csv::format_double(pop.y(u))};
    for (double v : pop.x(u)) row.push_back(csv::format_double(v));
    if (pop.has_strata()) row.push_back(pop.strata().names[static_cast<std::size_t>(pop.strata().codes[u])]);
    if (pop.has_clusters()) row.push_back(pop.clusters().names[static_cast<std::size_t>(pop.clusters().codes[u])]);
    if (pop.has_size_measure()) row.push_back(csv::format_double(pop.size_measure()[u]));
    row.push_back(csv::format_double(sample.base_weight[i]));
    t.rows.push_back(std::move(row));
  }
  if (a.out.empty()) {
    csv::write(out, t);
  } else {
    csv::write_file(a.out, t);
    out << "drew " << sample.size() << " units (" << to_string(spec.kind) << ") to " << a.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string train;
  std::string test;
  SchemaFlags schema;
  std::string weight_col = "weight";
  std::string design = "srs-wor";
  std::string task = "regression";
  std::string method = "split";
  double alpha = 0.1;
  double split_frac = 0.5;
  std::uint64_t seed = 1;
  std::optional<double> test_weight;
  std::string test_weight_col;
  std::optional<double> max_weight;
  std::string weight_grid;
  bool weighted_fit = false;
  std::size_t subsamples = 20;
  std::size_t grid_points = 200;
  std::string pooled_padding = "phantom-unit";
  std::string out;
};

struct TestRow {
  std::string id;
  std::vector<double> x;
  std::string stratum;
  std::optional<double> weight;
};

std::vector<TestRow> read_test_rows(const PredictArgs& a, const PopulationSchema& schema) {
  const auto t = csv::read_file(a.test);
  const auto id = t.column(schema.id_col);
  std::vector<std::size_t> xi;
  for (const auto& name : schema.x_cols) {
    const auto c = t.column(name);
    require(c.has_value(), "test file lacks covariate column '" + name + "'");
    xi.push_back(*c);
  }
  std::optional<std::size_t> si, wi;
  if (!schema.stratum_col.empty()) si = t.column(schema.stratum_col);
  if (!a.test_weight_col.empty()) {
    wi = t.column(a.test_weight_col);
    require(wi.has_value(), "test file lacks weight column '" + a.test_weight_col + "'");
  }
  std::vector<TestRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    TestRow row;
    row.id = id ? f[*id] : std::to_string(r + 1);
    for (auto c : xi) {
      const auto v = csv::parse_double(f[c]);
      require(v && std::isfinite(*v), "test row " + row.id + ": covariate '" + t.header[c] + "' is missing or not a number");
      row.x.push_back(*v);
    }
    if (si) row.stratum = f[*si];
    if (wi) {
      row.weight = csv::parse_double(f[*wi]);
      require(row.weight && *row.weight > 0, "test row " + row.id + ": weight must be a positive number");
    } else if (a.test_weight) {
      row.weight = *a.test_weight;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string label_text(const PredictionRegion& r, const std::vector<std::string>& names) {
  std::string s;
  for (int l : r.labels) s += (s.empty() ? "" : ";") + names[static_cast<std::size_t>(l)];
  return s;
}

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const Task task = parse_task(a.task);
  const auto schema = a.schema.schema(task == Task::kClassification ? ResponseKind::kCategorical : ResponseKind::kReal);
  if (task == Task::kUnsupervised) require(schema.x_cols.empty(), "unsupervised prediction takes no covariates");
  // With-replacement samples repeat ids, so the training file is read
  // without an id column; the weight column rides in the size slot so that
  // it stays aligned with the rows kept.
  auto train_schema = schema;
  train_schema.id_col.clear();
  train_schema.size_col.clear();
  const bool has_weights = csv::read_file(a.train).column(a.weight_col).has_value();
  if (has_weights) train_schema.size_col = a.weight_col;
  const auto loaded = load_population(a.train, train_schema);
  if (loaded.dropped_rows) err << "dropped " << loaded.dropped_rows << " training rows with missing values\n";
  const FinitePopulation& pop = loaded.population;

  // The training file is a drawn sample; its rows are the draws.
  DrawnSample sample;
  sample.design.kind = parse_design_kind(a.design);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    sample.unit_ids.push_back(i + 1);
    sample.base_weight.push_back(has_weights ? pop.size_measure()[i] : 1.0);
  }
  if (!has_weights && !sample.design.exchangeable())
    err << "warning: no '" << a.weight_col << "' column; using unit weights\n";
  if (pop.has_strata()) sample.stratum_of = pop.strata().codes;
  if (pop.has_clusters()) sample.cluster_of = pop.clusters().codes;
  const auto rows = read_test_rows(a, schema);
  const std::size_t d = pop.dim();

  auto fit = [&](const DrawnSample& part) {
    std::vector<double> xs(part.size() * d), ys(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto u = part.index(i);
      std::copy(pop.x(u).begin(), pop.x(u).end(), xs.begin() + static_cast<std::ptrdiff_t>(i * d));
      ys[i] = pop.y(u);
    }
    std::optional<std::span<const double>> w;
    if (a.weighted_fit) w = std::span<const double>(part.base_weight);
    const MatrixView xv{xs, part.size(), d};
    return task == Task::kClassification ? fit_multinomial_logit(xv, ys, pop.n_classes(), w)
                                         : fit_ols(xv, ys, w, pop.covariate_names());
  };

  csv::Table t;
  const bool sets = task == Task::kClassification;
  t.header = sets ? std::vector<std::string>{"id", "labels", "level", "method", "vacuous"}
                  : std::vector<std::string>{"id", "lower", "upper", "level", "method", "vacuous"};
  const bool grid_mode = !a.weight_grid.empty();
  if (grid_mode) t.header.push_back("test_weight");
  auto emit = [&](const std::string& id, const PredictionRegion& r, std::optional<double> w) {
    std::vector<std::string> row{id};
    if (sets) {
      row.push_back(label_text(r, pop.class_names()));
    } else {
      row.push_back(csv::format_double(r.lower));
      row.push_back(csv::format_double(r.upper));
    }
    row.push_back(csv::format_double(r.level));
    row.push_back(r.method);
    row.push_back(r.vacuous ? "1" : "0");
    if (grid_mode) row.push_back(w ? csv::format_double(*w) : "");
    t.rows.push_back(std::move(row));
    for (const auto& warning : r.warnings) err << "row " << id << ": " << warning << "\n";
  };

  if (a.method == "full") {
    require(!sets, "full conformal produces intervals; use split for classification");
    std::vector<double> xs(pop.x_data().begin(), pop.x_data().end());
    for (const auto& row : rows) {
      FullConformalOptions opt;
      if (row.weight) {
        opt.weights = sample.base_weight;
        opt.test_weight = *row.weight;
        opt.weighted_fit = a.weighted_fit;
      } else if (!sample.design.exchangeable()) {
        throw DesignMismatch("training design is not exchangeable; pass --test-weight or --test-weight-col");
      }
      GridSpec grid;
      grid.points = a.grid_points;
      emit(row.id, full_conformal_interval(MatrixView{xs, pop.size(), d}, pop.y_data(), row.x, a.alpha, grid, opt),
           row.weight);
    }
  } else {
    Rng split_rng(derive_seed(a.seed, Stream::kSplit, 0));
    const auto split = design_split(sample, a.split_frac, split_rng);
    for (int h : split.flagged_strata)
      err << "warning: stratum '" << pop.strata().names[static_cast<std::size_t>(h)]
          << "' is too small to split and was used for training only\n";
    const ScoreModel model = fit(split.train);

    if (a.method == "split") {
      const auto ctx = CalibrationContext::from_sample(pop, split.calibration, model, a.alpha);
      for (const auto& row : rows) {
        if (grid_mode) {
          require(!sets, "--weight-grid applies to intervals");
          const auto grid = parse_list(a.weight_grid, "--weight-grid");
          const auto regions = split_interval_sensitivity(ctx, row.x, grid);
          for (std::size_t g = 0; g < grid.size(); ++g) emit(row.id, regions[g], grid[g]);
        } else if (a.max_weight) {
          require(!sets, "--max-weight applies to intervals");
          emit(row.id, split_interval_conservative(ctx, row.x, *a.max_weight), a.max_weight);
        } else if (sets) {
          emit(row.id, classification_set(ctx, row.x, row.weight), row.weight);
        } else if (row.weight) {
          emit(row.id, split_interval_weighted(ctx, row.x, *row.weight), row.weight);
        } else {
          emit(row.id, split_interval_exchangeable(ctx, row.x), std::nullopt);
        }
      }
    } else if (a.method == "stratified") {
      require(!sets, "stratified engine produces intervals");
      require(pop.has_strata(), "stratified prediction needs --stratum-col");
      const auto strata = StratifiedCalibration::from_sample(pop, split.calibration, model, a.alpha);
      const auto& names = pop.strata().names;
      for (const auto& row : rows) {
        const auto it = std::find(names.begin(), names.end(), row.stratum);
        require(it != names.end(), "test row " + row.id + ": stratum '" + row.stratum + "' is not in the training data");
        emit(row.id, stratified_interval(strata, row.x, static_cast<int>(it - names.begin()), row.weight), row.weight);
      }
    } else if (a.method.rfind("cluster-", 0) == 0) {
      require(!sets, "cluster engines produce intervals");
      require(pop.has_clusters(), "cluster prediction needs --cluster-col");
      const auto cal = ClusterCalibration::from_sample(pop, split.calibration, model, a.alpha);
      Rng rng(derive_seed(a.seed, Stream::kSubsample, 0));
      std::optional<Cutoff> radius;
      std::optional<PredictionRegion> fixed;
      if (a.method == "cluster-sub1") {
        radius = cluster_subsample_once(cal, rng).unweighted_quantile();
      } else if (a.method == "cluster-subB") {
        radius = cluster_repeated_subsample_radius(cal, a.subsamples, rng);
      } else if (a.method == "cluster-pool") {
        require(a.pooled_padding == "phantom-unit" || a.pooled_padding == "phantom-cluster",
                "--pooled-padding must be phantom-unit or phantom-cluster");
        radius = cluster_pooled_cdf_radius(
            cal, a.pooled_padding == "phantom-unit" ? PooledPadding::kPhantomUnit : PooledPadding::kPhantomCluster);
      } else if (a.method == "cluster-double") {
        fixed = cluster_double_conformal(cal);
      } else {
        throw InvalidInput("unknown method '" + a.method + "'");
      }
      for (const auto& row : rows)
        emit(row.id, fixed ? *fixed : cluster_interval(cal, row.x, *radius, a.method), std::nullopt);
    } else {
      throw InvalidInput("unknown method '" + a.method + "'");
    }
  }
  if (a.out.empty()) {
    csv::write(out, t);
  } else {
    csv::write_file(a.out, t);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out = "results";
  bool serial = false;
  std::optional<std::size_t> replicates;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  auto experiments = load_experiments(a.config);
  std::filesystem::create_directories(a.out);
  bool all_pass = true;
  for (auto& cfg : experiments) {
    if (a.serial) cfg.policy = ExecPolicy::kSerial;
    if (a.replicates) cfg.replicates = *a.replicates;
    const auto report = run_experiment(cfg);
    const auto base = (std::filesystem::path(a.out) / cfg.name).string();
    for (auto f : {ReportFormat::kTable, ReportFormat::kCsv, ReportFormat::kJson})
      emit_report(report, f, base + "." + std::string(file_extension(f)));
    std::ofstream echo(base + ".config.json", std::ios::binary);
    if (!echo) throw IoError("cannot write '" + base + ".config.json'");
    echo << experiment_to_json(cfg);
    out << report_to_table(report) << "\n";
    all_pass = all_pass && report.all_bands_pass();
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Design-based conformal prediction for survey samples"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic finite population");
  g->add_option("--out", gen.out, "Output CSV")->required();
  g->add_option("--n-units", gen.spec.n_units)->capture_default_str();
  g->add_option("--n-strata", gen.spec.n_strata)->capture_default_str();
  g->add_option("--n-clusters", gen.spec.n_clusters)->capture_default_str();
  g->add_option("--covariate-dim", gen.spec.covariate_dim)->capture_default_str();
  g->add_option("--noise-scale", gen.spec.noise_scale)->capture_default_str();
  g->add_option("--informativeness", gen.spec.informativeness)->capture_default_str();
  g->add_option("--size-dispersion", gen.spec.size_dispersion)->capture_default_str();
  g->add_option("--n-classes", gen.spec.n_classes, "0 for a real response")->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();

  DrawArgs dr;
  auto* d = app.add_subcommand("draw", "Draw one sample from a population file");
  d->add_option("--population", dr.population, "Population CSV")->required();
  dr.schema.attach(d);
  d->add_option("--design", dr.design, "srs-wr, srs-wor, pps-wr, pps-wor, stratified or cluster")->capture_default_str();
  d->add_option("--n", dr.n, "Sample size, or number of clusters");
  d->add_option("--alloc", dr.alloc, "Stratum allocation NAME=COUNT,...");
  d->add_option("--within", dr.within, "Design inside each stratum")->capture_default_str();
  d->add_option("--within-cluster-n", dr.within_cluster_n, "Units per sampled cluster (0 = all)");
  d->add_option("--seed", dr.seed)->capture_default_str();
  d->add_option("--out", dr.out, "Output CSV (stdout when omitted)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Conformal regions for test rows");
  p->add_option("--train", pr.train, "Drawn sample CSV with a weight column")->required();
  p->add_option("--test", pr.test, "Test rows CSV")->required();
  pr.schema.attach(p);
  p->add_option("--weight-col", pr.weight_col, "Base weight column of the training file")->capture_default_str();
  p->add_option("--design", pr.design, "Design that produced the training file")->capture_default_str();
  p->add_option("--task", pr.task, "regression, unsupervised or classification")->capture_default_str();
  p->add_option("--method", pr.method,
                "split, full, stratified, cluster-sub1, cluster-subB, cluster-double or cluster-pool")
      ->capture_default_str();
  p->add_option("--alpha", pr.alpha)->capture_default_str();
  p->add_option("--split-frac", pr.split_frac, "Proper-training fraction")->capture_default_str();
  p->add_option("--seed", pr.seed)->capture_default_str();
  auto* tw = p->add_option("--test-weight", pr.test_weight, "Design weight of every test unit");
  auto* twc = p->add_option("--test-weight-col", pr.test_weight_col, "Per-row test weight column");
  auto* mw = p->add_option("--max-weight", pr.max_weight, "Largest population weight (conservative mode)");
  auto* wg = p->add_option("--weight-grid", pr.weight_grid, "Comma-separated test weights (sensitivity mode)");
  tw->excludes(twc)->excludes(mw)->excludes(wg);
  twc->excludes(mw)->excludes(wg);
  mw->excludes(wg);
  p->add_flag("--weighted-fit", pr.weighted_fit, "Fit the model with the base weights");
  p->add_option("--subsamples", pr.subsamples, "B for cluster-subB")->capture_default_str();
  p->add_option("--grid-points", pr.grid_points, "Grid size for full conformal")->capture_default_str();
  p->add_option("--pooled-padding", pr.pooled_padding, "phantom-unit or phantom-cluster")->capture_default_str();
  p->add_option("--out", pr.out, "Output CSV (stdout when omitted)");

  SimulateArgs si;
  auto* s = app.add_subcommand("simulate", "Run Monte Carlo coverage experiments");
  s->add_option("--config", si.config, "Experiment JSON")->required();
  s->add_option("--out", si.out, "Results directory")->capture_default_str();
  s->add_flag("--serial", si.serial, "Run replicates serially");
  s->add_option("--replicates", si.replicates, "Override the replicate count");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (g->parsed()) return cmd_generate(gen, out);
    if (d->parsed()) return cmd_draw(dr, out, err);
    if (p->parsed()) return cmd_predict(pr, out, err);
    if (s->parsed()) return cmd_simulate(si, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace svyconform
