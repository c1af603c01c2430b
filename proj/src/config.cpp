#include "svyconform/config.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "svyconform/error.hpp"

namespace svyconform {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InvalidInput(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw InvalidInput("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = obj.at(key).get<T>();
}

DesignSpec design_from(const json& j) {
  check_keys(j, {"kind", "n", "allocation", "within_stratum_kind", "within_cluster_n", "size_measure_col", "seed"},
             "design");
  DesignSpec d;
  d.kind = parse_design_kind(j.at("kind").get<std::string>());
  read_opt(j, "n", d.n);
  if (j.contains("allocation"))
    for (const auto& [name, count] : j.at("allocation").items()) d.allocation[name] = count.get<std::size_t>();
  if (j.contains("within_stratum_kind"))
    d.within_stratum_kind = parse_design_kind(j.at("within_stratum_kind").get<std::string>());
  read_opt(j, "within_cluster_n", d.within_cluster_n);
  read_opt(j, "size_measure_col", d.size_measure_col);
  read_opt(j, "seed", d.seed);
  return d;
}

json design_json(const DesignSpec& d) {
  json j = {{"kind", std::string(to_string(d.kind))}, {"n", d.n}, {"seed", d.seed}};
  if (!d.allocation.empty()) {
    j["allocation"] = json::object();
    for (const auto& [name, count] : d.allocation) j["allocation"][name] = count;
    j["within_stratum_kind"] = std::string(to_string(d.within_stratum_kind));
  }
  if (d.within_cluster_n) j["within_cluster_n"] = d.within_cluster_n;
  if (!d.size_measure_col.empty()) j["size_measure_col"] = d.size_measure_col;
  return j;
}

PopulationSource population_from(const json& j, const std::string& base_dir) {
  check_keys(j, {"synthetic", "file", "schema"}, "population");
  PopulationSource p;
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    check_keys(s,
               {"n_units", "n_strata", "n_clusters", "covariate_dim", "noise_scale", "informativeness",
                "size_dispersion", "n_classes", "seed"},
               "population.synthetic");
    SyntheticPopSpec spec;
    read_opt(s, "n_units", spec.n_units);
    read_opt(s, "n_strata", spec.n_strata);
    read_opt(s, "n_clusters", spec.n_clusters);
    read_opt(s, "covariate_dim", spec.covariate_dim);
    read_opt(s, "noise_scale", spec.noise_scale);
    read_opt(s, "informativeness", spec.informativeness);
    read_opt(s, "size_dispersion", spec.size_dispersion);
    read_opt(s, "n_classes", spec.n_classes);
    read_opt(s, "seed", spec.seed);
    p.synthetic = spec;
  }
  if (j.contains("file")) {
    std::filesystem::path f = j.at("file").get<std::string>();
    if (f.is_relative() && !base_dir.empty()) f = std::filesystem::absolute(std::filesystem::path(base_dir) / f);
    p.file = f.string();
    require(j.contains("schema"), "a population file needs a schema");
    const auto& s = j.at("schema");
    check_keys(s, {"id_col", "y_col", "x_cols", "stratum_col", "cluster_col", "size_col", "response"},
               "population.schema");
    read_opt(s, "id_col", p.schema.id_col);
    read_opt(s, "y_col", p.schema.y_col);
    read_opt(s, "x_cols", p.schema.x_cols);
    read_opt(s, "stratum_col", p.schema.stratum_col);
    read_opt(s, "cluster_col", p.schema.cluster_col);
    read_opt(s, "size_col", p.schema.size_col);
    std::string response = "real";
    read_opt(s, "response", response);
    require(response == "real" || response == "categorical", "schema response must be real or categorical");
    p.schema.response = response == "real" ? ResponseKind::kReal : ResponseKind::kCategorical;
  }
  return p;
}

json population_json(const PopulationSource& p) {
  json j = json::object();
  if (p.synthetic) {
    const auto& s = *p.synthetic;
    j["synthetic"] = {{"n_units", s.n_units},
                      {"n_strata", s.n_strata},
                      {"n_clusters", s.n_clusters},
                      {"covariate_dim", s.covariate_dim},
                      {"noise_scale", s.noise_scale},
                      {"informativeness", s.informativeness},
                      {"size_dispersion", s.size_dispersion},
                      {"n_classes", s.n_classes},
                      {"seed", s.seed}};
  }
  if (!p.file.empty()) {
    j["file"] = p.file;
    const auto& s = p.schema;
    j["schema"] = {{"id_col", s.id_col},
                   {"y_col", s.y_col},
                   {"x_cols", s.x_cols},
                   {"stratum_col", s.stratum_col},
                   {"cluster_col", s.cluster_col},
                   {"size_col", s.size_col},
                   {"response", s.response == ResponseKind::kReal ? "real" : "categorical"}};
  }
  return j;
}

ExperimentConfig experiment_from(const json& j, const std::string& base_dir) {
  check_keys(j,
             {"name", "population", "task", "design", "size_source", "methods", "alphas", "replicates",
              "split_fraction", "seed", "center", "subsamples", "pooled_padding", "check_design", "bands", "policy"},
             "experiment");
  ExperimentConfig c;
  read_opt(j, "name", c.name);
  c.population = population_from(j.at("population"), base_dir);
  if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
  c.design = design_from(j.at("design"));
  if (j.contains("size_source")) {
    const auto s = j.at("size_source").get<std::string>();
    require(s == "column" || s == "residuals", "size_source must be column or residuals");
    c.size_source = s == "column" ? SizeSource::kColumn : SizeSource::kResiduals;
  }
  c.methods.clear();
  for (const auto& m : j.at("methods")) {
    check_keys(m, {"label", "engine", "use_weights", "conformal", "weighted_model"}, "method");
    MethodSpec spec;
    spec.label = m.at("label").get<std::string>();
    if (m.contains("engine")) spec.engine = parse_engine(m.at("engine").get<std::string>());
    read_opt(m, "use_weights", spec.use_weights);
    read_opt(m, "conformal", spec.conformal);
    read_opt(m, "weighted_model", spec.weighted_model);
    c.methods.push_back(std::move(spec));
  }
  read_opt(j, "alphas", c.alphas);
  read_opt(j, "replicates", c.replicates);
  read_opt(j, "split_fraction", c.split_fraction);
  read_opt(j, "seed", c.seed);
  if (j.contains("center") && !j.at("center").is_null()) c.center = j.at("center").get<double>();
  read_opt(j, "subsamples", c.subsamples);
  if (j.contains("pooled_padding")) {
    const auto s = j.at("pooled_padding").get<std::string>();
    require(s == "phantom-unit" || s == "phantom-cluster", "pooled_padding must be phantom-unit or phantom-cluster");
    c.pooled_padding = s == "phantom-unit" ? PooledPadding::kPhantomUnit : PooledPadding::kPhantomCluster;
  }
  read_opt(j, "check_design", c.check_design);
  if (j.contains("bands"))
    for (const auto& b : j.at("bands")) {
      check_keys(b, {"method", "alpha", "metric", "min", "max", "less_than", "greater_than"}, "band");
      Band band;
      band.method = b.at("method").get<std::string>();
      read_opt(b, "alpha", band.alpha);
      read_opt(b, "metric", band.metric);
      if (b.contains("min")) band.min = b.at("min").get<double>();
      if (b.contains("max")) band.max = b.at("max").get<double>();
      read_opt(b, "less_than", band.less_than);
      read_opt(b, "greater_than", band.greater_than);
      c.bands.push_back(std::move(band));
    }
  if (j.contains("policy")) {
    const auto s = j.at("policy").get<std::string>();
    require(s == "parallel" || s == "serial", "policy must be parallel or serial");
    c.policy = s == "parallel" ? ExecPolicy::kParallel : ExecPolicy::kSerial;
  }
  c.validate();
  return c;
}

json experiment_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (const auto& m : c.methods)
    methods.push_back({{"label", m.label},
                       {"engine", std::string(to_string(m.engine))},
                       {"use_weights", m.use_weights},
                       {"conformal", m.conformal},
                       {"weighted_model", m.weighted_model}});
  json bands = json::array();
  for (const auto& b : c.bands) {
    json jb = {{"method", b.method}, {"alpha", b.alpha}, {"metric", b.metric}};
    if (b.min) jb["min"] = *b.min;
    if (b.max) jb["max"] = *b.max;
    if (!b.less_than.empty()) jb["less_than"] = b.less_than;
    if (!b.greater_than.empty()) jb["greater_than"] = b.greater_than;
    bands.push_back(std::move(jb));
  }
  json j = {{"name", c.name},
            {"population", population_json(c.population)},
            {"task", std::string(to_string(c.task))},
            {"design", design_json(c.design)},
            {"size_source", c.size_source == SizeSource::kColumn ? "column" : "residuals"},
            {"methods", methods},
            {"alphas", c.alphas},
            {"replicates", c.replicates},
            {"split_fraction", c.split_fraction},
            {"seed", c.seed},
            {"subsamples", c.subsamples},
            {"pooled_padding", c.pooled_padding == PooledPadding::kPhantomUnit ? "phantom-unit" : "phantom-cluster"},
            {"check_design", c.check_design},
            {"bands", bands},
            {"policy", c.policy == ExecPolicy::kParallel ? "parallel" : "serial"}};
  j["center"] = c.center ? json(*c.center) : json(nullptr);
  return j;
}

template <typename F>
auto guarded(F f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("configuration error: ") + e.what());
  }
}

}  // namespace

std::vector<ExperimentConfig> parse_experiments(std::string_view json_text, const std::string& base_dir) {
  return guarded([&] {
    const json doc = json::parse(json_text);
    std::vector<ExperimentConfig> out;
    if (doc.is_object() && doc.contains("experiments")) {
      check_keys(doc, {"experiments"}, "configuration");
      for (const auto& e : doc.at("experiments")) out.push_back(experiment_from(e, base_dir));
    } else {
      out.push_back(experiment_from(doc, base_dir));
    }
    require(!out.empty(), "configuration lists no experiments");
    return out;
  });
}

std::vector<ExperimentConfig> load_experiments(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open configuration '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiments(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string experiment_to_json(const ExperimentConfig& cfg) { return experiment_json(cfg).dump(2) + "\n"; }

DesignSpec parse_design(std::string_view json_text) {
  return guarded([&] { return design_from(json::parse(json_text)); });
}

std::string design_to_json(const DesignSpec& spec) { return design_json(spec).dump(); }

}  // namespace svyconform
