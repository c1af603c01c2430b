#include "svyconform/report.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "svyconform/csv.hpp"
#include "svyconform/error.hpp"

namespace svyconform {

using nlohmann::json;

ReportFormat parse_report_format(std::string_view text) {
  if (text == "table" || text == "txt") return ReportFormat::kTable;
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "json") return ReportFormat::kJson;
  throw InvalidInput("unknown report format '" + std::string(text) + "' (expected table, csv or json)");
}

std::string_view file_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::kTable: return "txt";
    case ReportFormat::kCsv: return "csv";
    case ReportFormat::kJson: return "json";
  }
  return "txt";
}

namespace {

const std::vector<std::string> kColumns = {
    "experiment",  "label",       "engine",      "use_weights", "conformal",     "weighted_model",
    "alpha",       "replicates",  "coverage_mean", "coverage_sd", "coverage_lo", "coverage_hi",
    "length_mean", "length_lo",   "length_hi",   "vacuous_rate", "stratum_coverage", "skipped"};

std::string num(double v) { return csv::format_double(v); }

double parse_num(const std::string& text, const char* what) {
  auto v = csv::parse_double(text);
  if (!v) throw IoError(std::string("report field '") + what + "' is not a number: '" + text + "'");
  return *v;
}

bool parse_flag(const std::string& text, const char* what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw IoError(std::string("report field '") + what + "' is not a boolean: '" + text + "'");
}

std::string strata_text(const MethodRow& r) {
  std::string s;
  for (std::size_t g = 0; g < r.stratum_names.size(); ++g)
    s += (g ? ";" : "") + r.stratum_names[g] + "=" + num(r.stratum_coverage[g]);
  return s;
}

void parse_strata(const std::string& text, MethodRow& r) {
  for (const auto& part : csv::split(text, ';')) {
    const auto eq = part.rfind('=');
    if (eq == std::string::npos) throw IoError("malformed stratum coverage entry '" + part + "'");
    r.stratum_names.push_back(part.substr(0, eq));
    r.stratum_coverage.push_back(parse_num(part.substr(eq + 1), "stratum_coverage"));
  }
}

json jnum(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double from_jnum(const json& j) {
  if (j.is_string()) return parse_num(j.get<std::string>(), "number");
  return j.get<double>();
}

std::string pct(double v) { return std::isnan(v) ? "-" : fmt::format("{:.4f}", v); }
std::string len(double v) { return std::isnan(v) ? "-" : fmt::format("{:.2f}", v); }

}  // namespace

std::string report_to_csv(const CoverageReport& report) {
  csv::Table t;
  t.header = kColumns;
  for (const auto& r : report.rows) {
    const auto& m = r.method;
    t.rows.push_back({report.experiment, m.label, std::string(to_string(m.engine)), m.use_weights ? "true" : "false",
                      m.conformal ? "true" : "false", m.weighted_model ? "true" : "false", num(r.alpha),
                      std::to_string(r.replicates), num(r.coverage_mean), num(r.coverage_sd), num(r.coverage_lo),
                      num(r.coverage_hi), num(r.length_mean), num(r.length_lo), num(r.length_hi),
                      num(r.vacuous_rate), strata_text(r), r.skipped});
  }
  std::ostringstream out;
  csv::write(out, t);
  return out.str();
}

CoverageReport report_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  const auto t = csv::read(in);
  if (t.header != kColumns) throw IoError("report CSV header does not match the report layout");
  CoverageReport report;
  for (const auto& f : t.rows) {
    if (f.size() != kColumns.size()) throw IoError("report CSV row has the wrong number of fields");
    report.experiment = f[0];
    MethodRow r;
    r.method.label = f[1];
    r.method.engine = parse_engine(f[2]);
    r.method.use_weights = parse_flag(f[3], "use_weights");
    r.method.conformal = parse_flag(f[4], "conformal");
    r.method.weighted_model = parse_flag(f[5], "weighted_model");
    r.alpha = parse_num(f[6], "alpha");
    r.replicates = static_cast<std::size_t>(std::stoull(f[7]));
    r.coverage_mean = parse_num(f[8], "coverage_mean");
    r.coverage_sd = parse_num(f[9], "coverage_sd");
    r.coverage_lo = parse_num(f[10], "coverage_lo");
    r.coverage_hi = parse_num(f[11], "coverage_hi");
    r.length_mean = parse_num(f[12], "length_mean");
    r.length_lo = parse_num(f[13], "length_lo");
    r.length_hi = parse_num(f[14], "length_hi");
    r.vacuous_rate = parse_num(f[15], "vacuous_rate");
    parse_strata(f[16], r);
    r.skipped = f[17];
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string report_to_json(const CoverageReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json strata = json::array();
    for (std::size_t g = 0; g < r.stratum_names.size(); ++g)
      strata.push_back({{"stratum", r.stratum_names[g]}, {"coverage", jnum(r.stratum_coverage[g])}});
    rows.push_back({{"label", r.method.label},
                    {"engine", std::string(to_string(r.method.engine))},
                    {"use_weights", r.method.use_weights},
                    {"conformal", r.method.conformal},
                    {"weighted_model", r.method.weighted_model},
                    {"alpha", jnum(r.alpha)},
                    {"replicates", r.replicates},
                    {"coverage_mean", jnum(r.coverage_mean)},
                    {"coverage_sd", jnum(r.coverage_sd)},
                    {"coverage_lo", jnum(r.coverage_lo)},
                    {"coverage_hi", jnum(r.coverage_hi)},
                    {"length_mean", jnum(r.length_mean)},
                    {"length_lo", jnum(r.length_lo)},
                    {"length_hi", jnum(r.length_hi)},
                    {"vacuous_rate", jnum(r.vacuous_rate)},
                    {"stratum_coverage", strata},
                    {"skipped", r.skipped}});
  }
  json bands = json::array();
  for (const auto& b : report.bands) {
    json jb = {{"method", b.band.method}, {"alpha", jnum(b.band.alpha)}, {"metric", b.band.metric},
               {"value", jnum(b.value)},  {"passed", b.passed},          {"detail", b.detail}};
    if (b.band.min) jb["min"] = jnum(*b.band.min);
    if (b.band.max) jb["max"] = jnum(*b.band.max);
    if (!b.band.less_than.empty()) jb["less_than"] = b.band.less_than;
    if (!b.band.greater_than.empty()) jb["greater_than"] = b.band.greater_than;
    bands.push_back(std::move(jb));
  }
  json doc = {{"experiment", report.experiment}, {"rows", rows}, {"bands", bands}};
  return doc.dump(2) + "\n";
}

CoverageReport report_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("report JSON does not parse: ") + e.what());
  }
  CoverageReport report;
  try {
    report.experiment = doc.at("experiment").get<std::string>();
    for (const auto& j : doc.at("rows")) {
      MethodRow r;
      r.method.label = j.at("label").get<std::string>();
      r.method.engine = parse_engine(j.at("engine").get<std::string>());
      r.method.use_weights = j.at("use_weights").get<bool>();
      r.method.conformal = j.at("conformal").get<bool>();
      r.method.weighted_model = j.at("weighted_model").get<bool>();
      r.alpha = from_jnum(j.at("alpha"));
      r.replicates = j.at("replicates").get<std::size_t>();
      r.coverage_mean = from_jnum(j.at("coverage_mean"));
      r.coverage_sd = from_jnum(j.at("coverage_sd"));
      r.coverage_lo = from_jnum(j.at("coverage_lo"));
      r.coverage_hi = from_jnum(j.at("coverage_hi"));
      r.length_mean = from_jnum(j.at("length_mean"));
      r.length_lo = from_jnum(j.at("length_lo"));
      r.length_hi = from_jnum(j.at("length_hi"));
      r.vacuous_rate = from_jnum(j.at("vacuous_rate"));
      for (const auto& s : j.at("stratum_coverage")) {
        r.stratum_names.push_back(s.at("stratum").get<std::string>());
        r.stratum_coverage.push_back(from_jnum(s.at("coverage")));
      }
      r.skipped = j.at("skipped").get<std::string>();
      report.rows.push_back(std::move(r));
    }
    if (doc.contains("bands"))
      for (const auto& j : doc.at("bands")) {
        BandResult b;
        b.band.method = j.at("method").get<std::string>();
        b.band.alpha = from_jnum(j.at("alpha"));
        b.band.metric = j.at("metric").get<std::string>();
        if (j.contains("min")) b.band.min = from_jnum(j.at("min"));
        if (j.contains("max")) b.band.max = from_jnum(j.at("max"));
        b.band.less_than = j.value("less_than", "");
        b.band.greater_than = j.value("greater_than", "");
        b.value = from_jnum(j.at("value"));
        b.passed = j.at("passed").get<bool>();
        b.detail = j.at("detail").get<std::string>();
        report.bands.push_back(std::move(b));
      }
  } catch (const json::exception& e) {
    throw IoError(std::string("report JSON has an unexpected layout: ") + e.what());
  }
  return report;
}

std::string report_to_table(const CoverageReport& report) {
  std::string out = fmt::format("experiment: {}\n", report.experiment);
  out += fmt::format("{:<24} {:<15} {:>4} {:>4} {:>4} {:>6}  {:<26} {:<30} {:>8}\n", "method", "engine", "wts",
                     "conf", "wfit", "level", "coverage (CI)", "length (CI)", "vacuous");
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  for (const auto& r : report.rows) {
    const auto& m = r.method;
    if (!r.skipped.empty()) {
      out += fmt::format("{:<24} {:<15} {:>4} {:>4} {:>4} {:>6.3f}  skipped: {}\n", m.label, to_string(m.engine),
                         yn(m.use_weights), yn(m.conformal), yn(m.weighted_model), 1.0 - r.alpha, r.skipped);
      continue;
    }
    out += fmt::format("{:<24} {:<15} {:>4} {:>4} {:>4} {:>6.3f}  {:<26} {:<30} {:>8}\n", m.label, to_string(m.engine),
                       yn(m.use_weights), yn(m.conformal), yn(m.weighted_model), 1.0 - r.alpha,
                       fmt::format("{} ({}, {})", pct(r.coverage_mean), pct(r.coverage_lo), pct(r.coverage_hi)),
                       fmt::format("{} ({}, {})", len(r.length_mean), len(r.length_lo), len(r.length_hi)),
                       pct(r.vacuous_rate));
    for (std::size_t g = 0; g < r.stratum_names.size() && r.stratum_names.size() > 1; ++g)
      out += fmt::format("    stratum {:<12} coverage {}\n", r.stratum_names[g], pct(r.stratum_coverage[g]));
  }
  for (const auto& b : report.bands)
    out += fmt::format("band {} {} @ {:.3f}: {} [{}] {}\n", b.band.method, b.band.metric, 1.0 - b.band.alpha,
                       b.passed ? "PASS" : "FAIL", std::isnan(b.value) ? "-" : fmt::format("{:.4f}", b.value),
                       b.detail);
  return out;
}

void emit_report(const CoverageReport& report, ReportFormat format, const std::string& path) {
  std::string text;
  switch (format) {
    case ReportFormat::kTable: text = report_to_table(report); break;
    case ReportFormat::kCsv: text = report_to_csv(report); break;
    case ReportFormat::kJson: text = report_to_json(report); break;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace svyconform
