#pragma once

#include <string>
#include <string_view>

#include "svyconform/simharness.hpp"

namespace svyconform {

enum class ReportFormat { kTable, kCsv, kJson };
ReportFormat parse_report_format(std::string_view text);
/// "txt", "csv" or "json".
std::string_view file_extension(ReportFormat format);

/// One line per (method, alpha): flags, coverage with its interval, mean
/// length with its interval, vacuous rate. Band results follow.
std::string report_to_table(const CoverageReport& report);

/// Method rows only, one per (method, alpha). Doubles use the shortest
/// round-trip text, so report_from_csv(report_to_csv(r)) reproduces r.rows.
std::string report_to_csv(const CoverageReport& report);
CoverageReport report_from_csv(std::string_view text);

/// Rows plus band results. Non-finite numbers are written as the strings
/// "nan", "inf" and "-inf".
std::string report_to_json(const CoverageReport& report);
CoverageReport report_from_json(std::string_view text);

/// Writes the report to `path`; throws IoError when the file cannot be written.
void emit_report(const CoverageReport& report, ReportFormat format, const std::string& path);

}  // namespace svyconform
