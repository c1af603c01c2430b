#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "svyconform/simharness.hpp"

namespace svyconform {

/// Parses a JSON document holding one experiment object or
/// {"experiments": [...]}. Unknown keys are rejected. Relative population
/// file paths are resolved against `base_dir`.
std::vector<ExperimentConfig> parse_experiments(std::string_view json_text, const std::string& base_dir = "");
std::vector<ExperimentConfig> load_experiments(const std::string& path);

/// Canonical JSON for one experiment; parse_experiments reads it back.
std::string experiment_to_json(const ExperimentConfig& cfg);

/// DesignSpec as JSON, e.g. {"kind": "stratified", "allocation": {"S1": 100}}.
DesignSpec parse_design(std::string_view json_text);
std::string design_to_json(const DesignSpec& spec);

}  // namespace svyconform
