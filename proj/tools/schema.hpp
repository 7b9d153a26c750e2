#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace fedld::cli {

// Structural validators for every file the CLI emits. Each throws ParseError
// naming the offending line or field.

void validate_results_csv(const std::string& path);
void validate_metrics_csv(const std::string& path);
void validate_table_csv(const std::string& path);
void validate_summary_json(const nlohmann::json& doc);
void validate_budget_json(const nlohmann::json& doc);
void validate_analyze_json(const nlohmann::json& doc);
void validate_error_json(const nlohmann::json& doc);
void validate_trace_summary_json(const nlohmann::json& doc);

/// Validates results/metrics/table CSVs and summary.json in a run directory.
void validate_run_directory(const std::string& dir);

}  // namespace fedld::cli
