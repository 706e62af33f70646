#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "testforge/clock.hpp"
#include "testforge/execution.hpp"
#include "testforge/llm_gateway.hpp"

namespace testforge {

struct CoverageCounts {
  long long line_covered = 0;
  long long line_missed = 0;
  long long branch_covered = 0;
  long long branch_missed = 0;
};

struct CoverageSummary {
  long long executed_statements = 0;
  long long total_statements = 0;
  double line_percent = 0;
  long long branch_covered = 0;
  long long branch_total = 0;
  double branch_percent = 0;
  bool degenerate = false;  // no statements at all; line_percent forced to 0
  std::map<std::string, CoverageCounts> per_class;  // simple class name -> counts
};

/// JaCoCo XML. Uses the shallowest LINE/BRANCH counters (report level, else
/// summed package level, else summed class level). Throws CoverageFormatError.
CoverageSummary parse_coverage(std::string_view xml);

/// Table row for one class (or the whole run).
struct ClassStats {
  std::string name;
  int methods_count = 0;
  int generated_tests = 0;
  int total_passed = 0;
  int passed_at_1 = 0;
  int passed_by_5 = 0;
  int passed_by_10 = 0;
  std::optional<double> coverage_percent;
};

struct CostEstimate {
  double amount = 0;
  double rate_per_minute = 0;
  std::string currency;
};

/// wall_minutes x rate, rounded to cents.
CostEstimate estimate_cost(double wall_minutes, double rate_per_minute, std::string_view currency);

struct TestSummary {
  std::string test_id;
  std::string terminal;
  int passed_at = 0;
  int llm_calls = 0;
  std::vector<std::string> statuses;
  std::string note;
};

struct MethodSummary {
  std::string method_id;
  std::optional<std::string> error;
  std::vector<TestSummary> tests;
};

struct RunReport {
  std::string started_at;
  std::string finished_at;
  double wall_minutes = 0;
  int max_iterations = 0;
  std::vector<ClassStats> classes;
  ClassStats aggregate;
  long long llm_requests = 0;
  std::map<std::string, long long> requests_by_phase;
  std::optional<CostEstimate> cost;
  std::optional<CoverageSummary> coverage;
  std::vector<MethodSummary> methods;
  std::vector<std::string> merged_files;  // relative to the workspace
  std::vector<std::string> failed_files;  // relative to the out dir
  std::optional<std::string> final_build;  // status
  std::optional<std::string> publish_branch;
  bool publish_dry_run = false;
  std::vector<std::string> errors;
};

struct ReportOptions {
  int max_iterations = 5;
  std::optional<double> cost_per_minute;
  std::string currency = "€";
};

/// Buckets passing tests by the iteration they passed at; generated tests are
/// the single-test artifacts that reached iteration 1; llm_requests is the
/// number of gateway records.
RunReport compute_report(const std::vector<MethodOutcome>& outcomes, const std::vector<CompletionRecord>& records,
                         const std::optional<CoverageSummary>& coverage, TimePoint started, TimePoint finished,
                         const ReportOptions& options);

/// 94.0 -> "94%", 88.6 -> "88.6%".
std::string format_percent(double percent);

/// "MongodbCRUD (12 methods) | 38 | 29 | 94%"
std::string render_generation_row(const ClassStats& row);
/// "MongodbCRUD (12 methods) | 19 | 27 | 29"
std::string render_iteration_row(const ClassStats& row);
/// "Telemetry: 53 requests (generation 12, refinement 41, chat 0), 20 minutes"
std::string render_telemetry_line(const RunReport& report);
/// "Cost: 4.00 € (20 minutes at 0.20 €/min, 53 requests)"
std::string render_cost_line(const CostEstimate& cost, double wall_minutes, long long requests);

std::string render_report_text(const RunReport& report);
/// Stable key order; see docs/config-schema.md for the layout.
std::string render_report_json(const RunReport& report);

/// Writes out/report.json and out/report.txt.
void write_report(const RunReport& report, const std::filesystem::path& out_dir);

}  // namespace testforge
