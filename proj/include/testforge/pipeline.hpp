#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "testforge/assembly.hpp"
#include "testforge/clock.hpp"
#include "testforge/config.hpp"
#include "testforge/execution.hpp"
#include "testforge/llm_gateway.hpp"
#include "testforge/reporting.hpp"

namespace testforge {

struct PipelineOptions {
  std::filesystem::path workspace;  // project checkout
  std::filesystem::path out_dir;    // defaults to <workspace>/out
  RunConfig config;
  std::filesystem::path templates_dir;  // optional prompt overrides
  std::string base_branch = "main";
  bool dry_run_publish = false;
  double extraction_deadline_seconds = 30.0;
  const Clock* clock = nullptr;  // SystemClock when null
  Sleeper sleeper;               // retry backoff sleeps
  std::ostream* progress = nullptr;
  // Seams for tests; built from config when null.
  Gateway* gateway = nullptr;
  BuildAdapter* adapter = nullptr;
};

struct PipelineResult {
  RunReport report;
  std::vector<MethodOutcome> outcomes;
  std::optional<PublishPlan> publish_plan;
  std::optional<std::string> publish_error;
  std::filesystem::path out_dir;
};

/// analyze -> generate/refine per method -> merge -> failures -> final build
/// -> coverage -> report -> optional publish. Throws on run-fatal errors
/// (config targets missing, AuthError, ledger I/O); per-method failures are
/// recorded in the report instead.
PipelineResult run_pipeline(const PipelineOptions& options);

/// Builds the adapter named by the build spec; relative fake_script paths
/// are taken as given.
std::unique_ptr<BuildAdapter> make_adapter(const std::filesystem::path& workspace, const BuildSpec& spec);

}  // namespace testforge
