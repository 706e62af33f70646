#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "testforge/clock.hpp"
#include "testforge/config.hpp"
#include "testforge/execution.hpp"
#include "testforge/postprocess.hpp"

namespace testforge {

/// Final name of the merged test class.
std::string merged_test_class_name(std::string_view class_name);

/// One `<Class>Test` holding every passing test method verbatim. Imports are
/// the sorted ledger union of the included tests; shared fields and helpers
/// are deduplicated (first wins); clashing test names get suffixes 2, 3, ...
/// Throws NothingToMerge, std::invalid_argument (outcome of another class).
std::string merge_passing_tests(const std::vector<RefinementOutcome>& outcomes, const ImportLedger& ledger,
                                std::string_view class_name, std::string_view package_name);

/// Writes the merged class to <workspace>/<test_root>/<package path>/<Class>Test.java.
/// Throws IoError if that file already exists.
std::filesystem::path place_merged_test(const std::filesystem::path& workspace, const BuildSpec& build,
                                        std::string_view package_name, std::string_view class_name,
                                        std::string_view source);

inline constexpr std::string_view kFailureSourceHeader = "===== FINAL TEST SOURCE =====";

/// out/failed/<TestClass>.<testMethod>.txt for every outcome that did not
/// pass: final source, then the last error lines. Throws IoError.
std::vector<std::filesystem::path> emit_failures(const std::vector<RefinementOutcome>& outcomes,
                                                 const std::filesystem::path& out_dir);

struct FinalBuild {
  bool ok = false;
  RunStatus status = RunStatus::runner_error;
  std::filesystem::path log_path;
};

/// Whole-project build; the log goes to out/logs/final-build.log. Throws
/// RunnerError.
FinalBuild final_build(BuildAdapter& adapter, const std::filesystem::path& out_dir);

/// "<base>-junit-tests-<UTC yyyyMMddHHmmss>".
std::string publish_branch_name(std::string_view base_branch, const Clock& clock);

struct PublishPlan {
  std::string branch;
  std::string base_branch;
  std::string remote;
  std::optional<std::string> remove_file;  // pipeline definition to drop
  std::vector<std::string> add_paths;      // relative to the workspace
  std::string commit_message;

  /// Human-readable plan, one command per line.
  std::string describe() const;
};

PublishPlan plan_publish(const std::filesystem::path& workspace, std::string_view base_branch, const Clock& clock,
                         const PublishSpec& spec, const std::vector<std::filesystem::path>& paths);

/// Executes the plan with git: branch, drop pipeline file, add, commit, push.
/// Any failure rolls the branch back and throws VcsError. `owned` lists paths
/// the pipeline wrote; other uncommitted changes count as a dirty clone.
/// VCS_TOKEN, when set, is sent as HTTP basic auth on push.
void execute_publish(const std::filesystem::path& workspace, const PublishPlan& plan,
                     const std::vector<std::filesystem::path>& owned);

/// Current branch of a git checkout, if it is one.
std::optional<std::string> current_git_branch(const std::filesystem::path& workspace);

}  // namespace testforge
