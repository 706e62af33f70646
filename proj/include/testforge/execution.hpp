#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "testforge/config.hpp"
#include "testforge/java_analyzer.hpp"
#include "testforge/llm_gateway.hpp"
#include "testforge/postprocess.hpp"
#include "testforge/prompting.hpp"

namespace testforge {

enum class RunStatus { passed, compile_failed, test_failed, runner_error };
std::string_view to_string(RunStatus status);
std::optional<RunStatus> run_status_from_string(std::string_view s);

struct TestRunResult {
  RunStatus status = RunStatus::runner_error;
  std::filesystem::path raw_log_path;
  std::vector<std::string> error_lines;
  double duration_seconds = 0;
  int iteration = 0;
};

/// What an adapter reports for one invocation.
struct AdapterRun {
  RunStatus status = RunStatus::runner_error;
  std::string log;
  double duration_seconds = 0;
};

/// Build-tool seam: run one test, or build the whole project.
class BuildAdapter {
public:
  virtual ~BuildAdapter() = default;
  /// Runs artifact.test_method_names[0] of artifact.class_name. Throws
  /// RunnerError when the tool cannot be started at all.
  virtual AdapterRun run_test(const TestArtifact& artifact, std::string_view package_name) = 0;
  /// Full project build. Throws RunnerError.
  virtual AdapterRun build() = 0;
  /// Compiler diagnostics for a pre-run check, if this adapter has a compiler.
  virtual std::optional<std::string> compile_check(const TestArtifact&, std::string_view) { return std::nullopt; }
  virtual std::string name() const = 0;
};

/// Scripted statuses and canned logs. Steps keyed by test id
/// ("<TestClass>#<method>") or by test class are used first, then the global
/// queue. Once both are empty the test source decides: "FAKE:compile-error"
/// fails compilation, "FAKE:fail" fails the test, anything else passes.
class FakeAdapter final : public BuildAdapter {
public:
  struct Step {
    RunStatus status = RunStatus::passed;
    std::string log;
  };

  FakeAdapter() = default;
  FakeAdapter(std::deque<Step> global, std::map<std::string, std::deque<Step>> keyed = {},
              std::deque<Step> builds = {});
  FakeAdapter(FakeAdapter&& other) noexcept;

  /// YAML: {tests: [{match?, status, log?}], build: [{status, log?}]}.
  /// Throws ScriptFormatError / IoError.
  static FakeAdapter from_yaml(std::string_view yaml_text);
  static FakeAdapter load(const std::filesystem::path& path);

  AdapterRun run_test(const TestArtifact& artifact, std::string_view package_name) override;
  AdapterRun build() override;
  std::string name() const override { return "fake"; }

  /// Every (test class, test method) run so far, in order.
  std::vector<std::string> invocations() const;

private:
  mutable std::mutex mu_;
  std::deque<Step> global_;
  std::map<std::string, std::deque<Step>> keyed_;
  std::deque<Step> builds_;
  std::vector<std::string> invocations_;
};

/// Shells out to the project's build tool inside `workspace`. The test file is
/// staged into the test root for the duration of the run. Runs are serialized
/// because the build directory is shared.
class LiveAdapter final : public BuildAdapter {
public:
  LiveAdapter(std::filesystem::path workspace, BuildSpec spec);

  AdapterRun run_test(const TestArtifact& artifact, std::string_view package_name) override;
  AdapterRun build() override;
  std::optional<std::string> compile_check(const TestArtifact& artifact, std::string_view package_name) override;
  std::string name() const override { return "live"; }

  /// Expands {test_class}, {test_method} and {test_selector} ("Class#method").
  static std::string expand_test_command(std::string_view tmpl, std::string_view test_class,
                                         std::string_view test_method);
  /// Exit code plus output -> status (exit 0 is always passed).
  static RunStatus classify(int exit_code, std::string_view log);

private:
  std::filesystem::path workspace_;
  BuildSpec spec_;
  std::mutex mu_;
};

/// [ERROR] lines, plus "Caused by:" and "\tat " lines directly after a kept
/// line. Passed runs give nothing; a failing run without markers gives the
/// last 50 lines.
std::vector<std::string> extract_error_lines(std::string_view log, RunStatus status);

inline constexpr std::size_t kFallbackTailLines = 50;

/// Path of the raw log for one run.
std::filesystem::path run_log_path(const std::filesystem::path& out_dir, std::string_view test_class,
                                   std::string_view test_method, int iteration);

/// Runs the artifact's test through `adapter`, stores the raw log under
/// out_dir/logs and attaches the extracted error lines.
TestRunResult run_single_test(const TestArtifact& artifact, BuildAdapter& adapter, std::string_view package_name,
                              int iteration, const std::filesystem::path& out_dir);

enum class Terminal { passed, exhausted, aborted };
std::string_view to_string(Terminal terminal);

/// One generated test method followed through the run/refine loop.
struct RefinementOutcome {
  std::string class_name;   // class under test
  std::string method_name;  // method under test
  std::string test_class;   // scratch class, <Class>Temp<k>
  std::string test_method;
  Terminal terminal = Terminal::aborted;
  int passed_at = 0;  // iteration of the passing run
  TestArtifact final_artifact;
  std::vector<TestRunResult> trace;
  int llm_calls = 0;  // shared generation call + own refinements
  std::string note;   // abort reason / postprocess failures

  std::string method_id() const { return class_name + "#" + method_name; }
  std::string test_id() const { return test_class + "#" + test_method; }
};

/// Everything generated for one method under test.
struct MethodOutcome {
  std::string class_name;
  std::string method_name;
  std::vector<RefinementOutcome> tests;
  std::optional<std::string> error;  // generation failed before any test existed
};

struct LoopEnv {
  const RunConfig& config;
  Gateway& gateway;
  BuildAdapter& adapter;
  const PromptTemplates& templates;
  ImportLedger& ledger;
  std::filesystem::path out_dir;
  double extraction_deadline_seconds = 30.0;
};

/// Work file of a scratch test: out/work/<Class>/<method>/<TestClass>.java.
std::filesystem::path work_file_path(const std::filesystem::path& out_dir, std::string_view class_name,
                                     std::string_view method_name, std::string_view test_class);

/// Runs `artifact` (iteration 1 is its first run) and refines it after every
/// failing run until it passes or max_iterations runs happened. A runner or
/// backend failure ends this test as aborted; AuthError propagates.
RefinementOutcome refine_until_pass(const TestArtifact& artifact, const java::MethodContext& ctx, LoopEnv& env);

/// Generation (iteration 0), postprocess, split into `<Class>Temp<k>` tests
/// starting at `next_index` (advanced past the used indices), then
/// refine_until_pass for each. Method-level failures land in
/// MethodOutcome::error; AuthError propagates.
MethodOutcome generate_and_refine(const java::MethodContext& ctx, LoopEnv& env, int& next_index);

}  // namespace testforge
