#include "testforge/execution.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include "testforge/error.hpp"
#include "testforge/process.hpp"
#include "testforge/text.hpp"

namespace testforge {

namespace fs = std::filesystem;

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::passed: return "passed";
    case RunStatus::compile_failed: return "compile_failed";
    case RunStatus::test_failed: return "test_failed";
    case RunStatus::runner_error: return "runner_error";
  }
  return "runner_error";
}

std::optional<RunStatus> run_status_from_string(std::string_view s) {
  if (s == "passed") return RunStatus::passed;
  if (s == "compile_failed") return RunStatus::compile_failed;
  if (s == "test_failed") return RunStatus::test_failed;
  if (s == "runner_error") return RunStatus::runner_error;
  return std::nullopt;
}

std::string_view to_string(Terminal terminal) {
  switch (terminal) {
    case Terminal::passed: return "passed";
    case Terminal::exhausted: return "exhausted";
    case Terminal::aborted: return "aborted";
  }
  return "aborted";
}

// ---- fake adapter -------------------------------------------------------

namespace {

std::string canned_log(RunStatus status, std::string_view test_class, std::string_view test_method) {
  const std::string cls(test_class), m(test_method);
  switch (status) {
    case RunStatus::passed:
      return "[INFO] Running " + cls + "\n[INFO] Tests run: 1, Failures: 0, Errors: 0, Skipped: 0\n"
             "[INFO] BUILD SUCCESS\n";
    case RunStatus::compile_failed:
      return "[INFO] Compiling 1 source file\n[ERROR] COMPILATION ERROR :\n[ERROR] /work/" + cls +
             ".java:[12,9] cannot find symbol\n[INFO] BUILD FAILURE\n";
    case RunStatus::test_failed:
      return "[INFO] Running " + cls + "\n[ERROR] Tests run: 1, Failures: 1, Errors: 0, Skipped: 0\n[ERROR] " + cls +
             "." + m + ":14 expected: <true> but was: <false>\n[INFO] BUILD FAILURE\n";
    case RunStatus::runner_error:
      return "build tool terminated unexpectedly\n";
  }
  return {};
}

FakeAdapter::Step parse_step(const YAML::Node& node, std::size_t index, bool allow_match, std::string* match) {
  if (!node.IsMap()) throw ScriptFormatError(index, "fake step must be a mapping");
  for (const auto& kv : node) {
    const auto k = kv.first.as<std::string>();
    if (k != "status" && k != "log" && !(allow_match && k == "match"))
      throw ScriptFormatError(index, "unknown field '" + k + "'");
  }
  FakeAdapter::Step step;
  if (!node["status"] || !node["status"].IsScalar()) throw ScriptFormatError(index, "missing 'status'");
  auto status = run_status_from_string(node["status"].Scalar());
  if (!status) throw ScriptFormatError(index, "unknown status '" + node["status"].Scalar() + "'");
  step.status = *status;
  if (node["log"]) step.log = node["log"].Scalar();
  if (match && node["match"]) *match = node["match"].Scalar();
  return step;
}

}  // namespace

FakeAdapter::FakeAdapter(std::deque<Step> global, std::map<std::string, std::deque<Step>> keyed,
                         std::deque<Step> builds)
    : global_(std::move(global)), keyed_(std::move(keyed)), builds_(std::move(builds)) {}

FakeAdapter::FakeAdapter(FakeAdapter&& other) noexcept {
  std::lock_guard lock(other.mu_);
  global_ = std::move(other.global_);
  keyed_ = std::move(other.keyed_);
  builds_ = std::move(other.builds_);
  invocations_ = std::move(other.invocations_);
}

FakeAdapter FakeAdapter::from_yaml(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::ParserException& e) {
    throw ScriptFormatError(0, std::string("malformed YAML: ") + e.msg);
  }
  std::deque<Step> global, builds;
  std::map<std::string, std::deque<Step>> keyed;
  if (root.IsNull()) return FakeAdapter{};
  if (!root.IsMap()) throw ScriptFormatError(0, "fake script must be a mapping with 'tests' and 'build'");
  for (const auto& kv : root) {
    const auto k = kv.first.as<std::string>();
    if (k != "tests" && k != "build") throw ScriptFormatError(0, "unknown section '" + k + "'");
  }
  if (const auto tests = root["tests"]) {
    if (!tests.IsSequence()) throw ScriptFormatError(0, "'tests' must be a list");
    std::size_t i = 0;
    for (const auto& node : tests) {
      std::string match;
      Step step = parse_step(node, i++, true, &match);
      if (match.empty()) global.push_back(std::move(step));
      else keyed[match].push_back(std::move(step));
    }
  }
  if (const auto build = root["build"]) {
    if (!build.IsSequence()) throw ScriptFormatError(0, "'build' must be a list");
    std::size_t i = 0;
    for (const auto& node : build) builds.push_back(parse_step(node, i++, false, nullptr));
  }
  return FakeAdapter(std::move(global), std::move(keyed), std::move(builds));
}

FakeAdapter FakeAdapter::load(const fs::path& path) { return from_yaml(text::read_file(path)); }

AdapterRun FakeAdapter::run_test(const TestArtifact& artifact, std::string_view) {
  if (artifact.test_method_names.empty()) throw RunnerError("artifact " + artifact.class_name + " has no test method");
  const std::string& method = artifact.test_method_names.front();
  std::lock_guard lock(mu_);
  invocations_.push_back(artifact.class_name + "#" + method);
  std::optional<Step> step;
  for (const auto& key : {artifact.class_name + "#" + method, artifact.class_name}) {
    auto it = keyed_.find(key);
    if (it != keyed_.end() && !it->second.empty()) {
      step = std::move(it->second.front());
      it->second.pop_front();
      break;
    }
  }
  if (!step && !global_.empty()) {
    step = std::move(global_.front());
    global_.pop_front();
  }
  if (!step) {
    Step s;
    if (artifact.source_text.find("FAKE:compile-error") != std::string::npos) s.status = RunStatus::compile_failed;
    else if (artifact.source_text.find("FAKE:fail") != std::string::npos) s.status = RunStatus::test_failed;
    step = std::move(s);
  }
  AdapterRun run;
  run.status = step->status;
  run.log = step->log.empty() ? canned_log(step->status, artifact.class_name, method) : step->log;
  return run;
}

AdapterRun FakeAdapter::build() {
  std::lock_guard lock(mu_);
  AdapterRun run;
  if (builds_.empty()) {
    run.status = RunStatus::passed;
    run.log = "[INFO] BUILD SUCCESS\n";
    return run;
  }
  Step step = std::move(builds_.front());
  builds_.pop_front();
  run.status = step.status;
  run.log = step.log.empty() ? (step.status == RunStatus::passed ? "[INFO] BUILD SUCCESS\n" : "[ERROR] BUILD FAILURE\n")
                             : step.log;
  return run;
}

std::vector<std::string> FakeAdapter::invocations() const {
  std::lock_guard lock(mu_);
  return invocations_;
}

// ---- live adapter -------------------------------------------------------

LiveAdapter::LiveAdapter(fs::path workspace, BuildSpec spec) : workspace_(std::move(workspace)), spec_(std::move(spec)) {}

std::string LiveAdapter::expand_test_command(std::string_view tmpl, std::string_view test_class,
                                             std::string_view test_method) {
  std::string out(tmpl);
  out = text::replace_all(out, "{test_selector}", std::string(test_class) + "#" + std::string(test_method));
  out = text::replace_all(out, "{test_class}", test_class);
  out = text::replace_all(out, "{test_method}", test_method);
  return out;
}

RunStatus LiveAdapter::classify(int exit_code, std::string_view log) {
  if (exit_code == 0) return RunStatus::passed;
  auto has = [&](std::string_view s) { return log.find(s) != std::string_view::npos; };
  if (has("COMPILATION ERROR") || has("Compilation failure")) return RunStatus::compile_failed;
  if (has("Tests run:") || has("<<< FAILURE!") || has("There are test failures")) return RunStatus::test_failed;
  return RunStatus::runner_error;
}

namespace {

fs::path package_dir(std::string_view package_name) {
  return text::replace_all(std::string(package_name), ".", "/");
}

AdapterRun finish_run(const ProcessResult& r, const std::string& what) {
  if (r.exit_code == 127 && !r.timed_out) throw RunnerError(what + " could not be started: " + r.output);
  AdapterRun run;
  run.log = r.output;
  run.duration_seconds = r.elapsed.count();
  if (r.timed_out) {
    run.status = RunStatus::runner_error;
    run.log += "\n[testforge] " + what + " timed out\n";
  } else {
    run.status = LiveAdapter::classify(r.exit_code, r.output);
  }
  return run;
}

}  // namespace

AdapterRun LiveAdapter::run_test(const TestArtifact& artifact, std::string_view package_name) {
  if (artifact.test_method_names.empty()) throw RunnerError("artifact " + artifact.class_name + " has no test method");
  std::lock_guard lock(mu_);
  const fs::path staged = workspace_ / spec_.test_root / package_dir(package_name) / (artifact.class_name + ".java");
  text::write_file(staged, artifact.source_text);
  ProcessOptions opts;
  opts.cwd = workspace_;
  opts.timeout = std::chrono::seconds(static_cast<long>(spec_.run_timeout_seconds));
  ProcessResult r;
  try {
    r = run_shell(expand_test_command(spec_.test_command, artifact.class_name, artifact.test_method_names.front()),
                  opts);
  } catch (...) {
    std::error_code ec;
    fs::remove(staged, ec);
    throw;
  }
  std::error_code ec;
  fs::remove(staged, ec);
  return finish_run(r, "test command");
}

AdapterRun LiveAdapter::build() {
  std::lock_guard lock(mu_);
  ProcessOptions opts;
  opts.cwd = workspace_;
  opts.timeout = std::chrono::seconds(static_cast<long>(spec_.run_timeout_seconds));
  return finish_run(run_shell(spec_.build_command, opts), "build command");
}

std::optional<std::string> LiveAdapter::compile_check(const TestArtifact& artifact, std::string_view) {
  if (spec_.javac_check == JavacCheck::off) return std::nullopt;
  if (!program_on_path("javac")) {
    if (spec_.javac_check == JavacCheck::on) throw RunnerError("javac_check is on but javac is not on PATH");
    return std::nullopt;
  }
  const fs::path dir = fs::temp_directory_path() / ("testforge-javac-" + text::sha256_hex(artifact.source_text).substr(0, 16));
  const fs::path file = dir / (artifact.class_name + ".java");
  text::write_file(file, artifact.source_text);
  const auto r = run_process({"javac", "-proc:none", "-d", (dir / "classes").string(), file.string()});
  std::error_code ec;
  fs::remove_all(dir, ec);
  return r.exit_code == 0 ? std::string() : r.output;
}

// ---- log reduction ------------------------------------------------------

std::vector<std::string> extract_error_lines(std::string_view log, RunStatus status) {
  if (status == RunStatus::passed) return {};
  const auto lines = text::split_lines(log);
  std::vector<std::string> out;
  bool after_kept = false;
  for (const auto& line : lines) {
    if (line.find("[ERROR]") != std::string::npos) {
      out.push_back(line);
      after_kept = true;
    } else if (after_kept && (text::trim(line).starts_with("Caused by:") || line.starts_with("\tat "))) {
      out.push_back(line);
    } else {
      after_kept = false;
    }
  }
  if (out.empty()) {
    const std::size_t from = lines.size() > kFallbackTailLines ? lines.size() - kFallbackTailLines : 0;
    out.assign(lines.begin() + static_cast<long>(from), lines.end());
  }
  return out;
}

fs::path run_log_path(const fs::path& out_dir, std::string_view test_class, std::string_view test_method,
                      int iteration) {
  return out_dir / "logs" / std::string(test_class) / std::string(test_method) /
         ("iter" + std::to_string(iteration) + ".log");
}

fs::path work_file_path(const fs::path& out_dir, std::string_view class_name, std::string_view method_name,
                        std::string_view test_class) {
  return out_dir / "work" / std::string(class_name) / std::string(method_name) / (std::string(test_class) + ".java");
}

TestRunResult run_single_test(const TestArtifact& artifact, BuildAdapter& adapter, std::string_view package_name,
                              int iteration, const fs::path& out_dir) {
  if (artifact.test_method_names.empty()) throw std::invalid_argument("run_single_test: artifact has no test method");
  const AdapterRun run = adapter.run_test(artifact, package_name);
  TestRunResult result;
  result.status = run.status;
  result.iteration = iteration;
  result.duration_seconds = run.duration_seconds;
  result.raw_log_path = run_log_path(out_dir, artifact.class_name, artifact.test_method_names.front(), iteration);
  text::write_file(result.raw_log_path, run.log);
  result.error_lines = extract_error_lines(run.log, run.status);
  return result;
}

// ---- loop ---------------------------------------------------------------

namespace {

TestArtifact apply_compile_check(TestArtifact artifact, std::string_view package_name, BuildAdapter& adapter) {
  const auto diagnostics = adapter.compile_check(artifact, package_name);
  if (!diagnostics || diagnostics->empty()) return artifact;
  std::string code = repair_syntax(artifact.source_text, *diagnostics);
  code = ensure_mockito_extension(ensure_package(code, package_name));
  return parse_test_artifact(std::move(code), artifact.origin);
}

}  // namespace

RefinementOutcome refine_until_pass(const TestArtifact& artifact, const java::MethodContext& ctx, LoopEnv& env) {
  if (artifact.test_method_names.size() != 1)
    throw std::invalid_argument("refine_until_pass: artifact must hold exactly one test method");
  RefinementOutcome out;
  out.class_name = ctx.class_name;
  out.method_name = ctx.method.name;
  out.test_class = artifact.class_name;
  out.test_method = artifact.test_method_names.front();
  out.llm_calls = 1;

  TestArtifact current = artifact;
  const int max_iterations = env.config.max_iterations;
  for (int k = 1; k <= max_iterations; ++k) {
    text::write_file(work_file_path(env.out_dir, ctx.class_name, ctx.method.name, current.class_name),
                     current.source_text);
    TestRunResult result;
    try {
      result = run_single_test(current, env.adapter, ctx.package_name, k, env.out_dir);
    } catch (const RunnerError& e) {
      out.terminal = Terminal::aborted;
      out.note = std::string("runner error: ") + e.what();
      break;
    }
    const RunStatus status = result.status;
    std::vector<std::string> lines = result.error_lines;
    out.trace.push_back(std::move(result));
    if (status == RunStatus::passed) {
      out.terminal = Terminal::passed;
      out.passed_at = k;
      break;
    }
    if (k == max_iterations) {
      out.terminal = Terminal::exhausted;
      break;
    }
    if (lines.empty()) lines.push_back("(the build tool produced no output; status " + std::string(to_string(status)) + ")");
    const Prompt prompt =
        build_refinement_prompt(current.source_text, lines, k, current.class_name, env.templates);
    RequestTag tag{test_id(current.class_name, current.test_method_names.front()),
                   {current.test_method_names.front(), out.method_id(), ctx.class_name},
                   Phase::refinement,
                   k};
    std::string raw;
    try {
      raw = env.gateway.complete(prompt, tag);
    } catch (const BackendUnavailable& e) {
      ++out.llm_calls;
      out.terminal = Terminal::aborted;
      out.note = std::string("backend unavailable: ") + e.what();
      break;
    } catch (const ScriptExhausted& e) {
      out.terminal = Terminal::aborted;
      out.note = std::string("script exhausted: ") + e.what();
      break;
    }
    ++out.llm_calls;
    try {
      TestArtifact refined = postprocess_response(raw, ctx.package_name, ArtifactOrigin{true, k},
                                                  env.extraction_deadline_seconds);
      refined = apply_compile_check(std::move(refined), ctx.package_name, env.adapter);
      refined = isolate_test_method(refined, current.test_method_names.front(), current.class_name);
      refined.origin = ArtifactOrigin{true, k};
      record_imports(refined, env.ledger);
      current = std::move(refined);
    } catch (const Error& e) {
      if (dynamic_cast<const LedgerIoError*>(&e)) throw;
      // unusable response: run the previous source again
      out.note += (out.note.empty() ? "" : "; ") + std::string("iteration ") + std::to_string(k) +
                  " response discarded: " + e.what();
    }
  }
  out.test_method = current.test_method_names.front();
  out.final_artifact = std::move(current);
  return out;
}

MethodOutcome generate_and_refine(const java::MethodContext& ctx, LoopEnv& env, int& next_index) {
  MethodOutcome mo;
  mo.class_name = ctx.class_name;
  mo.method_name = ctx.method.name;
  const std::string method_id = ctx.class_name + "#" + ctx.method.name;

  std::vector<TestArtifact> splits;
  try {
    const Prompt prompt = build_generation_prompt(ctx, env.templates, env.config.backend.context_budget_tokens);
    RequestTag tag{method_id, {ctx.method.name, ctx.class_name}, Phase::generation, 0};
    const std::string raw = env.gateway.complete(prompt, tag);
    TestArtifact artifact = postprocess_response(raw, ctx.package_name, {}, env.extraction_deadline_seconds);
    artifact = apply_compile_check(std::move(artifact), ctx.package_name, env.adapter);
    splits = split_test_methods(artifact, next_index);
  } catch (const AuthError&) {
    throw;
  } catch (const LedgerIoError&) {
    throw;
  } catch (const Error& e) {
    mo.error = e.what();
    return mo;
  }
  next_index += static_cast<int>(splits.size());
  for (const auto& split : splits) {
    record_imports(split, env.ledger);
    mo.tests.push_back(refine_until_pass(split, ctx, env));
  }
  return mo;
}

}  // namespace testforge
