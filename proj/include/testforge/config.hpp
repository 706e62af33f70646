#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace testforge {

enum class BackendMode { live, scripted };

std::string_view to_string(BackendMode mode);

/// Settings for the model backend. `live` talks to an OpenAI-compatible
/// chat-completions endpoint; `scripted` replays a canned response file.
struct BackendSpec {
  BackendMode mode = BackendMode::live;
  std::string endpoint_url;
  std::string model_id;
  std::string api_key_env_name = "LLM_API_KEY";
  double request_timeout_seconds = 120.0;
  int max_retries = 3;
  double retry_backoff_seconds = 2.0;
  double temperature = 0.0;
  std::string script_path;
  long long context_budget_tokens = 900000;
  std::optional<double> cost_per_minute;
  std::string currency = "€";

  bool operator==(const BackendSpec&) const = default;
};

enum class AdapterKind { live, fake };
enum class JavacCheck { off, on, autodetect };

std::string_view to_string(AdapterKind kind);
std::string_view to_string(JavacCheck check);

struct BuildSpec {
  AdapterKind adapter = AdapterKind::live;
  std::string source_root = "src/main/java";
  std::string test_root = "src/test/java";
  /// Placeholders: {test_class}, {test_method}, {test_selector}.
  std::string test_command = "mvn -q -Dtest={test_selector} -DfailIfNoTests=false test";
  std::string build_command = "mvn -q verify";
  std::string coverage_report = "target/site/jacoco/jacoco.xml";
  JavacCheck javac_check = JavacCheck::autodetect;
  std::string fake_script;
  double run_timeout_seconds = 600.0;

  bool operator==(const BuildSpec&) const = default;
};

struct PublishSpec {
  bool enabled = false;
  std::string remote = "origin";
  bool remove_pipeline_file = true;
  std::string pipeline_file = ".gitlab-ci.yml";

  bool operator==(const PublishSpec&) const = default;
};

struct ClassTarget {
  std::string class_name;
  std::optional<std::vector<std::string>> method_filter;

  bool operator==(const ClassTarget&) const = default;
};

struct RunConfig {
  std::string java_version = "17";
  std::vector<ClassTarget> targets;
  int max_iterations = 5;
  BackendSpec backend;
  BuildSpec build;
  PublishSpec publish;

  bool operator==(const RunConfig&) const = default;
};

/// Parses and validates a config.yaml document.
///
/// Throws SchemaError for unknown/missing keys, wrong node types or malformed
/// YAML, and ValidationError for invariant breaches. Both carry the dotted
/// key path and a 1-based line number. Mode-dependent backend requirements
/// (endpoint for live, script for scripted) are left to validate_backend,
/// since CLI flags may still fill them in.
RunConfig parse_run_config(std::string_view yaml_text);

/// Canonical YAML: every key, schema order, defaults spelled out.
std::string render_run_config(const RunConfig& config);

/// Throws ValidationError (line 0) if the spec is not usable in its mode.
void validate_backend(const BackendSpec& spec);

bool is_java_identifier(std::string_view name);
bool is_qualified_java_name(std::string_view name);

}  // namespace testforge
