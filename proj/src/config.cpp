#include "testforge/config.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <charconv>
#include <set>
#include <unordered_set>

#include "testforge/error.hpp"

namespace testforge {

std::string_view to_string(BackendMode mode) {
  return mode == BackendMode::live ? "live" : "scripted";
}

std::string_view to_string(AdapterKind kind) { return kind == AdapterKind::live ? "live" : "fake"; }

std::string_view to_string(JavacCheck check) {
  switch (check) {
    case JavacCheck::off: return "off";
    case JavacCheck::on: return "on";
    case JavacCheck::autodetect: return "auto";
  }
  return "auto";
}

namespace {

const std::unordered_set<std::string_view> kJavaKeywords = {
    "abstract", "assert",     "boolean",  "break",     "byte",       "case",      "catch",
    "char",     "class",      "const",    "continue",  "default",    "do",        "double",
    "else",     "enum",       "extends",  "final",     "finally",    "float",     "for",
    "goto",     "if",         "implements", "import",  "instanceof", "int",       "interface",
    "long",     "native",     "new",      "package",   "private",    "protected", "public",
    "return",   "short",      "static",   "strictfp",  "super",      "switch",    "synchronized",
    "this",     "throw",      "throws",   "transient", "try",        "void",      "volatile",
    "while",    "true",       "false",    "null",      "_"};

int line_of(const YAML::Node& node) { return node.Mark().line + 1; }

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void expect_map(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) throw SchemaError(path.empty() ? "<root>" : path, line_of(node), "expected a mapping");
}

void check_keys(const YAML::Node& node, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw SchemaError(join_path(path, key), line_of(kv.first), "unknown key");
  }
}

std::string scalar(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw SchemaError(path, line_of(node), "expected a scalar");
  return node.Scalar();
}

long long as_integer(const YAML::Node& node, const std::string& path) {
  const std::string s = scalar(node, path);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw SchemaError(path, line_of(node), "expected an integer, got '" + s + "'");
  return value;
}

double as_number(const YAML::Node& node, const std::string& path) {
  const std::string s = scalar(node, path);
  double value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw SchemaError(path, line_of(node), "expected a number, got '" + s + "'");
  return value;
}

bool as_bool(const YAML::Node& node, const std::string& path) {
  const std::string s = scalar(node, path);
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  throw SchemaError(path, line_of(node), "expected true or false, got '" + s + "'");
}

template <typename Enum, std::size_t N>
Enum as_enum(const YAML::Node& node, const std::string& path,
             const std::array<std::pair<std::string_view, Enum>, N>& choices) {
  const std::string s = scalar(node, path);
  for (const auto& [name, value] : choices)
    if (name == s) return value;
  std::string allowed;
  for (const auto& [name, value] : choices) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw SchemaError(path, line_of(node), "expected one of {" + allowed + "}, got '" + s + "'");
}

std::vector<std::string> string_list(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence()) throw SchemaError(path, line_of(node), "expected a sequence");
  std::vector<std::string> out;
  std::size_t i = 0;
  for (const auto& item : node) out.push_back(scalar(item, path + "[" + std::to_string(i++) + "]"));
  return out;
}

ClassTarget parse_target(const YAML::Node& node, const std::string& path) {
  expect_map(node, path);
  check_keys(node, path, {"name", "methods"});
  if (!node["name"]) throw SchemaError(path + ".name", line_of(node), "missing required key");
  ClassTarget target;
  target.class_name = scalar(node["name"], path + ".name");
  if (!is_qualified_java_name(target.class_name))
    throw ValidationError(path + ".name", line_of(node["name"]),
                          "'" + target.class_name + "' is not a valid Java class name");
  if (const auto methods = node["methods"]) {
    const std::string mpath = path + ".methods";
    auto names = string_list(methods, mpath);
    if (names.empty()) throw ValidationError(mpath, line_of(methods), "method filter must not be empty");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!is_java_identifier(names[i]))
        throw ValidationError(mpath + "[" + std::to_string(i) + "]", line_of(methods[i]),
                              "'" + names[i] + "' is not a valid Java method name");
      if (!seen.insert(names[i]).second)
        throw ValidationError(mpath + "[" + std::to_string(i) + "]", line_of(methods[i]),
                              "duplicate method '" + names[i] + "'");
    }
    target.method_filter = std::move(names);
  }
  return target;
}

BackendSpec parse_backend(const YAML::Node& node, const std::string& path) {
  expect_map(node, path);
  check_keys(node, path,
             {"mode", "endpoint_url", "model_id", "api_key_env", "request_timeout_seconds",
              "max_retries", "retry_backoff_seconds", "temperature", "script",
              "context_budget_tokens", "cost_per_minute", "currency"});
  BackendSpec spec;
  auto sub = [&](const char* key) { return join_path(path, key); };
  if (auto n = node["mode"])
    spec.mode = as_enum(n, sub("mode"),
                        std::array{std::pair{std::string_view("live"), BackendMode::live},
                                   std::pair{std::string_view("scripted"), BackendMode::scripted}});
  if (auto n = node["endpoint_url"]) spec.endpoint_url = scalar(n, sub("endpoint_url"));
  if (auto n = node["model_id"]) spec.model_id = scalar(n, sub("model_id"));
  if (auto n = node["api_key_env"]) spec.api_key_env_name = scalar(n, sub("api_key_env"));
  if (auto n = node["request_timeout_seconds"]) {
    spec.request_timeout_seconds = as_number(n, sub("request_timeout_seconds"));
    if (spec.request_timeout_seconds <= 0)
      throw ValidationError(sub("request_timeout_seconds"), line_of(n), "must be positive");
  }
  if (auto n = node["max_retries"]) {
    long long v = as_integer(n, sub("max_retries"));
    if (v < 0 || v > 100) throw ValidationError(sub("max_retries"), line_of(n), "must be in [0, 100]");
    spec.max_retries = static_cast<int>(v);
  }
  if (auto n = node["retry_backoff_seconds"]) {
    spec.retry_backoff_seconds = as_number(n, sub("retry_backoff_seconds"));
    if (spec.retry_backoff_seconds < 0)
      throw ValidationError(sub("retry_backoff_seconds"), line_of(n), "must not be negative");
  }
  if (auto n = node["temperature"]) spec.temperature = as_number(n, sub("temperature"));
  if (auto n = node["script"]) spec.script_path = scalar(n, sub("script"));
  if (auto n = node["context_budget_tokens"]) {
    spec.context_budget_tokens = as_integer(n, sub("context_budget_tokens"));
    if (spec.context_budget_tokens <= 0)
      throw ValidationError(sub("context_budget_tokens"), line_of(n), "must be positive");
  }
  if (auto n = node["cost_per_minute"]) {
    spec.cost_per_minute = as_number(n, sub("cost_per_minute"));
    if (*spec.cost_per_minute < 0)
      throw ValidationError(sub("cost_per_minute"), line_of(n), "must not be negative");
  }
  if (auto n = node["currency"]) spec.currency = scalar(n, sub("currency"));
  return spec;
}

BuildSpec parse_build(const YAML::Node& node, const std::string& path) {
  expect_map(node, path);
  check_keys(node, path,
             {"adapter", "source_root", "test_root", "test_command", "build_command",
              "coverage_report", "javac_check", "fake_script", "run_timeout_seconds"});
  BuildSpec spec;
  auto sub = [&](const char* key) { return join_path(path, key); };
  if (auto n = node["adapter"])
    spec.adapter = as_enum(n, sub("adapter"),
                           std::array{std::pair{std::string_view("live"), AdapterKind::live},
                                      std::pair{std::string_view("fake"), AdapterKind::fake}});
  if (auto n = node["source_root"]) spec.source_root = scalar(n, sub("source_root"));
  if (auto n = node["test_root"]) spec.test_root = scalar(n, sub("test_root"));
  if (auto n = node["test_command"]) spec.test_command = scalar(n, sub("test_command"));
  if (auto n = node["build_command"]) spec.build_command = scalar(n, sub("build_command"));
  if (auto n = node["coverage_report"]) spec.coverage_report = scalar(n, sub("coverage_report"));
  if (auto n = node["javac_check"])
    spec.javac_check = as_enum(n, sub("javac_check"),
                               std::array{std::pair{std::string_view("off"), JavacCheck::off},
                                          std::pair{std::string_view("on"), JavacCheck::on},
                                          std::pair{std::string_view("auto"), JavacCheck::autodetect}});
  if (auto n = node["fake_script"]) spec.fake_script = scalar(n, sub("fake_script"));
  if (auto n = node["run_timeout_seconds"]) {
    spec.run_timeout_seconds = as_number(n, sub("run_timeout_seconds"));
    if (spec.run_timeout_seconds <= 0)
      throw ValidationError(sub("run_timeout_seconds"), line_of(n), "must be positive");
  }
  if (spec.test_command.empty()) throw ValidationError(sub("test_command"), line_of(node), "must not be empty");
  if (spec.build_command.empty()) throw ValidationError(sub("build_command"), line_of(node), "must not be empty");
  return spec;
}

PublishSpec parse_publish(const YAML::Node& node, const std::string& path) {
  expect_map(node, path);
  check_keys(node, path, {"enabled", "remote", "remove_pipeline_file", "pipeline_file"});
  PublishSpec spec;
  auto sub = [&](const char* key) { return join_path(path, key); };
  if (auto n = node["enabled"]) spec.enabled = as_bool(n, sub("enabled"));
  if (auto n = node["remote"]) spec.remote = scalar(n, sub("remote"));
  if (auto n = node["remove_pipeline_file"]) spec.remove_pipeline_file = as_bool(n, sub("remove_pipeline_file"));
  if (auto n = node["pipeline_file"]) spec.pipeline_file = scalar(n, sub("pipeline_file"));
  if (spec.remote.empty()) throw ValidationError(sub("remote"), line_of(node), "must not be empty");
  return spec;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

bool is_java_identifier(std::string_view name) {
  if (name.empty()) return false;
  auto start_ok = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$';
  };
  if (!start_ok(name.front())) return false;
  for (char c : name)
    if (!start_ok(c) && !(c >= '0' && c <= '9')) return false;
  return !kJavaKeywords.contains(name);
}

bool is_qualified_java_name(std::string_view name) {
  if (name.empty()) return false;
  std::size_t start = 0;
  for (;;) {
    std::size_t dot = name.find('.', start);
    if (!is_java_identifier(name.substr(start, dot == std::string_view::npos ? dot : dot - start)))
      return false;
    if (dot == std::string_view::npos) return true;
    start = dot + 1;
  }
}

void validate_backend(const BackendSpec& spec) {
  if (spec.mode == BackendMode::live) {
    if (spec.endpoint_url.empty())
      throw ValidationError("backend.endpoint_url", 0, "live mode requires endpoint_url");
    if (spec.model_id.empty())
      throw ValidationError("backend.model_id", 0, "live mode requires model_id");
  } else if (spec.script_path.empty()) {
    throw ValidationError("backend.script", 0, "scripted mode requires script");
  }
}

RunConfig parse_run_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::ParserException& e) {
    throw SchemaError("<root>", e.mark.line + 1, e.msg);
  }
  expect_map(root, "");
  check_keys(root, "", {"java_version", "classes", "max_iterations", "backend", "build", "publish"});

  RunConfig config;
  if (!root["java_version"]) throw SchemaError("java_version", line_of(root), "missing required key");
  config.java_version = scalar(root["java_version"], "java_version");
  if (config.java_version.empty())
    throw ValidationError("java_version", line_of(root["java_version"]), "must not be empty");

  const auto classes = root["classes"];
  if (!classes) throw SchemaError("classes", line_of(root), "missing required key");
  if (!classes.IsSequence()) throw SchemaError("classes", line_of(classes), "expected a sequence");
  if (classes.size() == 0) throw ValidationError("classes", line_of(classes), "at least one class is required");
  std::size_t i = 0;
  for (const auto& item : classes) config.targets.push_back(parse_target(item, "classes[" + std::to_string(i++) + "]"));

  if (auto n = root["max_iterations"]) {
    long long v = as_integer(n, "max_iterations");
    if (v < 1) throw ValidationError("max_iterations", line_of(n), "must be at least 1");
    if (v > 1000) throw ValidationError("max_iterations", line_of(n), "must be at most 1000");
    config.max_iterations = static_cast<int>(v);
  }
  if (auto n = root["backend"]) config.backend = parse_backend(n, "backend");
  if (auto n = root["build"]) config.build = parse_build(n, "build");
  if (auto n = root["publish"]) config.publish = parse_publish(n, "publish");
  return config;
}

std::string render_run_config(const RunConfig& config) {
  YAML::Emitter out;
  auto str = [&](const std::string& s) { out << YAML::DoubleQuoted << s; };
  out << YAML::BeginMap;
  out << YAML::Key << "java_version" << YAML::Value;
  str(config.java_version);
  out << YAML::Key << "classes" << YAML::Value << YAML::BeginSeq;
  for (const auto& target : config.targets) {
    out << YAML::BeginMap << YAML::Key << "name" << YAML::Value;
    str(target.class_name);
    if (target.method_filter) {
      out << YAML::Key << "methods" << YAML::Value << YAML::Flow << YAML::BeginSeq;
      for (const auto& m : *target.method_filter) str(m);
      out << YAML::EndSeq;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "max_iterations" << YAML::Value << config.max_iterations;

  const auto& b = config.backend;
  out << YAML::Key << "backend" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << std::string(to_string(b.mode));
  out << YAML::Key << "endpoint_url" << YAML::Value;
  str(b.endpoint_url);
  out << YAML::Key << "model_id" << YAML::Value;
  str(b.model_id);
  out << YAML::Key << "api_key_env" << YAML::Value;
  str(b.api_key_env_name);
  out << YAML::Key << "request_timeout_seconds" << YAML::Value << shortest(b.request_timeout_seconds);
  out << YAML::Key << "max_retries" << YAML::Value << b.max_retries;
  out << YAML::Key << "retry_backoff_seconds" << YAML::Value << shortest(b.retry_backoff_seconds);
  out << YAML::Key << "temperature" << YAML::Value << shortest(b.temperature);
  out << YAML::Key << "script" << YAML::Value;
  str(b.script_path);
  out << YAML::Key << "context_budget_tokens" << YAML::Value << b.context_budget_tokens;
  if (b.cost_per_minute) out << YAML::Key << "cost_per_minute" << YAML::Value << shortest(*b.cost_per_minute);
  out << YAML::Key << "currency" << YAML::Value;
  str(b.currency);
  out << YAML::EndMap;

  const auto& d = config.build;
  out << YAML::Key << "build" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "adapter" << YAML::Value << std::string(to_string(d.adapter));
  out << YAML::Key << "source_root" << YAML::Value;
  str(d.source_root);
  out << YAML::Key << "test_root" << YAML::Value;
  str(d.test_root);
  out << YAML::Key << "test_command" << YAML::Value;
  str(d.test_command);
  out << YAML::Key << "build_command" << YAML::Value;
  str(d.build_command);
  out << YAML::Key << "coverage_report" << YAML::Value;
  str(d.coverage_report);
  out << YAML::Key << "javac_check" << YAML::Value << std::string(to_string(d.javac_check));
  out << YAML::Key << "fake_script" << YAML::Value;
  str(d.fake_script);
  out << YAML::Key << "run_timeout_seconds" << YAML::Value << shortest(d.run_timeout_seconds);
  out << YAML::EndMap;

  const auto& p = config.publish;
  out << YAML::Key << "publish" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << p.enabled;
  out << YAML::Key << "remote" << YAML::Value;
  str(p.remote);
  out << YAML::Key << "remove_pipeline_file" << YAML::Value << p.remove_pipeline_file;
  out << YAML::Key << "pipeline_file" << YAML::Value;
  str(p.pipeline_file);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace testforge
