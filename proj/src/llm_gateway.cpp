#include "testforge/llm_gateway.hpp"

#include <httplib.h>
#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "testforge/error.hpp"
#include "testforge/text.hpp"

namespace testforge {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::generation: return "generation";
    case Phase::refinement: return "refinement";
    case Phase::chat: return "chat";
  }
  return "generation";
}

std::optional<Phase> phase_from_string(std::string_view s) {
  if (s == "generation") return Phase::generation;
  if (s == "refinement") return Phase::refinement;
  if (s == "chat") return Phase::chat;
  return std::nullopt;
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::ok: return "ok";
    case Outcome::timeout: return "timeout";
    case Outcome::transport_error: return "transport_error";
    case Outcome::bad_status: return "bad_status";
  }
  return "ok";
}

// ---- script -------------------------------------------------------------

ScriptQueue::ScriptQueue(std::vector<ScriptEntry> entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.key) {
      unkeyed_.push_back(std::move(e.response));
    } else if (!keyed_.emplace(*e.key, std::move(e.response)).second) {
      throw ScriptFormatError(i, "duplicate key (" + e.key->method + ", " + std::string(to_string(e.key->phase)) +
                                     ", " + std::to_string(e.key->iteration) + ")");
    }
  }
}

std::optional<std::string> ScriptQueue::next(const RequestTag& tag) {
  std::vector<const std::string*> names{&tag.method};
  for (const auto& a : tag.aliases) names.push_back(&a);
  for (const auto* name : names) {
    auto it = keyed_.find(ScriptKey{*name, tag.phase, tag.iteration});
    if (it != keyed_.end()) {
      std::string response = std::move(it->second);
      keyed_.erase(it);
      return response;
    }
  }
  if (unkeyed_.empty()) return std::nullopt;
  std::string response = std::move(unkeyed_.front());
  unkeyed_.pop_front();
  return response;
}

std::size_t ScriptQueue::size() const { return keyed_.size() + unkeyed_.size(); }

ScriptQueue parse_script(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::ParserException& e) {
    throw ScriptFormatError(0, "malformed YAML at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (root.IsNull()) return ScriptQueue{};
  if (!root.IsSequence()) throw ScriptFormatError(0, "script must be a YAML list");

  std::vector<ScriptEntry> entries;
  std::size_t index = 0;
  for (const auto& item : root) {
    if (!item.IsMap()) throw ScriptFormatError(index, "entry must be a mapping");
    for (const auto& kv : item) {
      const auto k = kv.first.as<std::string>();
      if (k != "key" && k != "response") throw ScriptFormatError(index, "unknown field '" + k + "'");
    }
    const auto response = item["response"];
    if (!response || !response.IsScalar()) throw ScriptFormatError(index, "missing string 'response'");
    ScriptEntry entry;
    entry.response = response.Scalar();
    if (const auto key = item["key"]) {
      if (!key.IsMap()) throw ScriptFormatError(index, "'key' must be a mapping");
      ScriptKey sk;
      for (const auto& kv : key) {
        const auto k = kv.first.as<std::string>();
        if (k != "method" && k != "phase" && k != "iteration")
          throw ScriptFormatError(index, "unknown key field '" + k + "'");
      }
      if (!key["method"] || !key["method"].IsScalar() || key["method"].Scalar().empty())
        throw ScriptFormatError(index, "key.method is required");
      sk.method = key["method"].Scalar();
      if (!key["phase"] || !key["phase"].IsScalar()) throw ScriptFormatError(index, "key.phase is required");
      auto phase = phase_from_string(key["phase"].Scalar());
      if (!phase) throw ScriptFormatError(index, "key.phase must be generation, refinement or chat");
      sk.phase = *phase;
      if (const auto it = key["iteration"]) {
        try {
          sk.iteration = it.as<int>();
        } catch (const YAML::Exception&) {
          throw ScriptFormatError(index, "key.iteration must be an integer");
        }
        if (sk.iteration < 0) throw ScriptFormatError(index, "key.iteration must not be negative");
      }
      entry.key = std::move(sk);
    }
    entries.push_back(std::move(entry));
    ++index;
  }
  return ScriptQueue(std::move(entries));
}

ScriptQueue load_script(const std::filesystem::path& path) {
  return parse_script(text::read_file(path));
}

AttemptResult ScriptedTransport::send(const Prompt&, const RequestTag& tag) {
  std::lock_guard lock(mu_);
  auto response = queue_.next(tag);
  if (!response)
    throw ScriptExhausted("script has no response for " + tag.method + " (" + std::string(to_string(tag.phase)) +
                          ", iteration " + std::to_string(tag.iteration) + ")");
  return AttemptResult{Outcome::ok, 200, std::move(*response), {}};
}

std::size_t ScriptedTransport::remaining() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

// ---- http ---------------------------------------------------------------

std::pair<std::string, std::string> HttpTransport::resolve_endpoint(const std::string& endpoint_url) {
  const auto scheme_end = endpoint_url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("backend.endpoint_url", 0, "endpoint needs a scheme");
  const auto path_start = endpoint_url.find('/', scheme_end + 3);
  std::string origin = endpoint_url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : endpoint_url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  if (path.ends_with("/chat/completions")) return {origin, path};
  if (path.ends_with("/v1")) return {origin, path + "/chat/completions"};
  return {origin, path + "/v1/chat/completions"};
}

HttpTransport::HttpTransport(const BackendSpec& spec, std::string api_key)
    : spec_(spec), api_key_(std::move(api_key)) {
  std::tie(origin_, path_) = resolve_endpoint(spec.endpoint_url);
}

AttemptResult HttpTransport::send(const Prompt& prompt, const RequestTag&) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(spec_.request_timeout_seconds);
  const auto usecs = static_cast<time_t>((spec_.request_timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  nlohmann::json body = {{"model", spec_.model_id},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt.text}}})},
                         {"temperature", spec_.temperature},
                         {"stream", false}};
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
    return AttemptResult{timed_out ? Outcome::timeout : Outcome::transport_error, 0, {}, httplib::to_string(err)};
  }
  if (res->status < 200 || res->status >= 300)
    return AttemptResult{Outcome::bad_status, res->status, {}, res->body.substr(0, 500)};
  try {
    const auto j = nlohmann::json::parse(res->body);
    return AttemptResult{Outcome::ok, res->status, j.at("choices").at(0).at("message").at("content").get<std::string>(),
                         {}};
  } catch (const nlohmann::json::exception& e) {
    return AttemptResult{Outcome::transport_error, res->status, {},
                         std::string("malformed chat-completions body: ") + e.what()};
  }
}

// ---- gateway ------------------------------------------------------------

Gateway::Gateway(BackendSpec spec, std::unique_ptr<Transport> transport, Sleeper sleeper)
    : spec_(std::move(spec)), transport_(std::move(transport)), sleeper_(std::move(sleeper)),
      rng_(std::random_device{}()) {
  if (!sleeper_) sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
}

std::chrono::duration<double> Gateway::backoff(int retry) {
  std::uniform_real_distribution<double> jitter(0.0, 0.25);
  double factor;
  {
    std::lock_guard lock(mu_);
    factor = 1.0 + jitter(rng_);
  }
  return std::chrono::duration<double>(spec_.retry_backoff_seconds * static_cast<double>(1LL << (retry - 1)) *
                                       factor);
}

void Gateway::append(CompletionRecord record) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(record));
}

std::string Gateway::complete(const Prompt& prompt, const RequestTag& tag) {
  const int max_attempts = 1 + spec_.max_retries;
  for (int attempt = 1;; ++attempt) {
    const auto started = std::chrono::steady_clock::now();
    AttemptResult r = transport_->send(prompt, tag);
    const std::chrono::duration<double> latency = std::chrono::steady_clock::now() - started;

    CompletionRecord rec;
    rec.prompt_fingerprint = prompt.context_fingerprint;
    rec.method = tag.method;
    rec.phase = tag.phase;
    rec.iteration = tag.iteration;
    rec.response = r.outcome == Outcome::ok ? r.text : r.detail;
    rec.latency_seconds = transport_->name() == "scripted" ? 0.0 : latency.count();
    rec.attempt = attempt;
    rec.outcome = r.outcome;
    rec.http_status = r.http_status;
    append(rec);

    if (r.outcome == Outcome::ok) return std::move(r.text);
    if (r.http_status == 401 || r.http_status == 403)
      throw AuthError("backend rejected credentials (HTTP " + std::to_string(r.http_status) + ")");
    const bool retryable = r.outcome == Outcome::timeout || r.outcome == Outcome::transport_error ||
                           r.http_status == 429 || r.http_status >= 500;
    if (!retryable)
      throw BackendUnavailable("backend answered HTTP " + std::to_string(r.http_status) + ": " + r.detail);
    if (attempt >= max_attempts)
      throw BackendUnavailable("backend unavailable after " + std::to_string(attempt) +
                               " attempts: " + std::string(to_string(r.outcome)) + " " + r.detail);
    sleeper_(backoff(attempt));
  }
}

std::vector<CompletionRecord> Gateway::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t Gateway::request_count() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::unique_ptr<Gateway> make_gateway(const BackendSpec& spec, Sleeper sleeper) {
  validate_backend(spec);
  if (spec.mode == BackendMode::scripted)
    return std::make_unique<Gateway>(spec, std::make_unique<ScriptedTransport>(load_script(spec.script_path)),
                                     std::move(sleeper));
  const char* key = std::getenv(spec.api_key_env_name.c_str());
  if (!key || !*key) throw AuthError("environment variable " + spec.api_key_env_name + " is not set");
  return std::make_unique<Gateway>(spec, std::make_unique<HttpTransport>(spec, key), std::move(sleeper));
}

}  // namespace testforge
