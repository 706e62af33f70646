#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "testforge/config.hpp"
#include "testforge/prompting.hpp"

namespace testforge {

enum class Phase { generation, refinement, chat };
std::string_view to_string(Phase phase);
std::optional<Phase> phase_from_string(std::string_view s);

/// Identifies a completion request for keyed script dispatch and telemetry.
/// `method` is the primary id (e.g. "UserService#save"); `aliases` are other
/// names the same request answers to, most specific first.
struct RequestTag {
  std::string method;
  std::vector<std::string> aliases;
  Phase phase = Phase::generation;
  int iteration = 0;
};

enum class Outcome { ok, timeout, transport_error, bad_status };
std::string_view to_string(Outcome outcome);

struct CompletionRecord {
  std::string prompt_fingerprint;
  std::string method;
  Phase phase = Phase::generation;
  int iteration = 0;
  std::string response;
  double latency_seconds = 0;
  int attempt = 1;
  Outcome outcome = Outcome::ok;
  int http_status = 0;
};

/// One attempt against a backend.
struct AttemptResult {
  Outcome outcome = Outcome::ok;
  int http_status = 0;
  std::string text;    // assistant message when ok
  std::string detail;  // diagnostic otherwise
};

/// Transport for one completion attempt. Implementations must be safe to
/// call from several threads.
class Transport {
public:
  virtual ~Transport() = default;
  virtual AttemptResult send(const Prompt& prompt, const RequestTag& tag) = 0;
  virtual std::string name() const = 0;
};

// ---- scripted backend ---------------------------------------------------

struct ScriptKey {
  std::string method;
  Phase phase = Phase::generation;
  int iteration = 0;
  auto operator<=>(const ScriptKey&) const = default;
};

struct ScriptEntry {
  std::optional<ScriptKey> key;
  std::string response;
};

/// Canned responses. Keyed entries are served only to the matching request,
/// once; unkeyed entries are served in file order.
class ScriptQueue {
public:
  ScriptQueue() = default;
  /// Throws ScriptFormatError on a duplicate key.
  explicit ScriptQueue(std::vector<ScriptEntry> entries);

  std::optional<std::string> next(const RequestTag& tag);
  std::size_t size() const;
  std::size_t keyed_size() const { return keyed_.size(); }
  std::size_t unkeyed_size() const { return unkeyed_.size(); }

private:
  std::map<ScriptKey, std::string> keyed_;
  std::deque<std::string> unkeyed_;
};

/// Reads a YAML list of {key?: {method, phase, iteration}, response}.
/// Throws ScriptFormatError (with entry index) or IoError.
ScriptQueue load_script(const std::filesystem::path& path);
ScriptQueue parse_script(std::string_view yaml_text);

class ScriptedTransport final : public Transport {
public:
  explicit ScriptedTransport(ScriptQueue queue) : queue_(std::move(queue)) {}
  /// Throws ScriptExhausted when no entry answers the request.
  AttemptResult send(const Prompt& prompt, const RequestTag& tag) override;
  std::string name() const override { return "scripted"; }
  std::size_t remaining() const;

private:
  mutable std::mutex mu_;
  ScriptQueue queue_;
};

// ---- live backend -------------------------------------------------------

/// OpenAI-compatible POST {endpoint}/v1/chat/completions with one user
/// message.
class HttpTransport final : public Transport {
public:
  HttpTransport(const BackendSpec& spec, std::string api_key);
  AttemptResult send(const Prompt& prompt, const RequestTag& tag) override;
  std::string name() const override { return "live"; }

  /// Splits an endpoint URL into scheme://host[:port] and the request path.
  static std::pair<std::string, std::string> resolve_endpoint(const std::string& endpoint_url);

private:
  BackendSpec spec_;
  std::string api_key_;
  std::string origin_;
  std::string path_;
};

// ---- gateway ------------------------------------------------------------

using Sleeper = std::function<void(std::chrono::duration<double>)>;

/// Retrying front for a transport; keeps the append-only request record.
class Gateway {
public:
  Gateway(BackendSpec spec, std::unique_ptr<Transport> transport, Sleeper sleeper = {});

  /// Returns the assistant message. Retries timeouts, transport errors, 429
  /// and 5xx up to max_retries with jittered exponential backoff. Throws
  /// AuthError (401/403, never retried), BackendUnavailable, ScriptExhausted.
  std::string complete(const Prompt& prompt, const RequestTag& tag);

  std::vector<CompletionRecord> records() const;
  std::size_t request_count() const;
  const BackendSpec& spec() const noexcept { return spec_; }
  std::string transport_name() const { return transport_->name(); }

  /// Delay before retry `retry` (1-based): base * 2^(retry-1) * (1 + U[0, 0.25)).
  std::chrono::duration<double> backoff(int retry);

private:
  void append(CompletionRecord record);

  BackendSpec spec_;
  std::unique_ptr<Transport> transport_;
  Sleeper sleeper_;
  mutable std::mutex mu_;
  std::vector<CompletionRecord> records_;
  std::mt19937_64 rng_;
};

/// Builds the transport named by spec.mode. Live mode reads the API key from
/// the environment variable spec.api_key_env_name (AuthError if unset).
std::unique_ptr<Gateway> make_gateway(const BackendSpec& spec, Sleeper sleeper = {});

}  // namespace testforge
