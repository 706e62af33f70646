#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "testforge/java_analyzer.hpp"
#include "testforge/llm_gateway.hpp"
#include "testforge/postprocess.hpp"
#include "testforge/prompting.hpp"

namespace httplib {
class Server;
}

namespace testforge {

enum class SessionStatus { idle, generating, awaiting_user, closed };
std::string_view to_string(SessionStatus status);

struct TranscriptEntry {
  std::string role;  // "user" | "assistant"
  std::string text;
  std::string method;  // method key the entry belongs to, empty for the snippet
};

/// Chat sessions over one shared gateway. Each session allows one model
/// request at a time; different sessions run concurrently.
class SessionManager {
public:
  struct Options {
    std::string java_version = "17";
    long long context_budget_tokens = kDefaultContextBudget;
    double extraction_deadline_seconds = 30.0;
    std::filesystem::path snapshot_dir;  // empty: no snapshots
  };

  SessionManager(Gateway& gateway, PromptTemplates templates, Options options);
  ~SessionManager();

  /// Scans the snippet and lists its methods. `class_name` picks a class when
  /// the snippet declares several (default: the first). Throws ParseError,
  /// ClassNotFound, std::invalid_argument (blank source).
  nlohmann::json create(const std::string& source, const std::optional<std::string>& class_name = {});

  /// Generates one test class per method (all, or the listed method keys).
  /// Nothing is stored unless every request succeeds. Throws SessionNotFound,
  /// SessionBusy, MethodNotFound, ContextTooLarge, BackendUnavailable,
  /// AuthError, ScriptExhausted, NoCodeFound, ExtractionTimeout.
  nlohmann::json generate(const std::string& id, const std::optional<std::vector<std::string>>& methods = {});

  /// One chat turn against the stored test of `method` (default: the first
  /// generated one). Throws std::invalid_argument (blank message),
  /// SessionBusy (request in flight, or nothing generated yet), plus the
  /// backend / postprocess errors of generate().
  nlohmann::json chat(const std::string& id, const std::string& message, const std::optional<std::string>& method = {});

  nlohmann::json tests(const std::string& id) const;
  nlohmann::json describe(const std::string& id) const;
  nlohmann::json close(const std::string& id);

  std::size_t transcript_size(const std::string& id) const;
  SessionStatus status(const std::string& id) const;
  std::size_t size() const;

private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void snapshot(const Session& s) const;

  Gateway& gateway_;
  PromptTemplates templates_;
  Options options_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

struct ServiceOptions {
  std::string auth_token;  // empty: no auth
  std::size_t max_body_bytes = 4 * 1024 * 1024;
};

/// JSON/REST front for a SessionManager under /api/v1.
class Service {
public:
  Service(SessionManager& sessions, ServiceOptions options, std::string backend_name);
  ~Service();

  /// Binds; port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen();
  /// Stops accepting; requests already running complete.
  void stop();
  bool is_running() const;

private:
  void install_routes();

  SessionManager& sessions_;
  ServiceOptions options_;
  std::string backend_name_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace testforge
