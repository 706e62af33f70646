#include "testforge/service.hpp"

#include <httplib.h>

#include <sys/socket.h>

#include <random>
#include <regex>

#include "testforge/error.hpp"
#include "testforge/text.hpp"

namespace testforge {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::idle: return "idle";
    case SessionStatus::generating: return "generating";
    case SessionStatus::awaiting_user: return "awaiting_user";
    case SessionStatus::closed: return "closed";
  }
  return "closed";
}

struct SessionManager::Session {
  std::string id;
  std::string source;
  std::string class_name;
  std::string package_name;
  std::vector<std::string> method_keys;  // overloads get _2, _3, ...
  std::map<std::string, java::MethodContext> contexts;
  std::map<std::string, TestArtifact> artifacts;
  std::vector<TranscriptEntry> transcript;
  SessionStatus status = SessionStatus::idle;
  int chat_turns = 0;
  std::atomic<bool> in_flight{false};
  mutable std::mutex mu;
};

namespace {

std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

// Claims the session's single request slot for the lifetime of the guard.
class InFlight {
public:
  explicit InFlight(std::atomic<bool>& flag) : flag_(flag) {
    bool expected = false;
    if (!flag_.compare_exchange_strong(expected, true)) throw SessionBusy("a model request is already running");
  }
  ~InFlight() { flag_.store(false); }
  InFlight(const InFlight&) = delete;
  InFlight& operator=(const InFlight&) = delete;

private:
  std::atomic<bool>& flag_;
};

json artifact_json(const std::string& key, const TestArtifact& a) {
  return {{"method", key},
          {"class_name", a.class_name},
          {"test_methods", a.test_method_names},
          {"refined", a.origin.refined},
          {"source", a.source_text}};
}

}  // namespace

SessionManager::SessionManager(Gateway& gateway, PromptTemplates templates, Options options)
    : gateway_(gateway), templates_(std::move(templates)), options_(std::move(options)) {}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound("no session " + id);
  return it->second;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void SessionManager::snapshot(const Session& s) const {
  if (options_.snapshot_dir.empty()) return;
  json doc = {{"id", s.id}, {"class", s.class_name}, {"package", s.package_name},
              {"status", to_string(s.status)}, {"source", s.source}};
  json transcript = json::array();
  for (const auto& e : s.transcript) transcript.push_back({{"role", e.role}, {"text", e.text}, {"method", e.method}});
  doc["transcript"] = std::move(transcript);
  json tests = json::array();
  for (const auto& key : s.method_keys)
    if (auto it = s.artifacts.find(key); it != s.artifacts.end()) tests.push_back(artifact_json(key, it->second));
  doc["tests"] = std::move(tests);
  text::write_file(options_.snapshot_dir / (s.id + ".json"), doc.dump(2) + "\n");
}

json SessionManager::create(const std::string& source, const std::optional<std::string>& class_name) {
  if (text::is_blank(source)) throw std::invalid_argument("source is empty");
  const java::SourceUnit unit = java::scan_source(source);
  const java::ClassModel* cls = nullptr;
  if (class_name) {
    cls = unit.find_class(*class_name);
    if (!cls) throw ClassNotFound("class " + *class_name + " not found in snippet");
  } else {
    cls = &unit.classes.front();
  }

  auto s = std::make_shared<Session>();
  s->id = random_id();
  s->source = source;
  s->class_name = cls->name;
  s->package_name = unit.package_name;
  std::map<std::string, int> seen;
  const std::vector<java::SourceUnit> project{unit};
  for (const auto& m : java::extract_methods(unit, ClassTarget{cls->name, std::nullopt})) {
    const int n = ++seen[m.name];
    const std::string key = n == 1 ? m.name : m.name + "_" + std::to_string(n);
    s->method_keys.push_back(key);
    s->contexts.emplace(key, java::collect_dependencies(m, unit, *cls, project, options_.java_version));
  }
  s->transcript.push_back({"user", source, ""});
  {
    std::lock_guard lock(mu_);
    sessions_[s->id] = s;
  }
  snapshot(*s);
  return {{"id", s->id}, {"class", s->class_name}, {"package", s->package_name},
          {"methods", s->method_keys}, {"status", to_string(s->status)}};
}

json SessionManager::generate(const std::string& id, const std::optional<std::vector<std::string>>& methods) {
  auto s = find(id);
  InFlight guard(s->in_flight);
  std::vector<std::string> keys;
  SessionStatus before;
  {
    std::lock_guard lock(s->mu);
    if (s->status == SessionStatus::closed) throw SessionBusy("session is closed");
    keys = methods ? *methods : s->method_keys;
    for (const auto& k : keys)
      if (!s->contexts.count(k)) throw MethodNotFound(k, s->method_keys);
    before = s->status;
    s->status = SessionStatus::generating;
  }

  std::vector<std::pair<std::string, TestArtifact>> made;
  std::vector<std::string> replies;
  try {
    for (const auto& key : keys) {
      const java::MethodContext& ctx = s->contexts.at(key);
      const Prompt prompt = build_generation_prompt(ctx, templates_, options_.context_budget_tokens);
      const RequestTag tag{s->class_name + "#" + ctx.method.name, {ctx.method.name, s->class_name}, Phase::generation, 0};
      std::string raw = gateway_.complete(prompt, tag);
      made.emplace_back(key, postprocess_response(raw, s->package_name, {}, options_.extraction_deadline_seconds));
      replies.push_back(std::move(raw));
    }
  } catch (...) {
    std::lock_guard lock(s->mu);
    s->status = before;
    throw;
  }

  json out;
  {
    std::lock_guard lock(s->mu);
    json tests = json::array();
    for (std::size_t i = 0; i < made.size(); ++i) {
      s->artifacts[made[i].first] = made[i].second;
      s->transcript.push_back({"assistant", replies[i], made[i].first});
      tests.push_back(artifact_json(made[i].first, made[i].second));
    }
    s->status = SessionStatus::awaiting_user;
    out = {{"id", s->id}, {"status", to_string(s->status)}, {"tests", std::move(tests)}};
    snapshot(*s);
  }
  return out;
}

json SessionManager::chat(const std::string& id, const std::string& message, const std::optional<std::string>& method) {
  if (text::is_blank(message)) throw std::invalid_argument("message is empty");
  auto s = find(id);
  InFlight guard(s->in_flight);
  std::string key;
  TestArtifact current;
  int turn;
  {
    std::lock_guard lock(s->mu);
    if (s->status != SessionStatus::awaiting_user)
      throw SessionBusy("session is " + std::string(to_string(s->status)) + ", not awaiting_user");
    if (method) {
      if (!s->contexts.count(*method)) throw MethodNotFound(*method, s->method_keys);
      if (!s->artifacts.count(*method)) throw SessionBusy("no test generated for " + *method + " yet");
      key = *method;
    } else {
      for (const auto& k : s->method_keys)
        if (s->artifacts.count(k)) {
          key = k;
          break;
        }
    }
    current = s->artifacts.at(key);
    turn = s->chat_turns + 1;
    s->status = SessionStatus::generating;
  }

  const java::MethodContext& ctx = s->contexts.at(key);
  std::string raw;
  TestArtifact updated;
  try {
    const Prompt prompt = build_chat_prompt(current.source_text, message, s->class_name, current.class_name, templates_);
    const RequestTag tag{s->class_name + "#" + ctx.method.name, {ctx.method.name, s->class_name}, Phase::chat, turn};
    raw = gateway_.complete(prompt, tag);
    updated = postprocess_response(raw, s->package_name, {true, turn}, options_.extraction_deadline_seconds);
  } catch (...) {
    std::lock_guard lock(s->mu);
    s->status = SessionStatus::awaiting_user;
    throw;
  }

  std::lock_guard lock(s->mu);
  s->chat_turns = turn;
  s->artifacts[key] = updated;
  s->transcript.push_back({"user", message, key});
  s->transcript.push_back({"assistant", raw, key});
  s->status = SessionStatus::awaiting_user;
  snapshot(*s);
  return {{"id", s->id},
          {"status", to_string(s->status)},
          {"assistant", raw},
          {"test", artifact_json(key, updated)},
          {"transcript_length", s->transcript.size()}};
}

json SessionManager::tests(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  json tests = json::array();
  for (const auto& key : s->method_keys)
    if (auto it = s->artifacts.find(key); it != s->artifacts.end()) tests.push_back(artifact_json(key, it->second));
  return {{"id", s->id}, {"tests", std::move(tests)}};
}

json SessionManager::describe(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  json transcript = json::array();
  for (const auto& e : s->transcript) transcript.push_back({{"role", e.role}, {"text", e.text}, {"method", e.method}});
  return {{"id", s->id},
          {"class", s->class_name},
          {"package", s->package_name},
          {"methods", s->method_keys},
          {"status", to_string(s->status)},
          {"pending", s->in_flight.load()},
          {"transcript", std::move(transcript)}};
}

json SessionManager::close(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  s->status = SessionStatus::closed;
  snapshot(*s);
  return {{"id", s->id}, {"status", to_string(s->status)}};
}

std::size_t SessionManager::transcript_size(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->transcript.size();
}

SessionStatus SessionManager::status(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->status;
}

// ---- HTTP ---------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

json parse_body(const httplib::Request& req) {
  if (text::is_blank(req.body)) return json::object();
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw std::invalid_argument("request body must be a JSON object");
  return body;
}

std::optional<std::string> opt_string(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  if (!body[key].is_string()) throw std::invalid_argument(std::string("'") + key + "' must be a string");
  return body[key].get<std::string>();
}

// Maps library errors to status codes. Model-side trouble (backend down,
// unusable output) is 503; state conflicts are 409.
template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const SessionNotFound& e) {
    send_error(res, 404, e.what());
  } catch (const SessionBusy& e) {
    send_error(res, 409, e.what());
  } catch (const std::invalid_argument& e) {
    send_error(res, 400, e.what());
  } catch (const ParseError& e) {
    send_error(res, 400, std::string("snippet does not parse: ") + e.what());
  } catch (const ClassNotFound& e) {
    send_error(res, 400, e.what());
  } catch (const MethodNotFound& e) {
    send_error(res, 400, e.what());
  } catch (const ContextTooLarge& e) {
    send_error(res, 400, e.what());
  } catch (const Error& e) {
    send_error(res, 503, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, e.what());
  }
}

}  // namespace

Service::Service(SessionManager& sessions, ServiceOptions options, std::string backend_name)
    : sessions_(sessions), options_(std::move(options)), backend_name_(std::move(backend_name)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
  auto& srv = *server_;
  // httplib also sets SO_REUSEPORT, which lets a second server share a busy
  // port silently; a taken port has to be a bind failure.
  srv.set_socket_options([](int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  srv.set_payload_max_length(options_.max_body_bytes);
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (options_.auth_token.empty() || req.method == "OPTIONS" || req.path == "/api/v1/health")
      return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + options_.auth_token)
      return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, 401, "missing or invalid bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not found" : "request failed");
  });
  srv.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"backend", backend_name_}, {"sessions", sessions_.size()}});
  });
  srv.Post("/api/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      const auto source = opt_string(body, "source");
      if (!source) throw std::invalid_argument("'source' is required");
      send_json(res, 201, sessions_.create(*source, opt_string(body, "class")));
    });
  });
  srv.Post(R"(/api/v1/sessions/([0-9a-f]+)/generate)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      std::optional<std::vector<std::string>> methods;
      if (body.contains("methods") && !body["methods"].is_null())
        methods = body["methods"].get<std::vector<std::string>>();
      send_json(res, 200, sessions_.generate(req.matches[1], methods));
    });
  });
  srv.Post(R"(/api/v1/sessions/([0-9a-f]+)/chat)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      send_json(res, 200,
                sessions_.chat(req.matches[1], opt_string(body, "message").value_or(""), opt_string(body, "method")));
    });
  });
  srv.Get(R"(/api/v1/sessions/([0-9a-f]+)/tests)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.tests(req.matches[1])); });
  });
  srv.Get(R"(/api/v1/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.describe(req.matches[1])); });
  });
  srv.Delete(R"(/api/v1/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, sessions_.close(req.matches[1])); });
  });
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool Service::listen() { return server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

bool Service::is_running() const { return server_->is_running(); }

}  // namespace testforge
