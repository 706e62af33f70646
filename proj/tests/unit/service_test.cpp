#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <condition_variable>
#include <future>
#include <thread>

#include "support.hpp"
#include "testforge/error.hpp"
#include "testforge/java_analyzer.hpp"
#include "testforge/service.hpp"

using namespace testforge;
using json = nlohmann::json;

namespace {

const std::string kSnippet =
    "package com.acme.shop;\n\n"
    "import org.springframework.stereotype.Service;\n\n"
    "@Service\n"
    "public class PriceService {\n"
    "    public int total(int a, int b) { return a + b; }\n"
    "    public String label(String name) {\n"
    "        if (name == null) throw new IllegalArgumentException(\"}\");\n"
    "        return \"#\" + name;\n"
    "    }\n"
    "}\n";

// Responses without package or annotation, so the chain has work to do.
std::string test_class(const std::string& marker) {
  return "```java\nimport org.junit.jupiter.api.Test;\n\nclass PriceServiceTemp {\n    @Test\n    void " + marker +
         "() {\n        assertEquals(3, new PriceService().total(1, 2));\n    }\n}\n```\n";
}

std::string script_of(int n) {
  std::string yaml;
  for (int i = 0; i < n; ++i) {
    yaml += "- response: |\n";
    for (const auto& line : {std::string("    ```java"), std::string("    import org.junit.jupiter.api.Test;"),
                             std::string("    class PriceServiceTemp {"), std::string("        @Test"),
                             "        void case" + std::to_string(i) + "() { assertEquals(3, s.total(1, 2)); }",
                             std::string("    }"), std::string("    ```")})
      yaml += line + "\n";
  }
  return yaml;
}

BackendSpec scripted_spec() {
  BackendSpec s;
  s.mode = BackendMode::scripted;
  s.script_path = "inline";
  return s;
}

std::size_t count_of(const std::string& hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) ++n;
  return n;
}

bool balanced(const std::string& code) {
  long depth = 0;
  for (char c : java::neutralize(code)) {
    if (c == '{') ++depth;
    if (c == '}' && --depth < 0) return false;
  }
  return depth == 0;
}

void expect_postprocessed(const std::string& source) {
  EXPECT_TRUE(source.starts_with("package com.acme.shop;")) << source;
  EXPECT_EQ(count_of(java::neutralize(source), "@ExtendWith"), 1u) << source;
  EXPECT_TRUE(balanced(source)) << source;
}

// Holds every request until released; answers with a valid test class.
class GateTransport final : public Transport {
public:
  AttemptResult send(const Prompt&, const RequestTag&) override {
    std::unique_lock lock(mu_);
    ++waiting_;
    cv_.notify_all();
    cv_.wait(lock, [&] { return open_; });
    AttemptResult r;
    r.text = test_class("gated");
    return r;
  }
  std::string name() const override { return "scripted"; }
  void wait_for_request() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return waiting_ > 0; });
  }
  void open() {
    std::lock_guard lock(mu_);
    open_ = true;
    cv_.notify_all();
  }

private:
  std::mutex mu_;
  std::condition_variable cv_;
  int waiting_ = 0;
  bool open_ = false;
};

struct Manager {
  explicit Manager(std::unique_ptr<Transport> t, SessionManager::Options opt = {})
      : gateway(scripted_spec(), std::move(t)), sessions(gateway, PromptTemplates::defaults(), opt) {}
  explicit Manager(const std::string& script)
      : Manager(std::make_unique<ScriptedTransport>(parse_script(script))) {}
  Gateway gateway;
  SessionManager sessions;
};

// Service on an ephemeral port with a client pointed at it.
struct Server {
  Server(SessionManager& sessions, ServiceOptions opt = {}) : service(sessions, opt, "scripted") {
    port = service.bind("127.0.0.1", 0);
    thread = std::thread([this] { service.listen(); });
    while (!service.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ~Server() {
    service.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }
  Service service;
  int port = -1;
  std::thread thread;
};

httplib::Result post(httplib::Client& c, const std::string& path, const json& body) {
  return c.Post(path, body.dump(), "application/json");
}

}  // namespace

// ---- session manager ------------------------------------------------------

TEST(Sessions, CreateListsMethods) {
  Manager m(script_of(0));
  const auto s = m.sessions.create(kSnippet);
  EXPECT_EQ(s["class"], "PriceService");
  EXPECT_EQ(s["package"], "com.acme.shop");
  EXPECT_EQ(s["methods"], (json{"total", "label"}));
  EXPECT_EQ(s["status"], "idle");
  EXPECT_EQ(s["id"].get<std::string>().size(), 32u);
  EXPECT_EQ(m.sessions.transcript_size(s["id"]), 1u);
  EXPECT_THROW(m.sessions.create("   "), std::invalid_argument);
  EXPECT_THROW(m.sessions.create(kSnippet, std::string("Nope")), ClassNotFound);
}

TEST(Sessions, GenerateThenChatKeepsInvariants) {
  Manager m(script_of(6));
  const std::string id = m.sessions.create(kSnippet)["id"];
  const auto g = m.sessions.generate(id);
  EXPECT_EQ(g["status"], "awaiting_user");
  ASSERT_EQ(g["tests"].size(), 2u);
  for (const auto& t : g["tests"]) expect_postprocessed(t["source"]);
  const std::size_t initial = m.sessions.transcript_size(id);
  EXPECT_EQ(initial, 3u);

  for (int n = 1; n <= 4; ++n) {
    const auto c = m.sessions.chat(id, "add a null-input test");
    EXPECT_EQ(c["status"], "awaiting_user");
    EXPECT_EQ(c["test"]["method"], "total");
    EXPECT_TRUE(c["test"]["refined"].get<bool>());
    expect_postprocessed(c["test"]["source"]);
    EXPECT_EQ(m.sessions.transcript_size(id), initial + 2 * n);
    EXPECT_EQ(c["transcript_length"], initial + 2 * n);
  }
  const auto tests = m.sessions.tests(id)["tests"];
  ASSERT_EQ(tests.size(), 2u);
  EXPECT_NE(tests[0]["source"].get<std::string>().find("case5"), std::string::npos);
}

TEST(Sessions, ChatErrors) {
  Manager m(script_of(2));
  const std::string id = m.sessions.create(kSnippet)["id"];
  EXPECT_THROW(m.sessions.chat(id, "hi"), SessionBusy);  // nothing generated yet
  m.sessions.generate(id, std::vector<std::string>{"label"});
  EXPECT_THROW(m.sessions.chat(id, " \n "), std::invalid_argument);
  EXPECT_THROW(m.sessions.chat(id, "x", std::string("total")), SessionBusy);  // known, not generated
  EXPECT_THROW(m.sessions.chat(id, "x", std::string("nope")), MethodNotFound);
  const auto size = m.sessions.transcript_size(id);
  m.sessions.chat(id, "make it shorter");
  EXPECT_THROW(m.sessions.chat(id, "again"), ScriptExhausted);
  // failed turn leaves the transcript alone and the session usable
  EXPECT_EQ(m.sessions.transcript_size(id), size + 2);
  EXPECT_EQ(m.sessions.status(id), SessionStatus::awaiting_user);
  EXPECT_THROW(m.sessions.generate("0000", {}), SessionNotFound);
  EXPECT_THROW(m.sessions.generate(id, std::vector<std::string>{"nope"}), MethodNotFound);
}

TEST(Sessions, FailedGenerationStoresNothing) {
  Manager m(script_of(1));  // two methods, one response
  const std::string id = m.sessions.create(kSnippet)["id"];
  EXPECT_THROW(m.sessions.generate(id), ScriptExhausted);
  EXPECT_EQ(m.sessions.tests(id)["tests"].size(), 0u);
  EXPECT_EQ(m.sessions.status(id), SessionStatus::idle);
  EXPECT_EQ(m.sessions.transcript_size(id), 1u);
}

TEST(Sessions, BusyWhileGenerating) {
  auto gate = std::make_unique<GateTransport>();
  auto* g = gate.get();
  Manager m(std::move(gate));
  const std::string id = m.sessions.create(kSnippet)["id"];
  auto pending = std::async(std::launch::async, [&] { return m.sessions.generate(id, std::vector<std::string>{"total"}); });
  g->wait_for_request();
  EXPECT_EQ(m.sessions.status(id), SessionStatus::generating);
  EXPECT_THROW(m.sessions.chat(id, "add a null-input test"), SessionBusy);
  EXPECT_THROW(m.sessions.generate(id), SessionBusy);
  // other sessions are not blocked
  const std::string other = m.sessions.create(kSnippet)["id"];
  EXPECT_EQ(m.sessions.status(other), SessionStatus::idle);
  g->open();
  EXPECT_EQ(pending.get()["status"], "awaiting_user");
  EXPECT_EQ(m.sessions.status(id), SessionStatus::awaiting_user);
}

TEST(Sessions, CloseAndSnapshot) {
  testsupport::TempDir dir;
  SessionManager::Options opt;
  opt.snapshot_dir = dir / "sessions";
  Manager m(std::make_unique<ScriptedTransport>(parse_script(script_of(2))), opt);
  const std::string id = m.sessions.create(kSnippet)["id"];
  m.sessions.generate(id);
  const auto snap = json::parse(testsupport::slurp(dir / "sessions" / (id + ".json")));
  EXPECT_EQ(snap["id"], id);
  EXPECT_EQ(snap["status"], "awaiting_user");
  EXPECT_EQ(m.sessions.close(id)["status"], "closed");
  // closed sessions stay readable but accept no more work
  EXPECT_THROW(m.sessions.chat(id, "x"), SessionBusy);
  EXPECT_THROW(m.sessions.generate(id), SessionBusy);
  EXPECT_EQ(m.sessions.describe(id)["status"], "closed");
  EXPECT_EQ(json::parse(testsupport::slurp(dir / "sessions" / (id + ".json")))["status"], "closed");
}

// ---- HTTP -------------------------------------------------------------------

TEST(Http, SessionLifecycle) {
  Manager m(script_of(4));
  Server srv(m.sessions);
  auto c = srv.client();

  auto health = c.Get("/api/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["backend"], "scripted");

  auto created = post(c, "/api/v1/sessions", {{"source", kSnippet}});
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const auto body = json::parse(created->body);
  EXPECT_EQ(body["methods"], (json{"total", "label"}));
  const std::string id = body["id"];
  const std::string base = "/api/v1/sessions/" + id;

  auto gen = post(c, base + "/generate", json::object());
  ASSERT_TRUE(gen);
  EXPECT_EQ(gen->status, 200);
  EXPECT_EQ(json::parse(gen->body)["status"], "awaiting_user");

  auto chat = post(c, base + "/chat", {{"message", "add a null-input test"}});
  ASSERT_TRUE(chat);
  EXPECT_EQ(chat->status, 200);
  expect_postprocessed(json::parse(chat->body)["test"]["source"]);

  auto desc = c.Get(base);
  ASSERT_TRUE(desc);
  EXPECT_EQ(json::parse(desc->body)["transcript"].size(), 5u);
  auto tests = c.Get(base + "/tests");
  ASSERT_TRUE(tests);
  EXPECT_EQ(json::parse(tests->body)["tests"].size(), 2u);

  auto del = c.Delete(base);
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 200);
  EXPECT_EQ(json::parse(c.Get(base)->body)["status"], "closed");
  EXPECT_EQ(post(c, base + "/chat", {{"message", "more"}})->status, 409);
}

TEST(Http, ErrorStatuses) {
  Manager m(script_of(1));
  Server srv(m.sessions);
  auto c = srv.client();
  EXPECT_EQ(post(c, "/api/v1/sessions", {{"source", ""}})->status, 400);
  EXPECT_EQ(c.Post("/api/v1/sessions", "{not json", "application/json")->status, 400);
  EXPECT_EQ(post(c, "/api/v1/sessions", {{"source", "class {"}})->status, 400);
  EXPECT_EQ(post(c, "/api/v1/sessions/abc123/generate", json::object())->status, 404);

  const std::string id = json::parse(post(c, "/api/v1/sessions", {{"source", kSnippet}})->body)["id"];
  const std::string base = "/api/v1/sessions/" + id;
  auto early = post(c, base + "/chat", {{"message", "hi"}});
  EXPECT_EQ(early->status, 409);
  EXPECT_TRUE(json::parse(early->body).contains("error"));
  // two methods, one scripted response: the backend runs dry
  EXPECT_EQ(post(c, base + "/generate", json::object())->status, 503);
  EXPECT_EQ(post(c, base + "/generate", {{"methods", {"missing"}}})->status, 400);
  EXPECT_EQ(post(c, base + "/chat", {{"message", ""}})->status, 400);
}

TEST(Http, BusyIs409) {
  auto gate = std::make_unique<GateTransport>();
  auto* g = gate.get();
  Manager m(std::move(gate));
  Server srv(m.sessions);
  auto c = srv.client();
  const std::string id = json::parse(post(c, "/api/v1/sessions", {{"source", kSnippet}})->body)["id"];
  const std::string base = "/api/v1/sessions/" + id;
  auto pending = std::async(std::launch::async, [&] {
    auto c2 = srv.client();
    return post(c2, base + "/generate", {{"methods", {"total"}}})->status;
  });
  g->wait_for_request();
  EXPECT_EQ(post(c, base + "/chat", {{"message", "add a null-input test"}})->status, 409);
  g->open();
  EXPECT_EQ(pending.get(), 200);
}

TEST(Http, BearerToken) {
  Manager m(script_of(0));
  ServiceOptions opt;
  opt.auth_token = "s3cret";
  Server srv(m.sessions, opt);
  auto c = srv.client();
  EXPECT_EQ(c.Get("/api/v1/health")->status, 200);
  EXPECT_EQ(post(c, "/api/v1/sessions", {{"source", kSnippet}})->status, 401);
  c.set_bearer_token_auth("wrong");
  EXPECT_EQ(post(c, "/api/v1/sessions", {{"source", kSnippet}})->status, 401);
  c.set_bearer_token_auth("s3cret");
  EXPECT_EQ(post(c, "/api/v1/sessions", {{"source", kSnippet}})->status, 201);
}

TEST(Http, CorsPreflight) {
  Manager m(script_of(0));
  ServiceOptions opt;
  opt.auth_token = "t";
  Server srv(m.sessions, opt);
  auto c = srv.client();
  auto r = c.Options("/api/v1/sessions");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_NE(r->get_header_value("Access-Control-Allow-Headers").find("Authorization"), std::string::npos);
}

TEST(Http, BindFailure) {
  Manager m(script_of(0));
  Server first(m.sessions);
  Service second(m.sessions, {}, "scripted");
  EXPECT_EQ(second.bind("127.0.0.1", first.port), -1);
}
