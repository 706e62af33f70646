#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <thread>

#include "support.hpp"
#include "testforge/error.hpp"
#include "testforge/llm_gateway.hpp"

using namespace testforge;
using json = nlohmann::json;

namespace {

Prompt prompt(const std::string& text) {
  Prompt p;
  p.text = text;
  p.context_fingerprint = "fp-" + text;
  return p;
}

RequestTag tag(const std::string& method, Phase phase = Phase::generation, int iteration = 0,
               std::vector<std::string> aliases = {}) {
  return RequestTag{method, std::move(aliases), phase, iteration};
}

BackendSpec scripted_spec() {
  BackendSpec s;
  s.mode = BackendMode::scripted;
  s.script_path = "inline";
  return s;
}

Gateway scripted(const std::string& yaml) {
  return Gateway(scripted_spec(), std::make_unique<ScriptedTransport>(parse_script(yaml)));
}

// Local chat-completions stand-in. Each request pops the next planned reply.
class FakeServer {
public:
  struct Reply {
    Reply(int s = 200, std::string c = "ok", int d = 0, std::string raw = {})
        : status(s), content(std::move(c)), delay_ms(d), raw_body(std::move(raw)) {}
    int status;
    std::string content;
    int delay_ms;
    std::string raw_body;  // sent verbatim when set
  };

  explicit FakeServer(std::vector<Reply> plan) : plan_(std::move(plan)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t i = hits_++;
      bodies_.push_back(req.body);
      auth_.push_back(req.get_header_value("Authorization"));
      const Reply r = i < plan_.size() ? plan_[i] : Reply{};
      if (r.delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(r.delay_ms));
      res.status = r.status;
      if (!r.raw_body.empty()) {
        res.set_content(r.raw_body, "application/json");
      } else {
        json body = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", r.content}}}}})}};
        res.set_content(body.dump(), "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::size_t hits() const { return hits_; }
  const std::vector<std::string>& bodies() const { return bodies_; }
  const std::vector<std::string>& auth() const { return auth_; }

private:
  std::vector<Reply> plan_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<std::size_t> hits_{0};
  std::vector<std::string> bodies_, auth_;
};

BackendSpec live_spec(const std::string& url, int retries = 3, double timeout = 5) {
  BackendSpec s;
  s.mode = BackendMode::live;
  s.endpoint_url = url;
  s.model_id = "llama-70b";
  s.max_retries = retries;
  s.request_timeout_seconds = timeout;
  return s;
}

struct RecordingSleeper {
  std::shared_ptr<std::vector<double>> calls = std::make_shared<std::vector<double>>();
  Sleeper fn() {
    auto c = calls;
    return [c](std::chrono::duration<double> d) { c->push_back(d.count()); };
  }
};

}  // namespace

TEST(Script, UnkeyedEntriesInOrder) {
  Gateway g = scripted("- response: R1\n- response: R2\n");
  EXPECT_EQ(g.complete(prompt("a"), tag("X#a")), "R1");
  EXPECT_EQ(g.complete(prompt("b"), tag("X#b")), "R2");
  const auto recs = g.records();
  ASSERT_EQ(recs.size(), 2u);
  for (const auto& r : recs) {
    EXPECT_EQ(r.outcome, Outcome::ok);
    EXPECT_EQ(r.attempt, 1);
    EXPECT_EQ(r.latency_seconds, 0);
  }
  EXPECT_EQ(recs[0].prompt_fingerprint, "fp-a");
  EXPECT_EQ(recs[1].response, "R2");
  EXPECT_THROW(g.complete(prompt("c"), tag("X#c")), ScriptExhausted);
  EXPECT_EQ(g.request_count(), 2u);
}

TEST(Script, EmptyScriptIsExhausted) {
  Gateway g = scripted("");
  EXPECT_THROW(g.complete(prompt("a"), tag("X#a")), ScriptExhausted);
}

TEST(Script, QueueLength) {
  const auto q = parse_script("- response: a\n- response: b\n- key: {method: m, phase: chat, iteration: 1}\n  response: c\n");
  EXPECT_EQ(q.size(), 3u);
  EXPECT_EQ(q.keyed_size(), 1u);
  EXPECT_EQ(q.unkeyed_size(), 2u);
}

TEST(Script, KeyedEntryServedOnlyToMatchingRequest) {
  Gateway g = scripted(
      "- key: {method: save, phase: refinement, iteration: 2}\n  response: KEYED\n"
      "- response: FIRST\n- response: SECOND\n");
  EXPECT_EQ(g.complete(prompt("p"), tag("save", Phase::refinement, 1)), "FIRST");
  EXPECT_EQ(g.complete(prompt("p"), tag("save", Phase::generation, 2)), "SECOND");
  EXPECT_EQ(g.complete(prompt("p"), tag("save", Phase::refinement, 2)), "KEYED");
  EXPECT_THROW(g.complete(prompt("p"), tag("save", Phase::refinement, 2)), ScriptExhausted);
}

TEST(Script, AliasesMatchMostSpecificFirst) {
  Gateway g = scripted(
      "- key: {method: Svc, phase: generation, iteration: 0}\n  response: BY_CLASS\n"
      "- key: {method: save, phase: generation, iteration: 0}\n  response: BY_METHOD\n");
  EXPECT_EQ(g.complete(prompt("p"), tag("Svc#save", Phase::generation, 0, {"save", "Svc"})), "BY_METHOD");
  EXPECT_EQ(g.complete(prompt("p"), tag("Svc#find", Phase::generation, 0, {"find", "Svc"})), "BY_CLASS");
}

TEST(Script, FormatErrorsCarryEntryIndex) {
  auto index_of = [](const std::string& yaml) -> long {
    try {
      parse_script(yaml);
    } catch (const ScriptFormatError& e) {
      return static_cast<long>(e.entry_index());
    }
    return -1;
  };
  EXPECT_EQ(index_of("- response: a\n- key: {method: m, phase: chat, iteration: 1}\n  response: b\n"
                     "- key: {method: m, phase: chat, iteration: 1}\n  response: c\n"),
            2);
  EXPECT_EQ(index_of("- response: a\n- {}\n"), 1);
  EXPECT_EQ(index_of("- response: a\n- response: b\n  extra: 1\n"), 1);
  EXPECT_EQ(index_of("- key: {method: m, phase: thinking, iteration: 0}\n  response: a\n"), 0);
  EXPECT_EQ(index_of("- key: {method: m, phase: chat, iteration: -1}\n  response: a\n"), 0);
  EXPECT_EQ(index_of("- key: {method: m, phase: chat, iteration: two}\n  response: a\n"), 0);
  EXPECT_GE(index_of("response: a\n"), 0);
  EXPECT_GE(index_of("- [unclosed\n"), 0);
}

TEST(Script, LoadFromFile) {
  testsupport::TempDir dir;
  testsupport::spit(dir / "s.yaml", "- response: |\n    multi\n    line\n");
  ScriptedTransport t(load_script(dir / "s.yaml"));
  EXPECT_EQ(t.remaining(), 1u);
  EXPECT_EQ(t.send(prompt("x"), tag("m")).text, "multi\nline\n");
  EXPECT_THROW(load_script(dir / "missing.yaml"), IoError);
}

TEST(Script, ConcurrentCallersEachGetOneEntry) {
  std::string yaml;
  for (int i = 0; i < 400; ++i) yaml += "- response: r" + std::to_string(i) + "\n";
  Gateway g = scripted(yaml);
  std::vector<std::thread> threads;
  std::mutex mu;
  std::set<std::string> seen;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) {
        auto r = g.complete(prompt("p"), tag("m"));
        std::lock_guard lock(mu);
        seen.insert(r);
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(g.request_count(), 400u);
}

TEST(Endpoint, Resolution) {
  using P = std::pair<std::string, std::string>;
  EXPECT_EQ(HttpTransport::resolve_endpoint("http://h:8000"), (P{"http://h:8000", "/v1/chat/completions"}));
  EXPECT_EQ(HttpTransport::resolve_endpoint("https://api.runpod.ai/v2/abc/openai/v1"),
            (P{"https://api.runpod.ai", "/v2/abc/openai/v1/chat/completions"}));
  EXPECT_EQ(HttpTransport::resolve_endpoint("http://h/v1/chat/completions/"), (P{"http://h", "/v1/chat/completions"}));
  EXPECT_THROW(HttpTransport::resolve_endpoint("localhost:8000"), ValidationError);
}

TEST(Live, RetriesServerErrorsThenSucceeds) {
  FakeServer server({{500}, {500}, {200, "PONG"}});
  RecordingSleeper sleeper;
  Gateway g(live_spec(server.url()), std::make_unique<HttpTransport>(live_spec(server.url()), "k3y"), sleeper.fn());
  EXPECT_EQ(g.complete(prompt("ping"), tag("A#b")), "PONG");
  const auto recs = g.records();
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].outcome, Outcome::bad_status);
  EXPECT_EQ(recs[0].http_status, 500);
  EXPECT_EQ(recs[2].outcome, Outcome::ok);
  EXPECT_EQ(recs[2].attempt, 3);
  ASSERT_EQ(sleeper.calls->size(), 2u);
  EXPECT_GE((*sleeper.calls)[0], 2.0);
  EXPECT_LT((*sleeper.calls)[0], 2.5);
  EXPECT_GE((*sleeper.calls)[1], 4.0);
  EXPECT_LT((*sleeper.calls)[1], 5.0);

  const json body = json::parse(server.bodies().at(0));
  EXPECT_EQ(body["model"], "llama-70b");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "ping");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(server.auth().at(0), "Bearer k3y");
}

TEST(Live, AuthErrorIsNeverRetried) {
  for (int status : {401, 403}) {
    FakeServer server({{status}, {200}});
    Gateway g(live_spec(server.url()), std::make_unique<HttpTransport>(live_spec(server.url()), "bad"),
              RecordingSleeper().fn());
    EXPECT_THROW(g.complete(prompt("p"), tag("m")), AuthError);
    EXPECT_EQ(server.hits(), 1u);
    EXPECT_EQ(g.request_count(), 1u);
  }
}

TEST(Live, RetriesExhaustedIsBackendUnavailable) {
  FakeServer server({{503}, {429}, {502}});
  Gateway g(live_spec(server.url(), 2), std::make_unique<HttpTransport>(live_spec(server.url(), 2), "k"),
            RecordingSleeper().fn());
  EXPECT_THROW(g.complete(prompt("p"), tag("m")), BackendUnavailable);
  EXPECT_EQ(server.hits(), 3u);
  EXPECT_EQ(g.request_count(), 3u);
}

TEST(Live, ClientErrorIsNotRetried) {
  FakeServer server({{400}, {200}});
  Gateway g(live_spec(server.url()), std::make_unique<HttpTransport>(live_spec(server.url()), "k"),
            RecordingSleeper().fn());
  EXPECT_THROW(g.complete(prompt("p"), tag("m")), BackendUnavailable);
  EXPECT_EQ(server.hits(), 1u);
}

TEST(Live, TimeoutIsRetried) {
  FakeServer server({{200, "late", 1500}, {200, "on time"}});
  const auto spec = live_spec(server.url(), 1, 0.3);
  Gateway g(spec, std::make_unique<HttpTransport>(spec, "k"), RecordingSleeper().fn());
  EXPECT_EQ(g.complete(prompt("p"), tag("m")), "on time");
  const auto recs = g.records();
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].outcome, Outcome::timeout);
}

TEST(Live, MalformedBodyIsTransportError) {
  FakeServer server({{200, "", 0, "{\"choices\": []}"}, {200, "", 0, "not json"}, {200, "fine"}});
  Gateway g(live_spec(server.url()), std::make_unique<HttpTransport>(live_spec(server.url()), "k"),
            RecordingSleeper().fn());
  EXPECT_EQ(g.complete(prompt("p"), tag("m")), "fine");
  const auto recs = g.records();
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].outcome, Outcome::transport_error);
  EXPECT_EQ(recs[1].outcome, Outcome::transport_error);
}

TEST(Live, ConnectionRefusedIsTransportError) {
  std::string url;
  {
    FakeServer probe({});
    url = probe.url();
  }
  const auto spec = live_spec(url, 1, 1);
  Gateway g(spec, std::make_unique<HttpTransport>(spec, "k"), RecordingSleeper().fn());
  EXPECT_THROW(g.complete(prompt("p"), tag("m")), BackendUnavailable);
  for (const auto& r : g.records()) EXPECT_NE(r.outcome, Outcome::ok);
}

TEST(MakeGateway, LiveNeedsKeyInEnvironment) {
  auto spec = live_spec("http://127.0.0.1:9");
  spec.api_key_env_name = "TESTFORGE_TEST_UNSET_KEY";
  unsetenv("TESTFORGE_TEST_UNSET_KEY");
  EXPECT_THROW(make_gateway(spec), AuthError);
  setenv("TESTFORGE_TEST_UNSET_KEY", "v", 1);
  EXPECT_EQ(make_gateway(spec)->transport_name(), "live");
  unsetenv("TESTFORGE_TEST_UNSET_KEY");

  BackendSpec bad;
  bad.mode = BackendMode::scripted;
  EXPECT_THROW(make_gateway(bad), ValidationError);
}

TEST(Backoff, JitteredExponential) {
  BackendSpec spec = scripted_spec();
  spec.retry_backoff_seconds = 2.0;
  Gateway g(spec, std::make_unique<ScriptedTransport>(ScriptQueue{}));
  for (int i = 0; i < 200; ++i) {
    for (int r = 1; r <= 4; ++r) {
      const double base = 2.0 * (1 << (r - 1));
      const double d = g.backoff(r).count();
      EXPECT_GE(d, base);
      EXPECT_LT(d, base * 1.25);
    }
  }
}
