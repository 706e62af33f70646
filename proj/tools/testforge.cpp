// testforge run|serve: container entrypoint for the test generation pipeline.
#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "testforge/error.hpp"
#include "testforge/pipeline.hpp"
#include "testforge/process.hpp"
#include "testforge/service.hpp"
#include "testforge/text.hpp"

namespace fs = std::filesystem;
using namespace testforge;

namespace {

constexpr int kExitFatal = 1;
constexpr int kExitUsage = 2;

struct RunArgs {
  std::string repo, local, branch, config, backend, script, out;
  int max_iterations = 0;
  bool dry_run_publish = false;
};

struct ServeArgs {
  std::string bind = "127.0.0.1:8080";
  std::string config, backend, script, out;
};

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

// Reads config.yaml and applies CLI overrides. Paths written in the file are
// relative to the file's directory.
RunConfig load_config(const fs::path& path, const std::string& backend, const std::string& script) {
  RunConfig cfg = parse_run_config(text::read_file(path));
  const fs::path dir = path.parent_path();
  if (!cfg.backend.script_path.empty()) cfg.backend.script_path = resolve(cfg.backend.script_path, dir).string();
  if (!cfg.build.fake_script.empty()) cfg.build.fake_script = resolve(cfg.build.fake_script, dir).string();
  if (!backend.empty()) cfg.backend.mode = backend == "scripted" ? BackendMode::scripted : BackendMode::live;
  if (!script.empty()) cfg.backend.script_path = fs::absolute(script).string();
  validate_backend(cfg.backend);
  return cfg;
}

fs::path templates_dir_for(const fs::path& config_path) {
  const fs::path dir = config_path.parent_path() / "templates";
  return fs::is_directory(dir) ? dir : fs::path();
}

std::unique_ptr<Clock> pick_clock() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch)
    return std::make_unique<FixedClock>(TimePoint(std::chrono::seconds(std::stoll(epoch))));
  return std::make_unique<SystemClock>();
}

fs::path clone_repo(const std::string& url, const std::string& branch) {
  std::string tmpl = (fs::temp_directory_path() / "testforge-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw IoError("cannot create a temporary directory");
  const fs::path dest = fs::path(tmpl) / "repo";
  std::vector<std::string> argv{"git", "clone", "--quiet"};
  if (!branch.empty()) argv.insert(argv.end(), {"--branch", branch});
  argv.insert(argv.end(), {url, dest.string()});
  const auto r = run_process(argv);
  if (r.exit_code != 0) throw VcsError("git clone failed: " + text::trim_copy(r.output));
  return dest;
}

int cmd_run(const RunArgs& a) {
  if (a.repo.empty() == a.local.empty()) {
    std::cerr << "error: exactly one of --repo and --local is required\n";
    return kExitUsage;
  }
  const fs::path workspace = a.local.empty() ? clone_repo(a.repo, a.branch) : fs::absolute(a.local);
  if (!fs::is_directory(workspace)) throw IoError("workspace " + workspace.string() + " is not a directory");
  const fs::path config_path = a.config.empty() ? workspace / "config.yaml" : fs::absolute(a.config);
  if (!fs::exists(config_path)) throw IoError("config file " + config_path.string() + " not found");

  PipelineOptions opt;
  opt.workspace = workspace;
  opt.config = load_config(config_path, a.backend, a.script);
  if (a.max_iterations) opt.config.max_iterations = a.max_iterations;
  opt.templates_dir = templates_dir_for(config_path);
  opt.out_dir = a.out.empty() ? workspace / "out" : fs::absolute(a.out);
  opt.dry_run_publish = a.dry_run_publish;
  if (!a.branch.empty()) opt.base_branch = a.branch;
  else if (auto b = current_git_branch(workspace)) opt.base_branch = *b;
  const auto clock = pick_clock();
  opt.clock = clock.get();
  opt.progress = &std::cerr;

  const PipelineResult result = run_pipeline(opt);
  std::cout << text::read_file(result.out_dir / "report.txt");
  std::cout << "report: " << (result.out_dir / "report.json").string() << "\n";
  if (result.publish_error) {
    std::cerr << "error: publish failed: " << *result.publish_error << "\n";
    return kExitFatal;
  }
  return 0;
}

std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--bind must be host:port");
  return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
}

int cmd_serve(const ServeArgs& a) {
  std::pair<std::string, int> addr;
  try {
    addr = split_bind(a.bind);
  } catch (const std::exception&) {
    std::cerr << "error: --bind must be host:port\n";
    return kExitUsage;
  }

  RunConfig cfg;
  fs::path templates;
  if (!a.config.empty()) {
    cfg = load_config(fs::absolute(a.config), a.backend, a.script);
    templates = templates_dir_for(fs::absolute(a.config));
  } else {
    if (!a.backend.empty()) cfg.backend.mode = a.backend == "scripted" ? BackendMode::scripted : BackendMode::live;
    if (!a.script.empty()) cfg.backend.script_path = fs::absolute(a.script).string();
    validate_backend(cfg.backend);
  }

  // Signals are taken by a dedicated thread so shutdown runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto gateway = make_gateway(cfg.backend);
  SessionManager::Options sopt;
  sopt.java_version = cfg.java_version;
  sopt.context_budget_tokens = cfg.backend.context_budget_tokens;
  if (!a.out.empty()) sopt.snapshot_dir = fs::absolute(a.out) / "sessions";
  SessionManager sessions(*gateway, templates.empty() ? PromptTemplates::defaults() : PromptTemplates::load(templates),
                          sopt);
  ServiceOptions svc_opt;
  if (const char* token = std::getenv("API_AUTH_TOKEN")) svc_opt.auth_token = token;
  Service service(sessions, svc_opt, gateway->transport_name());

  const int port = service.bind(addr.first, addr.second);
  if (port < 0) {
    std::cerr << "error: cannot bind " << a.bind << "\n";
    return kExitFatal;
  }
  std::cerr << "[testforge] listening on " << addr.first << ":" << port << "\n";

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "[testforge] shutting down\n";
    service.stop();
  });
  service.listen();
  if (waiter.joinable()) {
    // listen() can also end on its own; wake the waiter so it can exit.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generates JUnit tests for Java classes with a language model."};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline on a repository or local checkout");
  run_cmd->add_option("--repo", run.repo, "Repository URL to clone");
  run_cmd->add_option("--local", run.local, "Local project directory");
  run_cmd->add_option("--branch", run.branch, "Branch to clone and base the publish branch on");
  run_cmd->add_option("--config", run.config, "Config file (default: <project>/config.yaml)");
  run_cmd->add_option("--backend", run.backend, "Model backend")->check(CLI::IsMember({"live", "scripted"}));
  run_cmd->add_option("--script", run.script, "Response script for the scripted backend");
  run_cmd->add_option("--max-iterations", run.max_iterations, "Runs per generated test")->check(CLI::Range(1, 1000));
  run_cmd->add_flag("--dry-run-publish", run.dry_run_publish, "Print the publish plan instead of pushing");
  run_cmd->add_option("--out", run.out, "Output directory (default: <project>/out)");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the chat session API");
  serve_cmd->add_option("--bind", serve.bind, "host:port to listen on")->capture_default_str();
  serve_cmd->add_option("--config", serve.config, "Config file for backend settings");
  serve_cmd->add_option("--backend", serve.backend, "Model backend")->check(CLI::IsMember({"live", "scripted"}));
  serve_cmd->add_option("--script", serve.script, "Response script for the scripted backend");
  serve_cmd->add_option("--out", serve.out, "Directory for session snapshots (<out>/sessions)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    return cmd_serve(serve);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
}
