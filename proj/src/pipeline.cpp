#include "testforge/pipeline.hpp"

#include <map>

#include "testforge/error.hpp"
#include "testforge/java_analyzer.hpp"
#include "testforge/postprocess.hpp"
#include "testforge/prompting.hpp"
#include "testforge/text.hpp"

namespace testforge {

namespace fs = std::filesystem;

std::unique_ptr<BuildAdapter> make_adapter(const fs::path& workspace, const BuildSpec& spec) {
  if (spec.adapter == AdapterKind::fake) {
    if (spec.fake_script.empty()) return std::make_unique<FakeAdapter>();
    return std::make_unique<FakeAdapter>(FakeAdapter::load(spec.fake_script));
  }
  return std::make_unique<LiveAdapter>(workspace, spec);
}

namespace {

void say(std::ostream* out, const std::string& line) {
  if (out) *out << "[testforge] " << line << "\n" << std::flush;
}

// Leftovers of an earlier run in the same out dir would leak into this one.
void clear_previous_run(const fs::path& out_dir) {
  std::error_code ec;
  for (const char* name : {"work", "logs", "failed", "context"}) fs::remove_all(out_dir / name, ec);
  for (const char* name : {"imports.json", "report.json", "report.txt"}) fs::remove(out_dir / name, ec);
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

}  // namespace

PipelineResult run_pipeline(const PipelineOptions& opt) {
  SystemClock system_clock;
  const Clock& clock = opt.clock ? *opt.clock : system_clock;
  const TimePoint started = clock.now();
  const RunConfig& cfg = opt.config;
  const fs::path workspace = fs::absolute(opt.workspace);
  const fs::path out_dir = opt.out_dir.empty() ? workspace / "out" : fs::absolute(opt.out_dir);
  fs::create_directories(out_dir);
  clear_previous_run(out_dir);

  std::unique_ptr<Gateway> own_gateway;
  Gateway* gateway = opt.gateway;
  if (!gateway) {
    own_gateway = make_gateway(cfg.backend, opt.sleeper);
    gateway = own_gateway.get();
  }
  std::unique_ptr<BuildAdapter> own_adapter;
  BuildAdapter* adapter = opt.adapter;
  if (!adapter) {
    own_adapter = make_adapter(workspace, cfg.build);
    adapter = own_adapter.get();
  }
  const PromptTemplates templates =
      opt.templates_dir.empty() ? PromptTemplates::defaults() : PromptTemplates::load(opt.templates_dir);
  ImportLedger ledger(out_dir / "imports.json");

  const fs::path source_root = workspace / cfg.build.source_root;
  if (!fs::is_directory(source_root)) throw IoError("source root " + source_root.string() + " does not exist");
  const auto units = java::scan_tree(source_root);
  say(opt.progress, "scanned " + std::to_string(units.size()) + " source files under " + cfg.build.source_root);

  LoopEnv env{cfg, *gateway, *adapter, templates, ledger, out_dir, opt.extraction_deadline_seconds};
  PipelineResult result;
  result.out_dir = out_dir;
  std::vector<std::string> errors;

  struct ClassRun {
    std::string name;
    std::string package_name;
    std::vector<RefinementOutcome> tests;
  };
  std::vector<ClassRun> class_runs;

  for (const auto& target : cfg.targets) {
    const java::SourceUnit* unit = nullptr;
    const java::ClassModel* cls = nullptr;
    for (const auto& u : units) {
      if (const auto* c = u.find_class(target.class_name)) {
        unit = &u;
        cls = c;
        break;
      }
    }
    if (!cls) throw ClassNotFound("class " + target.class_name + " not found under " + cfg.build.source_root);
    const auto methods = java::extract_methods(*unit, target);
    say(opt.progress, cls->name + ": " + std::to_string(methods.size()) + " methods");

    ClassRun run{cls->name, unit->package_name, {}};
    int next_index = 1;
    std::map<std::string, int> seen_names;
    for (const auto& method : methods) {
      const auto ctx = java::collect_dependencies(method, *unit, *cls, units, cfg.java_version);
      const int overload = seen_names[method.name]++;
      const std::string dump_name = method.name + (overload ? "_" + std::to_string(overload + 1) : "") + ".json";
      text::write_file(out_dir / "context" / cls->name / dump_name, java::context_to_json(ctx));

      MethodOutcome mo = generate_and_refine(ctx, env, next_index);
      if (mo.error) {
        say(opt.progress, cls->name + "#" + method.name + ": " + *mo.error);
      } else {
        int passed = 0;
        for (const auto& t : mo.tests) passed += t.terminal == Terminal::passed;
        say(opt.progress, cls->name + "#" + method.name + ": " + std::to_string(mo.tests.size()) + " tests, " +
                              std::to_string(passed) + " passed");
      }
      for (const auto& t : mo.tests) run.tests.push_back(t);
      result.outcomes.push_back(std::move(mo));
    }
    class_runs.push_back(std::move(run));
  }

  // merge
  std::vector<fs::path> merged;
  for (const auto& run : class_runs) {
    try {
      const std::string source = merge_passing_tests(run.tests, ledger, run.name, run.package_name);
      merged.push_back(place_merged_test(workspace, cfg.build, run.package_name, run.name, source));
      say(opt.progress, "merged " + relative_to(merged.back(), workspace));
    } catch (const NothingToMerge&) {
      say(opt.progress, run.name + ": no passing tests to merge");
    } catch (const IoError& e) {
      errors.push_back(e.what());
    }
  }

  std::vector<RefinementOutcome> all_tests;
  for (const auto& run : class_runs) all_tests.insert(all_tests.end(), run.tests.begin(), run.tests.end());
  const auto failed = emit_failures(all_tests, out_dir);

  std::optional<std::string> build_status;
  if (!merged.empty()) {
    try {
      const FinalBuild fb = final_build(*adapter, out_dir);
      build_status = fb.ok ? "passed" : std::string(to_string(fb.status));
    } catch (const RunnerError& e) {
      build_status = "runner_error";
      errors.push_back(std::string("final build: ") + e.what());
    }
  }

  std::optional<CoverageSummary> coverage;
  const fs::path coverage_path = workspace / cfg.build.coverage_report;
  if (fs::exists(coverage_path)) {
    try {
      coverage = parse_coverage(text::read_file(coverage_path));
    } catch (const CoverageFormatError& e) {
      errors.push_back(std::string("coverage: ") + e.what());
    }
  }

  ReportOptions ropts;
  ropts.max_iterations = cfg.max_iterations;
  ropts.cost_per_minute = cfg.backend.cost_per_minute;
  ropts.currency = cfg.backend.currency;
  RunReport report = compute_report(result.outcomes, gateway->records(), coverage, started, clock.now(), ropts);
  for (const auto& p : merged) report.merged_files.push_back(relative_to(p, workspace));
  for (const auto& p : failed) report.failed_files.push_back(relative_to(p, out_dir));
  report.final_build = build_status;
  report.errors = errors;

  const bool publish = cfg.publish.enabled || opt.dry_run_publish;
  if (publish) {
    std::vector<fs::path> paths = merged;
    if (!failed.empty()) paths.push_back(out_dir / "failed");
    paths.push_back(out_dir / "report.json");
    paths.push_back(out_dir / "report.txt");
    result.publish_plan = plan_publish(workspace, opt.base_branch, clock, cfg.publish, paths);
    report.publish_branch = result.publish_plan->branch;
    report.publish_dry_run = opt.dry_run_publish;
  }
  write_report(report, out_dir);

  if (publish) {
    if (opt.dry_run_publish) {
      for (const auto& line : text::split_lines(result.publish_plan->describe())) say(opt.progress, "[dry-run] " + line);
    } else {
      try {
        std::vector<fs::path> owned = merged;
        owned.push_back(out_dir);
        execute_publish(workspace, *result.publish_plan, owned);
        say(opt.progress, "pushed " + result.publish_plan->branch + " to " + result.publish_plan->remote);
      } catch (const VcsError& e) {
        result.publish_error = e.what();
        report.errors.push_back(std::string("publish: ") + e.what());
        write_report(report, out_dir);
      }
    }
  }
  result.report = std::move(report);
  return result;
}

}  // namespace testforge
