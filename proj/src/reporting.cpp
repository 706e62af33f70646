#include "testforge/reporting.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <nlohmann/json.hpp>
#include <sstream>

#include "testforge/error.hpp"
#include "testforge/text.hpp"

namespace testforge {

namespace pt = boost::property_tree;

// ---- coverage -----------------------------------------------------------

namespace {

long long counter_value(const pt::ptree& counter, const char* attr) {
  const auto raw = counter.get_optional<std::string>(std::string("<xmlattr>.") + attr);
  if (!raw) throw CoverageFormatError(std::string("counter without '") + attr + "' attribute");
  long long v = 0;
  const auto* b = raw->data();
  const auto [p, ec] = std::from_chars(b, b + raw->size(), v);
  if (ec != std::errc{} || p != b + raw->size() || v < 0)
    throw CoverageFormatError(std::string("counter attribute '") + attr + "' is not a count: " + *raw);
  return v;
}

// Direct <counter> children of `node`; true if any LINE or BRANCH was seen.
bool add_counters(const pt::ptree& node, CoverageCounts& into) {
  bool seen = false;
  for (const auto& [key, child] : node) {
    if (key != "counter") continue;
    const auto type = child.get<std::string>("<xmlattr>.type", "");
    if (type == "LINE") {
      into.line_missed += counter_value(child, "missed");
      into.line_covered += counter_value(child, "covered");
      seen = true;
    } else if (type == "BRANCH") {
      into.branch_missed += counter_value(child, "missed");
      into.branch_covered += counter_value(child, "covered");
      seen = true;
    }
  }
  return seen;
}

std::string simple_class_name(const std::string& jvm_name) {
  std::string s = jvm_name;
  if (auto slash = s.rfind('/'); slash != std::string::npos) s = s.substr(slash + 1);
  if (auto dot = s.rfind('.'); dot != std::string::npos) s = s.substr(dot + 1);
  if (auto dollar = s.find('$'); dollar != std::string::npos) s = s.substr(0, dollar);
  return s;
}

double percent(long long part, long long whole) {
  return whole > 0 ? 100.0 * static_cast<double>(part) / static_cast<double>(whole) : 0.0;
}

}  // namespace

CoverageSummary parse_coverage(std::string_view xml) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw CoverageFormatError(std::string("malformed coverage XML: ") + e.what());
  }
  const auto report = doc.get_child_optional("report");
  if (!report) throw CoverageFormatError("coverage document has no <report> root");

  CoverageCounts top;
  bool found = add_counters(*report, top);
  CoverageCounts pkg_sum, cls_sum;
  bool pkg_found = false, cls_found = false;
  CoverageSummary s;
  auto walk_classes = [&](const pt::ptree& pkg) {
    for (const auto& [key, cls] : pkg) {
      if (key != "class") continue;
      CoverageCounts c;
      if (add_counters(cls, c)) {
        cls_found = true;
        auto& slot = s.per_class[simple_class_name(cls.get<std::string>("<xmlattr>.name", ""))];
        slot.line_covered += c.line_covered;
        slot.line_missed += c.line_missed;
        slot.branch_covered += c.branch_covered;
        slot.branch_missed += c.branch_missed;
        cls_sum.line_covered += c.line_covered;
        cls_sum.line_missed += c.line_missed;
        cls_sum.branch_covered += c.branch_covered;
        cls_sum.branch_missed += c.branch_missed;
      }
    }
  };
  for (const auto& [key, node] : *report) {
    if (key == "package") {
      pkg_found = add_counters(node, pkg_sum) || pkg_found;
      walk_classes(node);
    } else if (key == "group") {
      for (const auto& [k2, pkg] : node)
        if (k2 == "package") {
          pkg_found = add_counters(pkg, pkg_sum) || pkg_found;
          walk_classes(pkg);
        }
    }
  }
  const CoverageCounts* use = nullptr;
  if (found) use = &top;
  else if (pkg_found) use = &pkg_sum;
  else if (cls_found) use = &cls_sum;
  if (!use) throw CoverageFormatError("coverage document has no LINE or BRANCH counters");

  s.executed_statements = use->line_covered;
  s.total_statements = use->line_covered + use->line_missed;
  s.degenerate = s.total_statements == 0;
  s.line_percent = percent(s.executed_statements, s.total_statements);
  s.branch_covered = use->branch_covered;
  s.branch_total = use->branch_covered + use->branch_missed;
  s.branch_percent = percent(s.branch_covered, s.branch_total);
  return s;
}

// ---- numbers ------------------------------------------------------------

CostEstimate estimate_cost(double wall_minutes, double rate_per_minute, std::string_view currency) {
  CostEstimate c;
  c.amount = std::round(wall_minutes * rate_per_minute * 100.0) / 100.0;
  c.rate_per_minute = rate_per_minute;
  c.currency = std::string(currency);
  return c;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0" || s == "-0.0" || s == "-0.00") s.erase(0, 1);
  return s;
}

// Up to two decimals, trailing zeros dropped.
std::string short_number(double v) {
  std::string s = fixed(std::round(v * 100.0) / 100.0, 2);
  while (s.find('.') != std::string::npos && (s.back() == '0' || s.back() == '.')) {
    const bool dot = s.back() == '.';
    s.pop_back();
    if (dot) break;
  }
  return s;
}

std::string iso_utc(TimePoint t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string row_label(const ClassStats& row) {
  return row.name + " (" + std::to_string(row.methods_count) + (row.methods_count == 1 ? " method)" : " methods)");
}

void bucket(ClassStats& s, const RefinementOutcome& t) {
  if (t.terminal != Terminal::passed) return;
  ++s.total_passed;
  if (t.passed_at <= 1) ++s.passed_at_1;
  if (t.passed_at <= 5) ++s.passed_by_5;
  if (t.passed_at <= 10) ++s.passed_by_10;
}

}  // namespace

std::string format_percent(double p) {
  const double r = std::round(p * 10.0) / 10.0;
  if (r == std::round(r)) return fixed(r, 0) + "%";
  return fixed(r, 1) + "%";
}

RunReport compute_report(const std::vector<MethodOutcome>& outcomes, const std::vector<CompletionRecord>& records,
                         const std::optional<CoverageSummary>& coverage, TimePoint started, TimePoint finished,
                         const ReportOptions& options) {
  RunReport r;
  r.started_at = iso_utc(started);
  r.finished_at = iso_utc(finished);
  r.wall_minutes = std::max(0.0, std::chrono::duration<double>(finished - started).count() / 60.0);
  r.max_iterations = options.max_iterations;
  r.aggregate.name = "Total";

  std::map<std::string, std::size_t> index;
  for (const auto& mo : outcomes) {
    auto [it, fresh] = index.emplace(mo.class_name, r.classes.size());
    if (fresh) {
      ClassStats fresh_row;
      fresh_row.name = mo.class_name;
      r.classes.push_back(std::move(fresh_row));
    }
    ClassStats& s = r.classes[it->second];
    ++s.methods_count;
    ++r.aggregate.methods_count;
    s.generated_tests += static_cast<int>(mo.tests.size());
    r.aggregate.generated_tests += static_cast<int>(mo.tests.size());

    MethodSummary ms;
    ms.method_id = mo.class_name + "#" + mo.method_name;
    ms.error = mo.error;
    for (const auto& t : mo.tests) {
      bucket(s, t);
      bucket(r.aggregate, t);
      TestSummary ts;
      ts.test_id = t.test_id();
      ts.terminal = std::string(to_string(t.terminal));
      ts.passed_at = t.passed_at;
      ts.llm_calls = t.llm_calls;
      for (const auto& run : t.trace) ts.statuses.emplace_back(to_string(run.status));
      ts.note = t.note;
      ms.tests.push_back(std::move(ts));
    }
    r.methods.push_back(std::move(ms));
  }

  if (coverage) {
    r.coverage = coverage;
    r.aggregate.coverage_percent = coverage->line_percent;
    for (auto& s : r.classes) {
      auto it = coverage->per_class.find(s.name);
      if (it == coverage->per_class.end()) continue;
      const long long total = it->second.line_covered + it->second.line_missed;
      if (total > 0) s.coverage_percent = percent(it->second.line_covered, total);
    }
  }

  r.llm_requests = static_cast<long long>(records.size());
  r.requests_by_phase = {{"chat", 0}, {"generation", 0}, {"refinement", 0}};
  for (const auto& rec : records) ++r.requests_by_phase[std::string(to_string(rec.phase))];

  if (options.cost_per_minute) r.cost = estimate_cost(r.wall_minutes, *options.cost_per_minute, options.currency);
  return r;
}

std::string render_generation_row(const ClassStats& row) {
  return row_label(row) + " | " + std::to_string(row.generated_tests) + " | " + std::to_string(row.total_passed) +
         " | " + (row.coverage_percent ? format_percent(*row.coverage_percent) : std::string("-"));
}

std::string render_iteration_row(const ClassStats& row) {
  return row_label(row) + " | " + std::to_string(row.passed_at_1) + " | " + std::to_string(row.passed_by_5) +
         " | " + std::to_string(row.passed_by_10);
}

std::string render_telemetry_line(const RunReport& report) {
  auto phase = [&](const char* name) {
    auto it = report.requests_by_phase.find(name);
    return std::to_string(it == report.requests_by_phase.end() ? 0 : it->second);
  };
  return "Telemetry: " + std::to_string(report.llm_requests) + " requests (generation " + phase("generation") +
         ", refinement " + phase("refinement") + ", chat " + phase("chat") + "), " +
         short_number(report.wall_minutes) + " minutes";
}

std::string render_cost_line(const CostEstimate& cost, double wall_minutes, long long requests) {
  return "Cost: " + fixed(cost.amount, 2) + " " + cost.currency + " (" + short_number(wall_minutes) +
         " minutes at " + fixed(cost.rate_per_minute, 2) + " " + cost.currency + "/min, " + std::to_string(requests) +
         " requests)";
}

std::string render_report_text(const RunReport& r) {
  std::ostringstream s;
  s << "Test generation statistics\n";
  s << "Class | Generated Tests | Total Passed | Overall Coverage\n";
  for (const auto& row : r.classes) s << render_generation_row(row) << "\n";
  s << render_generation_row(r.aggregate) << "\n\n";
  s << "Passed tests by iteration (max " << r.max_iterations << ")\n";
  s << "Class | Passed in the 1st iteration | Passed by the 5th iteration | Passed by the 10th iteration\n";
  for (const auto& row : r.classes) s << render_iteration_row(row) << "\n";
  s << render_iteration_row(r.aggregate) << "\n\n";
  s << render_telemetry_line(r) << "\n";
  if (r.cost) s << render_cost_line(*r.cost, r.wall_minutes, r.llm_requests) << "\n";
  if (r.coverage) {
    s << "Coverage: " << r.coverage->executed_statements << "/" << r.coverage->total_statements
      << " statements (" << format_percent(r.coverage->line_percent) << "), branches " << r.coverage->branch_covered
      << "/" << r.coverage->branch_total << " (" << format_percent(r.coverage->branch_percent) << ")";
    if (r.coverage->degenerate) s << " [warning: no statements in coverage report]";
    s << "\n";
  }
  if (r.final_build) s << "Final build: " << *r.final_build << "\n";
  for (const auto& f : r.merged_files) s << "Merged: " << f << "\n";
  for (const auto& f : r.failed_files) s << "Failed (text): " << f << "\n";
  if (r.publish_branch) s << "Branch: " << *r.publish_branch << (r.publish_dry_run ? " (dry run)" : "") << "\n";
  for (const auto& e : r.errors) s << "Error: " << e << "\n";
  return s.str();
}

namespace {

nlohmann::ordered_json stats_json(const ClassStats& s) {
  nlohmann::ordered_json j;
  j["class"] = s.name;
  j["methods_count"] = s.methods_count;
  j["generated_tests"] = s.generated_tests;
  j["total_passed"] = s.total_passed;
  j["passed_at_1"] = s.passed_at_1;
  j["passed_by_5"] = s.passed_by_5;
  j["passed_by_10"] = s.passed_by_10;
  j["coverage_percent"] = s.coverage_percent ? nlohmann::ordered_json(*s.coverage_percent) : nlohmann::ordered_json();
  return j;
}

}  // namespace

std::string render_report_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["started_at"] = r.started_at;
  j["finished_at"] = r.finished_at;
  j["wall_minutes"] = r.wall_minutes;
  j["max_iterations"] = r.max_iterations;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : r.classes) j["classes"].push_back(stats_json(c));
  j["aggregate"] = stats_json(r.aggregate);
  j["llm_requests"] = r.llm_requests;
  j["requests_by_phase"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.requests_by_phase) j["requests_by_phase"][k] = v;
  if (r.cost) {
    j["cost"] = {{"amount", r.cost->amount}, {"currency", r.cost->currency}, {"rate_per_minute", r.cost->rate_per_minute}};
  } else {
    j["cost"] = nullptr;
  }
  if (r.coverage) {
    j["coverage"] = {{"executed_statements", r.coverage->executed_statements},
                     {"total_statements", r.coverage->total_statements},
                     {"line_percent", r.coverage->line_percent},
                     {"branch_covered", r.coverage->branch_covered},
                     {"branch_total", r.coverage->branch_total},
                     {"branch_percent", r.coverage->branch_percent},
                     {"degenerate", r.coverage->degenerate}};
  } else {
    j["coverage"] = nullptr;
  }
  j["methods"] = nlohmann::ordered_json::array();
  for (const auto& m : r.methods) {
    nlohmann::ordered_json mj;
    mj["method"] = m.method_id;
    mj["error"] = m.error ? nlohmann::ordered_json(*m.error) : nlohmann::ordered_json();
    mj["tests"] = nlohmann::ordered_json::array();
    for (const auto& t : m.tests) {
      nlohmann::ordered_json tj;
      tj["test"] = t.test_id;
      tj["terminal"] = t.terminal;
      tj["passed_at"] = t.passed_at ? nlohmann::ordered_json(t.passed_at) : nlohmann::ordered_json();
      tj["llm_calls"] = t.llm_calls;
      tj["trace"] = t.statuses;
      tj["note"] = t.note;
      mj["tests"].push_back(std::move(tj));
    }
    j["methods"].push_back(std::move(mj));
  }
  j["merged_files"] = r.merged_files;
  j["failed_files"] = r.failed_files;
  j["final_build"] = r.final_build ? nlohmann::ordered_json(*r.final_build) : nlohmann::ordered_json();
  if (r.publish_branch) {
    j["publish"] = {{"branch", *r.publish_branch}, {"dry_run", r.publish_dry_run}};
  } else {
    j["publish"] = nullptr;
  }
  j["errors"] = r.errors;
  return j.dump(2) + "\n";
}

void write_report(const RunReport& report, const std::filesystem::path& out_dir) {
  text::write_file(out_dir / "report.json", render_report_json(report));
  text::write_file(out_dir / "report.txt", render_report_text(report));
}

}  // namespace testforge
