#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "testforge/error.hpp"
#include "testforge/reporting.hpp"

using namespace testforge;
using json = nlohmann::json;

namespace {

const TimePoint kStart = TimePoint(std::chrono::seconds(1735732800));

bool has(const std::string& hay, std::string_view needle) { return hay.find(needle) != std::string::npos; }

RefinementOutcome test_outcome(const std::string& cls, int k, Terminal terminal, int passed_at, int runs) {
  RefinementOutcome o;
  o.class_name = cls;
  o.method_name = "m";
  o.test_class = cls + "Temp" + std::to_string(k);
  o.test_method = "t";
  o.terminal = terminal;
  o.passed_at = passed_at;
  for (int i = 1; i <= runs; ++i) {
    TestRunResult r;
    r.iteration = i;
    r.status = (terminal == Terminal::passed && i == runs) ? RunStatus::passed : RunStatus::test_failed;
    o.trace.push_back(r);
  }
  o.llm_calls = runs;
  return o;
}

// 12 methods, 38 tests: 19 pass at 1, 8 more by 5, 2 more by 10, 9 exhausted.
std::vector<MethodOutcome> mongodb_outcomes() {
  std::vector<int> passed_at;
  for (int i = 0; i < 19; ++i) passed_at.push_back(1);
  for (int v : {2, 2, 3, 3, 4, 4, 5, 5}) passed_at.push_back(v);
  for (int v : {7, 10}) passed_at.push_back(v);
  for (int i = 0; i < 9; ++i) passed_at.push_back(0);
  const std::vector<std::string> classes{"ProductService", "CustomerService", "OrderService"};
  std::vector<MethodOutcome> out;
  for (int m = 0; m < 12; ++m) {
    MethodOutcome mo;
    mo.class_name = classes[m / 4];
    mo.method_name = "method" + std::to_string(m);
    out.push_back(mo);
  }
  int k = 1;
  for (std::size_t i = 0; i < passed_at.size(); ++i) {
    auto& mo = out[i % 12];
    const int p = passed_at[i];
    mo.tests.push_back(p ? test_outcome(mo.class_name, k++, Terminal::passed, p, p)
                         : test_outcome(mo.class_name, k++, Terminal::exhausted, 0, 10));
  }
  return out;
}

std::vector<CompletionRecord> records(int generation, int refinement) {
  std::vector<CompletionRecord> out;
  for (int i = 0; i < generation; ++i) out.push_back({"fp", "C#m", Phase::generation, 0, "r", 0, 1, Outcome::ok, 200});
  for (int i = 0; i < refinement; ++i) out.push_back({"fp", "C#m", Phase::refinement, 1, "r", 0, 1, Outcome::ok, 200});
  return out;
}

}  // namespace

// ---- tables -----------------------------------------------------------------

TEST(Report, GenerationRowMatchesTable) {
  const auto cov = parse_coverage(testsupport::slurp(testsupport::fixtures() / "coverage" / "statements-47-of-50.xml"));
  ReportOptions opt;
  opt.max_iterations = 10;
  const auto r = compute_report(mongodb_outcomes(), records(12, 41), cov, kStart, kStart + std::chrono::minutes(20), opt);
  ClassStats row = r.aggregate;
  row.name = "MongodbCRUD";
  EXPECT_EQ(render_generation_row(row), "MongodbCRUD (12 methods) | 38 | 29 | 94%");
  EXPECT_EQ(render_iteration_row(row), "MongodbCRUD (12 methods) | 19 | 27 | 29");
  EXPECT_EQ(r.aggregate.passed_at_1, 19);
  EXPECT_EQ(r.aggregate.passed_by_5, 27);
  EXPECT_EQ(r.aggregate.passed_by_10, 29);
  EXPECT_EQ(r.aggregate.total_passed, 29);
  EXPECT_EQ(r.aggregate.generated_tests, 38);
  ASSERT_EQ(r.classes.size(), 3u);
  int sum = 0;
  for (const auto& c : r.classes) sum += c.generated_tests;
  EXPECT_EQ(sum, 38);
}

TEST(Report, TelemetryAndCost) {
  ReportOptions opt;
  opt.cost_per_minute = 0.20;
  const auto r =
      compute_report(mongodb_outcomes(), records(12, 41), std::nullopt, kStart, kStart + std::chrono::minutes(20), opt);
  EXPECT_EQ(r.llm_requests, 53);
  EXPECT_DOUBLE_EQ(r.wall_minutes, 20.0);
  ASSERT_TRUE(r.cost);
  EXPECT_DOUBLE_EQ(r.cost->amount, 4.00);
  EXPECT_EQ(render_telemetry_line(r), "Telemetry: 53 requests (generation 12, refinement 41, chat 0), 20 minutes");
  EXPECT_EQ(render_cost_line(*r.cost, r.wall_minutes, r.llm_requests),
            "Cost: 4.00 € (20 minutes at 0.20 €/min, 53 requests)");
  const std::string text = render_report_text(r);
  EXPECT_TRUE(has(text, "53 requests"));
  EXPECT_TRUE(has(text, "4.00 €"));
}

TEST(Report, EmptyRun) {
  const auto r = compute_report({}, {}, std::nullopt, kStart, kStart, {});
  EXPECT_EQ(r.aggregate.methods_count, 0);
  EXPECT_EQ(r.aggregate.generated_tests, 0);
  EXPECT_EQ(r.aggregate.total_passed, 0);
  EXPECT_EQ(r.llm_requests, 0);
  EXPECT_FALSE(r.coverage);
  EXPECT_FALSE(r.aggregate.coverage_percent);
  EXPECT_FALSE(r.cost);
  const auto j = json::parse(render_report_json(r));
  EXPECT_FALSE(j.contains("coverage") && !j["coverage"].is_null());
}

TEST(Cost, Rounding) {
  EXPECT_DOUBLE_EQ(estimate_cost(20, 0.20, "€").amount, 4.00);
  EXPECT_DOUBLE_EQ(estimate_cost(0, 0.20, "€").amount, 0.0);
  EXPECT_DOUBLE_EQ(estimate_cost(7.5, 0.333, "$").amount, 2.50);
  EXPECT_EQ(estimate_cost(1, 1, "$").currency, "$");
}

TEST(Percent, Format) {
  EXPECT_EQ(format_percent(94.0), "94%");
  EXPECT_EQ(format_percent(88.6), "88.6%");
  EXPECT_EQ(format_percent(100.0), "100%");
  EXPECT_EQ(format_percent(0.0), "0%");
}

// ---- coverage ---------------------------------------------------------------

TEST(Coverage, FortySevenOfFifty) {
  const auto c = parse_coverage(testsupport::slurp(testsupport::fixtures() / "coverage" / "statements-47-of-50.xml"));
  EXPECT_EQ(c.executed_statements, 47);
  EXPECT_EQ(c.total_statements, 50);
  EXPECT_DOUBLE_EQ(c.line_percent, 100.0 * 47 / 50);
  EXPECT_EQ(format_percent(c.line_percent), "94%");
  EXPECT_EQ(c.branch_covered, 11);
  EXPECT_EQ(c.branch_total, 12);
  EXPECT_EQ(c.per_class.at("Alpha").line_covered, 29);
  EXPECT_FALSE(c.degenerate);
}

TEST(Coverage, FullAndDegenerate) {
  const auto full = parse_coverage("<report name=\"r\"><counter type=\"LINE\" missed=\"0\" covered=\"10\"/></report>");
  EXPECT_DOUBLE_EQ(full.line_percent, 100.0);
  const auto none = parse_coverage("<report name=\"r\"><counter type=\"LINE\" missed=\"0\" covered=\"0\"/></report>");
  EXPECT_DOUBLE_EQ(none.line_percent, 0.0);
  EXPECT_TRUE(none.degenerate);
}

TEST(Coverage, Malformed) {
  EXPECT_THROW(parse_coverage("<report"), CoverageFormatError);
  EXPECT_THROW(parse_coverage("<notjacoco/>"), CoverageFormatError);
  EXPECT_THROW(parse_coverage("<report><counter type=\"LINE\" missed=\"x\" covered=\"1\"/></report>"),
               CoverageFormatError);
  EXPECT_THROW(parse_coverage("<report><counter type=\"LINE\" missed=\"5\" covered=\"-1\"/></report>"),
               CoverageFormatError);
}

// Class-level counters only: totals are summed.
TEST(Coverage, SumsWhenNoReportCounter) {
  const auto c = parse_coverage(
      "<report name=\"r\"><package name=\"p\">"
      "<class name=\"p/A\"><counter type=\"LINE\" missed=\"1\" covered=\"3\"/></class>"
      "<class name=\"p/B\"><counter type=\"LINE\" missed=\"0\" covered=\"6\"/></class>"
      "</package></report>");
  EXPECT_EQ(c.executed_statements, 9);
  EXPECT_EQ(c.total_statements, 10);
}

TEST(CoverageProperty, ElementOrderIrrelevant) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> classes;
    long long covered = 0, missed = 0;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      const long long c = rng() % 50, m = rng() % 50, bc = rng() % 9, bm = rng() % 9;
      covered += c;
      missed += m;
      std::vector<std::string> counters{
          "<counter type=\"LINE\" missed=\"" + std::to_string(m) + "\" covered=\"" + std::to_string(c) + "\"/>",
          "<counter type=\"BRANCH\" missed=\"" + std::to_string(bm) + "\" covered=\"" + std::to_string(bc) + "\"/>",
          "<counter type=\"METHOD\" missed=\"1\" covered=\"2\"/>"};
      std::shuffle(counters.begin(), counters.end(), rng);
      std::string cls = "<class name=\"p/C" + std::to_string(i) + "\">";
      for (const auto& x : counters) cls += x;
      classes.push_back(cls + "</class>");
    }
    auto doc = [&](const std::vector<std::string>& cs) {
      std::string s = "<report name=\"r\"><package name=\"p\">";
      for (const auto& c : cs) s += c;
      return s + "</package></report>";
    };
    const auto a = parse_coverage(doc(classes));
    std::shuffle(classes.begin(), classes.end(), rng);
    const auto b = parse_coverage(doc(classes));
    EXPECT_EQ(a.executed_statements, covered);
    EXPECT_EQ(a.total_statements, covered + missed);
    EXPECT_EQ(a.executed_statements, b.executed_statements);
    EXPECT_EQ(a.branch_covered, b.branch_covered);
    EXPECT_EQ(a.branch_total, b.branch_total);
    EXPECT_DOUBLE_EQ(a.line_percent, b.line_percent);
    EXPECT_GE(a.line_percent, 0.0);
    EXPECT_LE(a.line_percent, 100.0);
  }
}

// ---- invariants -----------------------------------------------------------------

TEST(ReportProperty, BucketsMonotone) {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MethodOutcome> outs;
    int passed = 0, generated = 0;
    const int methods = static_cast<int>(rng() % 8);
    int k = 1;
    for (int m = 0; m < methods; ++m) {
      MethodOutcome mo;
      mo.class_name = rng() % 2 ? "A" : "B";
      mo.method_name = "m" + std::to_string(m);
      const int tests = static_cast<int>(rng() % 5);
      for (int t = 0; t < tests; ++t) {
        ++generated;
        switch (rng() % 3) {
          case 0: {
            const int at = 1 + static_cast<int>(rng() % 14);
            mo.tests.push_back(test_outcome(mo.class_name, k++, Terminal::passed, at, at));
            ++passed;
            break;
          }
          case 1: mo.tests.push_back(test_outcome(mo.class_name, k++, Terminal::exhausted, 0, 5)); break;
          default: mo.tests.push_back(test_outcome(mo.class_name, k++, Terminal::aborted, 0, 1)); break;
        }
      }
      outs.push_back(mo);
    }
    const auto r = compute_report(outs, {}, std::nullopt, kStart, kStart, {});
    std::vector<ClassStats> rows = r.classes;
    rows.push_back(r.aggregate);
    for (const auto& s : rows) {
      EXPECT_LE(s.passed_at_1, s.passed_by_5);
      EXPECT_LE(s.passed_by_5, s.passed_by_10);
      EXPECT_LE(s.passed_by_10, s.total_passed);
      EXPECT_LE(s.total_passed, s.generated_tests);
    }
    EXPECT_EQ(r.aggregate.total_passed, passed);
    EXPECT_EQ(r.aggregate.generated_tests, generated);
  }
}

// ---- serialized forms ------------------------------------------------------------

TEST(ReportFiles, JsonKeysAndFiles) {
  testsupport::TempDir out;
  ReportOptions opt;
  opt.cost_per_minute = 0.2;
  auto r = compute_report(mongodb_outcomes(), records(12, 41), std::nullopt, kStart, kStart + std::chrono::minutes(20),
                          opt);
  r.merged_files = {"src/test/java/com/example/ProductServiceTest.java"};
  r.failed_files = {"failed/ProductServiceTemp3.t.txt"};
  write_report(r, out.path());
  const auto j = json::parse(testsupport::slurp(out / "report.json"));
  for (const char* key : {"started_at", "finished_at", "wall_minutes", "max_iterations", "classes", "aggregate",
                          "llm_requests", "requests_by_phase", "cost", "methods", "merged_files", "failed_files"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["llm_requests"], 53);
  EXPECT_EQ(j["aggregate"]["generated_tests"], 38);
  EXPECT_EQ(j["started_at"], "2025-01-01T12:00:00Z");
  EXPECT_EQ(testsupport::slurp(out / "report.json"), render_report_json(r));
  EXPECT_EQ(testsupport::slurp(out / "report.txt"), render_report_text(r));
  // same input, same bytes
  EXPECT_EQ(render_report_json(r), render_report_json(r));
}
