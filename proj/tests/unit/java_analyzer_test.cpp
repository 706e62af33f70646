#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <random>
#include <sstream>

#include "support.hpp"
#include "testforge/error.hpp"
#include "testforge/java_analyzer.hpp"

using namespace testforge;
using namespace testforge::java;
using testsupport::fixtures;
using testsupport::slurp;

namespace {

std::vector<std::string> names(const std::vector<MethodModel>& ms) {
  std::vector<std::string> out;
  for (const auto& m : ms) out.push_back(m.name);
  return out;
}

const MethodModel& method_named(const ClassModel& cls, const std::string& name) {
  const MethodModel* m = cls.find_method(name);
  if (!m) throw std::runtime_error("no method " + name);
  return *m;
}

std::string text_without_comment_end(std::string s) {
  for (std::size_t at; (at = s.find("*/")) != std::string::npos;) s.replace(at, 2, "*x");
  return s;
}

}  // namespace

TEST(Neutralize, BlanksLiteralsAndCommentsKeepingLayout) {
  const std::string src = "int a = 1; // {\n/* } */ String s = \"{}\"; char c = '}';\nString t = \"\"\"\n  }\n  \"\"\";\n";
  const std::string n = neutralize(src);
  ASSERT_EQ(n.size(), src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] == '\n') {
      EXPECT_EQ(n[i], '\n') << i;
    }
  }
  EXPECT_EQ(n.find('{'), std::string::npos);
  EXPECT_EQ(n.find('}'), std::string::npos);
  EXPECT_NE(n.find("int a = 1;"), std::string::npos);
  EXPECT_NE(n.find("String s ="), std::string::npos);
}

TEST(Neutralize, EscapedQuotesStayInsideLiteral) {
  const std::string src = R"(String s = "a\"}"; int x = 1;)";
  const std::string n = neutralize(src);
  EXPECT_EQ(n.find('}'), std::string::npos);
  EXPECT_NE(n.find("int x = 1;"), std::string::npos);
}

TEST(ScanSource, TrivialUnit) {
  const SourceUnit u = scan_source("package com.x; import a.B; public class C { }");
  EXPECT_EQ(u.package_name, "com.x");
  EXPECT_EQ(u.imports, (std::vector<std::string>{"a.B"}));
  ASSERT_EQ(u.classes.size(), 1u);
  EXPECT_EQ(u.classes[0].name, "C");
  EXPECT_TRUE(u.classes[0].methods.empty());
}

TEST(ScanSource, StaticAndWildcardImportsVerbatim) {
  const SourceUnit u = scan_source("import static org.junit.Assert.*;\nimport java.util.List;\nclass K {}\n");
  EXPECT_EQ(u.package_name, "");
  EXPECT_EQ(u.imports, (std::vector<std::string>{"static org.junit.Assert.*", "java.util.List"}));
}

// Body offsets against the hand-annotated table next to the fixture.
TEST(ScanSource, BraceLiteralBodiesMatchAnnotatedOffsets) {
  const std::string src = slurp(fixtures() / "java/BraceLiteral.java");
  const SourceUnit u = scan_source(src, "BraceLiteral.java");
  const ClassModel* cls = u.find_class("BraceLiteral");
  ASSERT_NE(cls, nullptr);
  std::istringstream table(slurp(fixtures() / "java/BraceLiteral.offsets"));
  std::string line;
  int checked = 0;
  while (std::getline(table, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string name;
    std::size_t begin = 0, end = 0;
    row >> name >> begin >> end;
    const MethodModel& m = method_named(*cls, name);
    EXPECT_EQ(m.span.begin, begin) << name;
    EXPECT_EQ(m.span.end, end) << name;
    EXPECT_EQ(m.body_text, src.substr(begin, end - begin)) << name;
    ++checked;
  }
  EXPECT_EQ(checked, 4);
  // Inner and anonymous class methods stay out of the outer class.
  EXPECT_EQ(names(cls->methods), (std::vector<std::string>{"close", "block", "count", "anonymous"}));
  EXPECT_EQ(method_named(*cls, "count").visibility, Visibility::package_);
  EXPECT_EQ(method_named(*cls, "anonymous").visibility, Visibility::protected_);
  EXPECT_EQ(method_named(*cls, "count").parameter_types, (std::vector<std::string>{"List<String>"}));
}

TEST(ScanSource, BodiesReassembleTheFile) {
  for (const auto& unit : scan_tree(fixtures() / "toyproject/src/main/java")) {
    for (const auto& cls : unit.classes) {
      std::string rebuilt;
      std::size_t at = 0;
      for (const auto& m : cls.methods) {
        if (!m.has_body) continue;
        ASSERT_LE(m.span.end, unit.text.size());
        rebuilt += unit.text.substr(at, m.span.begin - at) + m.body_text;
        at = m.span.end;
      }
      rebuilt += unit.text.substr(at);
      EXPECT_EQ(rebuilt, unit.text) << unit.path;
    }
  }
}

TEST(ScanSource, FieldsAndAnnotations) {
  const SourceUnit u = scan_source(slurp(fixtures() / "toyproject/src/main/java/com/example/toy/service/UserService.java"));
  const ClassModel& cls = u.classes.at(0);
  EXPECT_TRUE(cls.has_annotation("Service"));
  ASSERT_EQ(cls.fields.size(), 1u);
  EXPECT_EQ(cls.fields[0].name, "userRepository");
  EXPECT_EQ(cls.fields[0].declared_type, "UserRepository");
  EXPECT_TRUE(cls.fields[0].has_annotation("Autowired"));
  EXPECT_EQ(method_named(cls, "validateName").visibility, Visibility::private_);
}

TEST(ScanSource, ConstructorsAreNotMethods) {
  const SourceUnit u = scan_source("class P { P() {} P(int a) { this(); } int get() { return 1; } }");
  EXPECT_EQ(names(u.classes[0].methods), (std::vector<std::string>{"get"}));
}

TEST(ScanSource, ErrorsCarryOffsets) {
  try {
    scan_source("class A { void f() { }");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_LE(e.offset(), 23u);
  }
  EXPECT_THROW(scan_source("class A { } }"), ParseError);
  EXPECT_THROW(scan_source("// nothing here\nint x;\n"), ParseError);
  // A brace in a string never unbalances the file.
  EXPECT_NO_THROW(scan_source("class A { String s = \"}\"; }"));
}

TEST(ScanSource, CorpusHasNoParseErrors) {
  for (const char* root : {"toyproject/src/main/java", "mongodbcrud/src/main/java", "orders/src/main/java"})
    EXPECT_NO_THROW(scan_tree(fixtures() / root)) << root;
}

TEST(ScanTree, MongodbCrudCorpus) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto units = scan_tree(fixtures() / "mongodbcrud/src/main/java");
  std::size_t classes = 0, methods = 0;
  for (const auto& u : units)
    for (const auto& c : u.classes) {
      ++classes;
      methods += c.methods.size();
    }
  EXPECT_EQ(classes, 3u);
  EXPECT_EQ(methods, 12u);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
}

TEST(ExtractMethods, FilterAndErrors) {
  const SourceUnit u = scan_source(
      "class Repo { void save() {} int find() { return 0; } void delete() {} int find(int k) { return k; } }");
  EXPECT_EQ(names(extract_methods(u, {"Repo", std::nullopt})),
            (std::vector<std::string>{"save", "find", "delete", "find"}));
  EXPECT_EQ(names(extract_methods(u, {"Repo", std::vector<std::string>{"find"}})),
            (std::vector<std::string>{"find", "find"}));
  EXPECT_EQ(names(extract_methods(u, {"Repo", std::vector<std::string>{"delete", "save"}})),
            (std::vector<std::string>{"save", "delete"}));
  try {
    extract_methods(u, {"Repo", std::vector<std::string>{"missing"}});
    FAIL();
  } catch (const MethodNotFound& e) {
    EXPECT_EQ(e.available(), (std::vector<std::string>{"save", "find", "delete"}));
    const std::string what = e.what();
    for (const char* n : {"save", "find", "delete"}) EXPECT_NE(what.find(n), std::string::npos);
  }
  EXPECT_THROW(extract_methods(u, {"Nope", std::nullopt}), ClassNotFound);
}

TEST(PrivateDependencies, Examples) {
  const SourceUnit u = scan_source(R"(class S {
    public void m() { p(); }
    public void n() { other(); }
    public void other() { }
    private void p() { this.q(); }
    private void q() { }
    private void r() { }
  })");
  const ClassModel& cls = u.classes[0];
  EXPECT_EQ(names(find_private_dependencies(method_named(cls, "m"), cls)), (std::vector<std::string>{"p", "q"}));
  EXPECT_TRUE(find_private_dependencies(method_named(cls, "n"), cls).empty());
  EXPECT_TRUE(find_private_dependencies(method_named(cls, "q"), cls).empty());
}

// Closure against brute-force reachability over the call matrix, plus
// monotonicity when an edge is added.
TEST(PrivateDependenciesProperty, MatchesBruteForceReachability) {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 8);
    std::vector<bool> is_private(n);
    std::vector<std::vector<bool>> edge(n, std::vector<bool>(n, false));
    for (int i = 0; i < n; ++i) is_private[i] = rng() % 2;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && rng() % 4 == 0) edge[i][j] = true;

    auto render = [&](const std::vector<std::vector<bool>>& e) {
      std::string src = "class G {\n";
      for (int i = 0; i < n; ++i) {
        src += std::string(is_private[i] ? "  private" : "  public") + " void f" + std::to_string(i) + "() {";
        for (int j = 0; j < n; ++j)
          if (e[i][j]) src += (rng() % 2 ? " this.f" : " f") + std::to_string(j) + "();";
        src += " }\n";
      }
      return src + "}\n";
    };
    auto oracle = [&](const std::vector<std::vector<bool>>& e, int from) {
      auto reach = e;
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (reach[i][k] && reach[k][j]) reach[i][j] = true;
      std::set<std::string> out;
      for (int j = 0; j < n; ++j)
        if (j != from && reach[from][j] && is_private[j]) out.insert("f" + std::to_string(j));
      return out;
    };
    auto actual = [&](const std::vector<std::vector<bool>>& e, int from) {
      const SourceUnit u = scan_source(render(e));
      const auto deps = find_private_dependencies(u.classes[0].methods[from], u.classes[0]);
      std::set<std::string> out;
      for (const auto& d : deps) {
        EXPECT_EQ(d.visibility, Visibility::private_);
        out.insert(d.name);
      }
      EXPECT_EQ(out.size(), deps.size()) << "duplicates";
      return out;
    };

    for (int from = 0; from < n; ++from) ASSERT_EQ(actual(edge, from), oracle(edge, from)) << render(edge);

    auto grown = edge;
    const int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
    if (a != b) grown[a][b] = true;
    for (int from = 0; from < n; ++from) {
      const auto before = actual(edge, from), after = actual(grown, from);
      for (const auto& d : before) EXPECT_TRUE(after.contains(d)) << "edge removal of " << d;
    }
  }
}

// Scanning must not depend on what sits inside literals.
TEST(NeutralizationProperty, LiteralContentDoesNotChangeStructure) {
  std::mt19937 rng(99);
  const std::string alphabet = "{}(); ab/*\\'";
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> literals;
    for (int i = 0; i < 4; ++i) {
      std::string s;
      for (int k = 0, len = static_cast<int>(rng() % 10); k < len; ++k) {
        char c = alphabet[rng() % alphabet.size()];
        if (c == '\\') s += "\\\\";
        else s += c;
      }
      literals.push_back(s);
    }
    auto program = [&](bool plain) {
      auto lit = [&](int i) { return plain ? std::string(literals[i].size(), 'x') : literals[i]; };
      return "class L {\n  String a() { return \"" + lit(0) + "\"; }\n  // " + lit(1) +
             "\n  int b(int x) { String s = \"" + lit(2) + "\"; return x; }\n  /* " +
             text_without_comment_end(lit(3)) + " */\n  void c() { }\n}\n";
    };
    const SourceUnit with = scan_source(program(false));
    const SourceUnit without = scan_source(program(true));
    ASSERT_EQ(names(with.classes[0].methods), names(without.classes[0].methods)) << program(false);
    ASSERT_EQ(with.classes[0].methods.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_EQ(with.classes[0].methods[i].span, without.classes[0].methods[i].span) << program(false);
  }
}

class Dependencies : public ::testing::Test {
protected:
  void SetUp() override {
    units = scan_tree(fixtures() / "orders/src/main/java");
    for (const auto& u : units)
      if (u.find_class("CheckoutService")) unit = &u;
    ASSERT_NE(unit, nullptr);
    cls = unit->find_class("CheckoutService");
  }
  MethodContext context_of(const std::string& method) {
    return collect_dependencies(method_named(*cls, method), *unit, *cls, units, "21");
  }
  static std::vector<std::string> dep_names(const MethodContext& c) {
    std::vector<std::string> out;
    for (const auto& d : c.dependency_sources) out.push_back(d.type_name);
    return out;
  }
  static std::vector<std::string> field_names(const MethodContext& c) {
    std::vector<std::string> out;
    for (const auto& f : c.autowired) out.push_back(f.name);
    return out;
  }

  std::vector<SourceUnit> units;
  const SourceUnit* unit = nullptr;
  const ClassModel* cls = nullptr;
};

// Order is only named inside the private helper totalOf; a grep of that body
// against the project's type index finds Order (an @Entity) and nothing else
// that is a data type.
TEST_F(Dependencies, EntityReachedThroughPrivateHelper) {
  const MethodContext c = context_of("checkout");
  EXPECT_EQ(names(c.private_helpers), (std::vector<std::string>{"totalOf", "round"}));
  EXPECT_EQ(dep_names(c), (std::vector<std::string>{"Order"}));
  EXPECT_EQ(c.dependency_sources[0].source_text,
            slurp(fixtures() / "orders/src/main/java/com/acme/shop/entity/Order.java"));
  EXPECT_EQ(field_names(c), (std::vector<std::string>{"orderRepository"}));
  EXPECT_EQ(c.package_name, "com.acme.shop.service");
  EXPECT_EQ(c.java_version, "21");
  EXPECT_EQ(c.class_name, "CheckoutService");
}

TEST_F(Dependencies, DtoParameter) {
  const MethodContext c = context_of("describe");
  EXPECT_EQ(dep_names(c), (std::vector<std::string>{"CheckoutDto"}));
  EXPECT_TRUE(c.autowired.empty());
  EXPECT_TRUE(c.private_helpers.empty());
}

TEST_F(Dependencies, AutowiredFieldUseWithoutDataTypes) {
  const MethodContext c = context_of("stamp");
  EXPECT_EQ(field_names(c), (std::vector<std::string>{"clock"}));
  EXPECT_TRUE(c.dependency_sources.empty());
}

TEST_F(Dependencies, EmptyContext) {
  const MethodContext c = context_of("plain");
  EXPECT_TRUE(c.autowired.empty());
  EXPECT_TRUE(c.dependency_sources.empty());
  EXPECT_TRUE(c.private_helpers.empty());
}

TEST_F(Dependencies, UnresolvedImportedDataTypeListedWithoutSource) {
  const SourceUnit u = scan_source(
      "package p;\nimport com.other.model.Ghost;\nclass K { Ghost make() { return new Ghost(); } }\n");
  const auto c = collect_dependencies(u.classes[0].methods[0], u, u.classes[0], {u});
  ASSERT_EQ(c.dependency_sources.size(), 1u);
  EXPECT_EQ(c.dependency_sources[0].type_name, "Ghost");
  EXPECT_EQ(c.dependency_sources[0].source_text, "");
}

TEST_F(Dependencies, ContextJsonKeys) {
  const auto doc = nlohmann::json::parse(context_to_json(context_of("checkout")));
  for (const char* key : {"package", "imports", "class", "method", "helpers", "autowired", "dependencies"})
    EXPECT_TRUE(doc.contains(key)) << key;
  EXPECT_EQ(doc["class"], "CheckoutService");
}
