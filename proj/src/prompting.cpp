#include "testforge/prompting.hpp"

#include <algorithm>
#include <stdexcept>

#include "testforge/error.hpp"
#include "testforge/text.hpp"

namespace testforge {

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::generation: return "generation";
    case PromptKind::refinement: return "refinement";
    case PromptKind::chat: return "chat";
  }
  return "generation";
}

namespace {

const std::vector<std::string> kGenerationPlaceholders = {
    "java_version", "class_name", "test_class_name", "package_name", "imports",
    "method_body",  "private_helpers", "autowired", "dependencies"};
const std::vector<std::string> kGenerationRequired = {"java_version", "test_class_name", "method_body"};

const std::vector<std::string> kRefinementPlaceholders = {"iteration", "test_class_name", "test_source",
                                                          "error_lines"};
const std::vector<std::string> kRefinementRequired = {"test_source", "error_lines"};

const std::vector<std::string> kChatPlaceholders = {"class_name", "test_class_name", "test_source",
                                                    "user_message"};
const std::vector<std::string> kChatRequired = {"test_source", "user_message"};

constexpr const char* kDefaultGeneration =
    R"(You are an experienced Java engineer writing unit tests for a Spring Boot service.
Write one test class for the method shown below, targeting Java {java_version}.

Requirements:
- Aim for 100% code coverage of the method under test: every branch and every exception path.
- Use JUnit 5 (org.junit.jupiter) for test methods and assertions; the project provides the spring-boot-starter-test dependency.
- Annotate the test class with @ExtendWith(MockitoExtension.class). Declare collaborators with @Mock and the class under test with @InjectMocks.
- Do not use @BeforeEach setup methods; every test method prepares its own data.
- Name every test method with the Given-When-Then strategy, for example givenValidInput_whenSave_thenReturnsEntity.
- Cover edge cases and boundary conditions: null and empty inputs, missing records, limits.
- Name the test class {test_class_name} and declare it in package {package_name}.
- Reply with the complete Java source of the test class only.

Class under test: {class_name}
Imports of the class under test:
{imports}

Method under test:
{method_body}
{private_helpers}{autowired}{dependencies})";

constexpr const char* kDefaultRefinement =
    R"(The JUnit 5 test class {test_class_name} below does not pass (attempt {iteration}). Fix it using the error output that follows.
Keep the class name and the package unchanged and keep @ExtendWith(MockitoExtension.class) on the class.
Reply with the corrected, complete Java source of the test class only.

Current test class:
{test_source}

Error output:
{error_lines}
)";

constexpr const char* kDefaultChat =
    R"(You are refining the JUnit 5 test class {test_class_name}, which tests {class_name}.
Apply the user's request below and reply with the complete, updated Java source of the test class only. Keep the class name and the package unchanged.

Current test class:
{test_source}

User request:
{user_message}
)";

bool placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

Prompt finish(PromptKind kind, std::string text) {
  Prompt p;
  p.kind = kind;
  p.context_fingerprint = text::sha256_hex(std::string(to_string(kind)) + '\0' + text);
  p.text = std::move(text);
  return p;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string source, const std::vector<std::string>& allowed,
                               const std::vector<std::string>& required)
    : source_(std::move(source)) {
  std::string literal;
  std::vector<std::string> seen;
  const std::size_t n = source_.size();
  for (std::size_t i = 0; i < n;) {
    if (source_.compare(i, 2, "{{") == 0) {
      literal += '{';
      i += 2;
      continue;
    }
    if (source_.compare(i, 2, "}}") == 0) {
      literal += '}';
      i += 2;
      continue;
    }
    if (source_[i] == '{') {
      std::size_t k = i + 1;
      while (k < n && placeholder_char(source_[k])) ++k;
      if (k > i + 1 && k < n && source_[k] == '}') {
        std::string name = source_.substr(i + 1, k - i - 1);
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
          throw TemplateError("unknown placeholder {" + name + "}");
        if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
        literal.clear();
        seen.push_back(name);
        pieces_.push_back({true, std::move(name)});
        i = k + 1;
        continue;
      }
    }
    literal += source_[i++];
  }
  if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
  for (const auto& r : required)
    if (std::find(seen.begin(), seen.end(), r) == seen.end())
      throw TemplateError("template is missing required placeholder {" + r + "}");
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  for (const auto& piece : pieces_) {
    if (!piece.placeholder) {
      out += piece.text;
      continue;
    }
    auto it = values.find(piece.text);
    if (it != values.end()) out += it->second;
  }
  return out;
}

PromptTemplates PromptTemplates::defaults() {
  return PromptTemplates{
      PromptTemplate(kDefaultGeneration, kGenerationPlaceholders, kGenerationRequired),
      PromptTemplate(kDefaultRefinement, kRefinementPlaceholders, kRefinementRequired),
      PromptTemplate(kDefaultChat, kChatPlaceholders, kChatRequired)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  auto templates = defaults();
  auto override_with = [&](const char* file, PromptTemplate& slot, const std::vector<std::string>& allowed,
                           const std::vector<std::string>& required) {
    const auto path = dir / file;
    if (!std::filesystem::exists(path)) return;
    try {
      slot = PromptTemplate(text::read_file(path), allowed, required);
    } catch (const TemplateError& e) {
      throw TemplateError(path.string() + ": " + e.what());
    }
  };
  override_with("generation.txt", templates.generation, kGenerationPlaceholders, kGenerationRequired);
  override_with("refinement.txt", templates.refinement, kRefinementPlaceholders, kRefinementRequired);
  override_with("chat.txt", templates.chat, kChatPlaceholders, kChatRequired);
  return templates;
}

long long estimate_tokens(std::string_view text) {
  return static_cast<long long>((text.size() + 3) / 4);
}

std::string temp_test_class_name(std::string_view class_name) { return std::string(class_name) + "Temp"; }

Prompt build_generation_prompt(const java::MethodContext& ctx, const PromptTemplates& templates,
                               long long context_budget) {
  std::map<std::string, std::string> values;
  values["java_version"] = ctx.java_version;
  values["class_name"] = ctx.class_name;
  values["test_class_name"] = temp_test_class_name(ctx.class_name);
  values["package_name"] = ctx.package_name.empty() ? "(the default package)" : ctx.package_name;

  std::string imports;
  for (const auto& imp : ctx.imports) imports += "import " + imp + ";\n";
  if (imports.empty()) imports = "(none)\n";
  values["imports"] = imports;
  values["method_body"] = ctx.method.declaration_text;

  if (!ctx.private_helpers.empty()) {
    std::string s =
        "\nPrivate methods called by the method under test are listed below. Do not mock private methods; "
        "they are not accessible from the test class, so cover them through the method under test. "
        "Mock the repositories they use with @Mock so that no real database operation runs.\n";
    for (const auto& h : ctx.private_helpers) s += "\n" + h.declaration_text + "\n";
    values["private_helpers"] = s;
  }
  if (!ctx.autowired.empty()) {
    std::string s = "\nInjected collaborators of " + ctx.class_name + " (mock each one with @Mock):\n";
    for (const auto& f : ctx.autowired) s += "- " + f.declared_type + " " + f.name + "\n";
    values["autowired"] = s;
  }
  if (!ctx.dependency_sources.empty()) {
    std::string s = "\nEntity and DTO types used by the method under test:\n";
    for (const auto& d : ctx.dependency_sources) {
      if (d.source_text.empty()) {
        s += "\n// " + d.type_name + ": source not available in the project\n";
      } else {
        s += "\n// " + d.type_name + "\n" + d.source_text;
        if (!d.source_text.ends_with('\n')) s += '\n';
      }
    }
    values["dependencies"] = s;
  }

  std::string text = templates.generation.render(values);
  const long long tokens = estimate_tokens(text);
  if (tokens > context_budget)
    throw ContextTooLarge("generation prompt for " + ctx.class_name + "#" + ctx.method.name + " needs ~" +
                          std::to_string(tokens) + " tokens, budget is " + std::to_string(context_budget));
  return finish(PromptKind::generation, std::move(text));
}

Prompt build_refinement_prompt(std::string_view test_source, const std::vector<std::string>& error_lines,
                               int iteration, std::string_view test_class_name,
                               const PromptTemplates& templates) {
  if (error_lines.empty()) throw std::invalid_argument("build_refinement_prompt: error_lines must not be empty");
  if (iteration < 1) throw std::invalid_argument("build_refinement_prompt: iteration must be >= 1");

  std::string errors;
  const std::size_t kept = std::min(error_lines.size(), kErrorLineCap);
  for (std::size_t i = 0; i < kept; ++i) errors += error_lines[i] + "\n";
  if (error_lines.size() > kErrorLineCap)
    errors += "... [" + std::to_string(error_lines.size() - kErrorLineCap) + " more error lines omitted]\n";

  std::map<std::string, std::string> values{{"iteration", std::to_string(iteration)},
                                            {"test_class_name", std::string(test_class_name)},
                                            {"test_source", std::string(test_source)},
                                            {"error_lines", errors}};
  return finish(PromptKind::refinement, templates.refinement.render(values));
}

Prompt build_chat_prompt(std::string_view test_source, std::string_view user_message, std::string_view class_name,
                         std::string_view test_class_name, const PromptTemplates& templates) {
  if (text::is_blank(user_message)) throw std::invalid_argument("build_chat_prompt: empty user message");
  std::map<std::string, std::string> values{{"class_name", std::string(class_name)},
                                            {"test_class_name", std::string(test_class_name)},
                                            {"test_source", std::string(test_source)},
                                            {"user_message", std::string(user_message)}};
  return finish(PromptKind::chat, templates.chat.render(values));
}

std::vector<std::string> missing_generation_clauses(const Prompt& prompt, const java::MethodContext& ctx) {
  const std::string& t = prompt.text;
  std::vector<std::string> missing;
  auto need = [&](bool ok, std::string name) {
    if (!ok) missing.push_back(std::move(name));
  };
  auto has = [&](std::string_view s) { return t.find(s) != std::string::npos; };

  need(has("Java " + ctx.java_version), "java_version");
  need(has("100% code coverage"), "full_coverage");
  need(has("JUnit 5"), "junit5");
  need(has("spring-boot-starter-test"), "spring_boot_starter_test");
  need(has("@ExtendWith(MockitoExtension.class)") && (has("@InjectMocks") || has("@InjectMock")), "mocking");
  need(has("Do not use @BeforeEach"), "no_before_each");
  need(has(temp_test_class_name(ctx.class_name)), "test_class_name");
  need(has(ctx.method.declaration_text), "method_body");
  bool deps = true;
  for (const auto& d : ctx.dependency_sources) deps = deps && has(d.type_name) && has(d.source_text);
  need(deps, "dependency_sources");
  need(has("Given-When-Then"), "given_when_then");
  if (!ctx.private_helpers.empty()) {
    bool helpers = true;
    for (const auto& h : ctx.private_helpers) helpers = helpers && has(h.declaration_text);
    need(helpers, "private_helpers");
    need(has("Do not mock private methods"), "no_mock_private");
    need(has("Mock the repositories"), "mock_repositories");
  }
  return missing;
}

}  // namespace testforge
