#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "testforge/java_analyzer.hpp"

namespace testforge {

enum class PromptKind { generation, refinement, chat };
std::string_view to_string(PromptKind kind);

struct Prompt {
  PromptKind kind = PromptKind::generation;
  std::string text;
  std::string context_fingerprint;  // SHA-256 over kind and text
};

/// A `{placeholder}` template. `{{` and `}}` render as literal braces; any
/// other brace is literal too unless it encloses a lowercase placeholder name.
class PromptTemplate {
public:
  /// Throws TemplateError for placeholders outside `allowed` or missing
  /// `required` ones.
  PromptTemplate(std::string source, const std::vector<std::string>& allowed,
                 const std::vector<std::string>& required);

  std::string render(const std::map<std::string, std::string>& values) const;
  const std::string& source() const noexcept { return source_; }

private:
  struct Piece {
    bool placeholder;
    std::string text;
  };
  std::string source_;
  std::vector<Piece> pieces_;
};

/// The three prompt templates in use. Defaults are built in; a directory
/// holding generation.txt / refinement.txt / chat.txt overrides any subset.
struct PromptTemplates {
  PromptTemplate generation;
  PromptTemplate refinement;
  PromptTemplate chat;

  static PromptTemplates defaults();
  static PromptTemplates load(const std::filesystem::path& dir);
};

/// Estimated model tokens: ceil(bytes / 4).
long long estimate_tokens(std::string_view text);

inline constexpr std::size_t kErrorLineCap = 200;
inline constexpr long long kDefaultContextBudget = 900000;

/// Name of the scratch test class for a class under test.
std::string temp_test_class_name(std::string_view class_name);

/// Throws ContextTooLarge if the rendered prompt exceeds `context_budget`
/// estimated tokens.
Prompt build_generation_prompt(const java::MethodContext& ctx, const PromptTemplates& templates,
                               long long context_budget = kDefaultContextBudget);

/// `error_lines` must be non-empty and `iteration` >= 1 (std::invalid_argument
/// otherwise). Only the first kErrorLineCap lines are embedded.
Prompt build_refinement_prompt(std::string_view test_source, const std::vector<std::string>& error_lines,
                               int iteration, std::string_view test_class_name,
                               const PromptTemplates& templates);

/// `user_message` must not be blank (std::invalid_argument otherwise).
Prompt build_chat_prompt(std::string_view test_source, std::string_view user_message,
                         std::string_view class_name, std::string_view test_class_name,
                         const PromptTemplates& templates);

/// Names of the mandatory generation clauses missing from `prompt`; empty
/// when the prompt is complete for `ctx`.
std::vector<std::string> missing_generation_clauses(const Prompt& prompt, const java::MethodContext& ctx);

}  // namespace testforge
