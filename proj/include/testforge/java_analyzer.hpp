#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "testforge/config.hpp"
#include "testforge/deadline.hpp"

namespace testforge::java {

// ---- lexical layer ------------------------------------------------------

/// Returns a copy of `source` of identical length in which comments and
/// string/char/text-block literals are blanked to spaces. Newlines survive so
/// offsets and line numbers stay valid.
std::string neutralize(std::string_view source, const Deadline& deadline = Deadline::never());

struct Token {
  enum class Kind { identifier, number, punct };
  Kind kind;
  std::size_t begin;
  std::size_t end;
  std::string_view text;  // view into the neutralized buffer

  bool is(std::string_view s) const { return text == s; }
  bool is_identifier() const { return kind == Kind::identifier; }
};

/// Tokenizes neutralized text. Punctuation is single-character except "...",
/// "::" and "->".
std::vector<Token> tokenize(std::string_view neutral);

bool is_keyword(std::string_view word);

/// Brace depth after the whole neutralized text; negative if a closing brace
/// ever appears without a matching opener.
struct BraceBalance {
  long final_depth = 0;
  long min_depth = 0;
  bool balanced() const { return final_depth == 0 && min_depth == 0; }
};
BraceBalance brace_balance(std::string_view neutral);

// ---- structural model ---------------------------------------------------

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const Span&) const = default;
};

enum class Visibility { public_, protected_, package_, private_ };
std::string_view to_string(Visibility v);

struct FieldModel {
  std::string name;
  std::string declared_type;
  std::vector<std::string> annotations;  // simple names, no '@'
  Span declaration;

  bool has_annotation(std::string_view simple_name) const;
};

struct MethodModel {
  std::string name;
  std::vector<std::string> parameter_types;
  std::string return_type;
  Visibility visibility = Visibility::package_;
  bool is_static = false;
  bool has_body = true;
  std::vector<std::string> annotations;
  std::string body_text;        // '{' .. '}' inclusive
  Span span;                    // offsets of body_text in the file
  std::string declaration_text; // annotations + signature + body
  Span declaration;
  std::set<std::string> referenced_names;
  std::set<std::string> signature_names;  // identifiers in return/parameter types
  std::vector<std::string> called_names;  // `name(` / `this.name(`, first-occurrence order

  bool has_annotation(std::string_view simple_name) const;
  bool operator==(const MethodModel& o) const {
    return name == o.name && span == o.span && declaration == o.declaration;
  }
};

enum class TypeKind { class_, interface_, enum_, record_, annotation_ };

enum class MemberKind { field, method, constructor, type, initializer };

/// Any declaration directly inside a class body, in source order.
struct Member {
  MemberKind kind;
  std::string name;
  Span declaration;
};

struct ClassModel {
  std::string name;
  TypeKind kind = TypeKind::class_;
  std::vector<std::string> annotations;
  Visibility visibility = Visibility::package_;
  std::vector<FieldModel> fields;
  std::vector<MethodModel> methods;
  std::vector<Member> members;
  Span declaration;     // first annotation/modifier .. closing brace
  Span header;          // first annotation/modifier .. opening brace (exclusive)
  std::size_t name_offset = 0;
  std::size_t body_open = 0;   // offset of '{'
  std::size_t body_close = 0;  // offset of '}'

  bool has_annotation(std::string_view simple_name) const;
  const MethodModel* find_method(std::string_view name) const;
};

struct SourceUnit {
  std::filesystem::path path;
  std::string text;
  std::string package_name;
  std::vector<std::string> imports;
  std::vector<ClassModel> classes;
  Span package_span;  // empty (0,0) when there is no package declaration
  std::vector<Span> import_spans;

  const ClassModel* find_class(std::string_view simple_or_qualified) const;
};

/// Scans one Java compilation unit. Throws ParseError when braces do not
/// balance after neutralization or when no type declaration exists.
SourceUnit scan_source(std::string text, std::filesystem::path path = {});

/// Scans every .java file below `root`, sorted by path.
std::vector<SourceUnit> scan_tree(const std::filesystem::path& root);

/// Methods of target.class_name in source order; all of them without a
/// filter, otherwise exactly the named ones (every overload of a name).
/// Throws ClassNotFound / MethodNotFound.
std::vector<MethodModel> extract_methods(const SourceUnit& unit, const ClassTarget& target);

/// Private methods reachable from `method` through the call-name graph,
/// breadth-first in discovery order. The method itself is never included.
std::vector<MethodModel> find_private_dependencies(const MethodModel& method, const ClassModel& cls);

struct DependencySource {
  std::string type_name;
  std::string source_text;  // empty when the type could not be resolved
  bool operator==(const DependencySource&) const = default;
};

struct MethodContext {
  std::string package_name;
  std::vector<std::string> imports;
  std::string class_name;
  std::string java_version;
  MethodModel method;
  std::vector<MethodModel> private_helpers;
  std::vector<FieldModel> autowired;
  std::vector<DependencySource> dependency_sources;
};

/// True when a type qualifies as an entity/DTO by package path or annotation.
bool is_data_type(const SourceUnit& unit, const ClassModel& cls);

MethodContext collect_dependencies(const MethodModel& method, const SourceUnit& unit,
                                   const ClassModel& cls, const std::vector<SourceUnit>& project_sources,
                                   std::string java_version = "17");

/// JSON dump of a context (keys: package, imports, class, method, helpers,
/// autowired, dependencies).
std::string context_to_json(const MethodContext& ctx);

}  // namespace testforge::java
