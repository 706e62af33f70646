#include "testforge/java_analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <optional>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "testforge/error.hpp"
#include "testforge/text.hpp"

namespace testforge::java {

// ---- lexical layer ------------------------------------------------------

std::string neutralize(std::string_view src, const Deadline& deadline) {
  std::string out(src);
  const std::size_t n = src.size();
  auto blank = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from; k < to && k < n; ++k)
      if (out[k] != '\n' && out[k] != '\r') out[k] = ' ';
  };
  std::size_t i = 0;
  while (i < n) {
    deadline.check();
    const char c = src[i];
    const char next = i + 1 < n ? src[i + 1] : '\0';
    if (c == '/' && next == '/') {
      std::size_t end = src.find('\n', i);
      if (end == std::string_view::npos) end = n;
      blank(i, end);
      i = end;
    } else if (c == '/' && next == '*') {
      std::size_t end = src.find("*/", i + 2);
      end = end == std::string_view::npos ? n : end + 2;
      blank(i, end);
      i = end;
    } else if (c == '"' && src.substr(i, 3) == "\"\"\"") {
      std::size_t k = i + 3;
      while (k < n) {
        deadline.check();
        if (src[k] == '\\') {
          k += 2;
        } else if (src.substr(k, 3) == "\"\"\"") {
          k += 3;
          break;
        } else {
          ++k;
        }
      }
      blank(i, k);
      i = std::min(k, n);
    } else if (c == '"' || c == '\'') {
      std::size_t k = i + 1;
      while (k < n && src[k] != c && src[k] != '\n') {
        deadline.check();
        k += src[k] == '\\' ? 2 : 1;
      }
      if (k < n && src[k] == c) ++k;
      blank(i, k);
      i = std::min(k, n);
    } else {
      ++i;
    }
  }
  return out;
}

namespace {

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
bool ident_part(unsigned char c) { return ident_start(c) || std::isdigit(c); }

const std::unordered_set<std::string_view> kKeywords = {
    "abstract", "assert",     "boolean",    "break",      "byte",      "case",     "catch",
    "char",     "class",      "const",      "continue",   "default",   "do",       "double",
    "else",     "enum",       "extends",    "final",      "finally",   "float",    "for",
    "goto",     "if",         "implements", "import",     "instanceof", "int",     "interface",
    "long",     "native",     "new",        "package",    "private",   "protected", "public",
    "return",   "short",      "static",     "strictfp",   "super",     "switch",   "synchronized",
    "this",     "throw",      "throws",     "transient",  "try",       "void",     "volatile",
    "while",    "true",       "false",      "null",       "var",       "yield"};

const std::unordered_set<std::string_view> kModifiers = {
    "public", "protected", "private",  "static",   "final",  "abstract", "synchronized",
    "native", "transient", "volatile", "default",  "strictfp", "sealed"};

}  // namespace

bool is_keyword(std::string_view word) { return kKeywords.contains(word); }

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> toks;
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    Token::Kind kind;
    if (ident_start(c)) {
      while (i < n && ident_part(static_cast<unsigned char>(s[i]))) ++i;
      kind = Token::Kind::identifier;
    } else if (std::isdigit(c)) {
      while (i < n && (ident_part(static_cast<unsigned char>(s[i])) || s[i] == '.')) {
        if (s[i] == '.' && i + 1 < n && s[i + 1] == '.') break;
        ++i;
      }
      kind = Token::Kind::number;
    } else {
      kind = Token::Kind::punct;
      if (s.substr(i, 3) == "...") {
        i += 3;
      } else if (s.substr(i, 2) == "::" || s.substr(i, 2) == "->") {
        i += 2;
      } else {
        ++i;
      }
    }
    toks.push_back(Token{kind, start, i, s.substr(start, i - start)});
  }
  return toks;
}

BraceBalance brace_balance(std::string_view neutral) {
  BraceBalance b;
  for (char c : neutral) {
    if (c == '{') {
      ++b.final_depth;
    } else if (c == '}') {
      --b.final_depth;
      b.min_depth = std::min(b.min_depth, b.final_depth);
    }
  }
  return b;
}

std::string_view to_string(Visibility v) {
  switch (v) {
    case Visibility::public_: return "public";
    case Visibility::protected_: return "protected";
    case Visibility::package_: return "package";
    case Visibility::private_: return "private";
  }
  return "package";
}

namespace {

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

bool FieldModel::has_annotation(std::string_view simple_name) const {
  return contains(annotations, simple_name);
}
bool MethodModel::has_annotation(std::string_view simple_name) const {
  return contains(annotations, simple_name);
}
bool ClassModel::has_annotation(std::string_view simple_name) const {
  return contains(annotations, simple_name);
}

const MethodModel* ClassModel::find_method(std::string_view method_name) const {
  for (const auto& m : methods)
    if (m.name == method_name) return &m;
  return nullptr;
}

const ClassModel* SourceUnit::find_class(std::string_view wanted) const {
  std::string_view simple = wanted;
  std::string_view package;
  if (auto dot = wanted.rfind('.'); dot != std::string_view::npos) {
    simple = wanted.substr(dot + 1);
    package = wanted.substr(0, dot);
    if (package != package_name) return nullptr;
  }
  for (const auto& c : classes)
    if (c.name == simple) return &c;
  return nullptr;
}

// ---- structural scanner -------------------------------------------------

namespace {

constexpr long kNoMatch = -1;

struct Prefix {
  std::vector<std::string> annotations;
  std::vector<std::string> modifiers;
  std::size_t first = 0;  // first token of the declaration
  std::size_t next = 0;   // first token after annotations/modifiers/type params
};

class Scanner {
public:
  Scanner(const std::string& source, std::string neutral)
      : src_(source), neutral_(std::move(neutral)), toks_(tokenize(neutral_)), match_(toks_.size(), kNoMatch) {
    std::vector<std::size_t> stack[3];
    auto slot = [](std::string_view t) {
      if (t == "{" || t == "}") return 0;
      if (t == "(" || t == ")") return 1;
      if (t == "[" || t == "]") return 2;
      return -1;
    };
    for (std::size_t i = 0; i < toks_.size(); ++i) {
      if (toks_[i].kind != Token::Kind::punct) continue;
      const auto t = toks_[i].text;
      const int s = slot(t);
      if (s < 0) continue;
      if (t == "{" || t == "(" || t == "[") {
        stack[s].push_back(i);
      } else if (!stack[s].empty()) {
        match_[stack[s].back()] = static_cast<long>(i);
        match_[i] = static_cast<long>(stack[s].back());
        stack[s].pop_back();
      }
    }
  }

  void scan(SourceUnit& unit) {
    std::size_t i = 0;
    std::optional<std::size_t> decl_start;
    std::vector<std::string> annotations;
    std::vector<std::string> modifiers;
    auto reset = [&] {
      decl_start.reset();
      annotations.clear();
      modifiers.clear();
    };
    while (i < toks_.size()) {
      const Token& t = toks_[i];
      if (t.is("package") && !decl_start) {
        std::size_t semi = find_punct(i + 1, toks_.size(), ";");
        std::string name;
        for (std::size_t k = i + 1; k < semi; ++k) name += toks_[k].text;
        unit.package_name = name;
        unit.package_span = {t.begin, semi < toks_.size() ? toks_[semi].end : toks_.back().end};
        i = semi + 1;
        reset();
      } else if (t.is("import") && !decl_start) {
        std::size_t semi = find_punct(i + 1, toks_.size(), ";");
        std::size_t end = semi < toks_.size() ? toks_[semi].begin : src_.size();
        unit.imports.push_back(text::collapse_whitespace(std::string_view(src_).substr(t.end, end - t.end)));
        unit.import_spans.push_back({t.begin, semi < toks_.size() ? toks_[semi].end : src_.size()});
        i = semi + 1;
        reset();
      } else if (is_annotation_start(i)) {
        if (!decl_start) decl_start = i;
        annotations.push_back(annotation_name(i));
        i = skip_annotation(i);
      } else if (t.is_identifier() && kModifiers.contains(t.text)) {
        if (!decl_start) decl_start = i;
        modifiers.emplace_back(t.text);
        i += 1;
      } else if (is_non_sealed(i)) {
        if (!decl_start) decl_start = i;
        i += 3;
      } else if (auto kind = type_keyword(i)) {
        const std::size_t first = decl_start.value_or(i);
        ClassModel cls;
        i = parse_type(first, i, *kind, annotations, modifiers, /*in_interface=*/false, cls);
        unit.classes.push_back(std::move(cls));
        reset();
      } else if (t.is("{")) {
        i = static_cast<std::size_t>(std::max(match_[i], static_cast<long>(i))) + 1;
        reset();
      } else {
        ++i;
        if (t.is(";")) reset();
      }
    }
  }

private:
  std::size_t find_punct(std::size_t from, std::size_t to, std::string_view p) const {
    for (std::size_t k = from; k < to; ++k)
      if (toks_[k].is(p)) return k;
    return to;
  }

  bool is_annotation_start(std::size_t i) const {
    return toks_[i].is("@") && i + 1 < toks_.size() && toks_[i + 1].is_identifier() &&
           !toks_[i + 1].is("interface");
  }

  bool is_non_sealed(std::size_t i) const {
    return toks_[i].is("non") && i + 2 < toks_.size() && toks_[i + 1].is("-") && toks_[i + 2].is("sealed");
  }

  std::string annotation_name(std::size_t i) const {
    std::size_t k = i + 1;
    std::string_view last = toks_[k].text;
    while (k + 2 < toks_.size() && toks_[k + 1].is(".") && toks_[k + 2].is_identifier()) {
      k += 2;
      last = toks_[k].text;
    }
    return std::string(last);
  }

  std::size_t skip_annotation(std::size_t i) const {
    std::size_t k = i + 1;
    while (k + 2 < toks_.size() && toks_[k + 1].is(".") && toks_[k + 2].is_identifier()) k += 2;
    ++k;
    if (k < toks_.size() && toks_[k].is("(") && match_[k] != kNoMatch) k = static_cast<std::size_t>(match_[k]) + 1;
    return k;
  }

  std::optional<TypeKind> type_keyword(std::size_t i) const {
    const Token& t = toks_[i];
    if (i > 0 && toks_[i - 1].is(".")) return std::nullopt;
    if (t.is("class")) return TypeKind::class_;
    if (t.is("interface")) return TypeKind::interface_;
    if (t.is("enum") && i + 1 < toks_.size() && toks_[i + 1].is_identifier()) return TypeKind::enum_;
    if (t.is("record") && i + 2 < toks_.size() && toks_[i + 1].is_identifier() &&
        (toks_[i + 2].is("(") || toks_[i + 2].is("<")))
      return TypeKind::record_;
    if (t.is("@") && i + 1 < toks_.size() && toks_[i + 1].is("interface")) return TypeKind::annotation_;
    return std::nullopt;
  }

  static Visibility visibility_of(const std::vector<std::string>& modifiers, bool in_interface) {
    if (contains(modifiers, "public")) return Visibility::public_;
    if (contains(modifiers, "protected")) return Visibility::protected_;
    if (contains(modifiers, "private")) return Visibility::private_;
    return in_interface ? Visibility::public_ : Visibility::package_;
  }

  std::size_t skip_group(std::size_t k) const {
    if (match_[k] != kNoMatch && static_cast<std::size_t>(match_[k]) > k) return static_cast<std::size_t>(match_[k]);
    return k;
  }

  /// Parses a type declaration whose keyword is at `kw`. Returns the token
  /// index after its closing brace.
  std::size_t parse_type(std::size_t first, std::size_t kw, TypeKind kind,
                         const std::vector<std::string>& annotations,
                         const std::vector<std::string>& modifiers, bool in_interface, ClassModel& cls) {
    std::size_t name_tok = kind == TypeKind::annotation_ ? kw + 2 : kw + 1;
    if (name_tok >= toks_.size() || !toks_[name_tok].is_identifier())
      throw ParseError(toks_[kw].begin, "type declaration without a name");
    cls.name = std::string(toks_[name_tok].text);
    cls.kind = kind;
    cls.annotations = annotations;
    cls.visibility = visibility_of(modifiers, in_interface);
    cls.name_offset = toks_[name_tok].begin;

    std::size_t k = name_tok + 1;
    while (k < toks_.size() && !toks_[k].is("{")) {
      if (toks_[k].is("(")) k = skip_group(k);
      ++k;
    }
    if (k >= toks_.size()) throw ParseError(toks_[kw].begin, "type '" + cls.name + "' has no body");
    const std::size_t open = k;
    const std::size_t close = static_cast<std::size_t>(match_[open]);
    cls.body_open = toks_[open].begin;
    cls.body_close = toks_[close].begin;
    cls.declaration = {toks_[first].begin, toks_[close].end};
    cls.header = {toks_[first].begin, toks_[open].begin};
    parse_body(open, close, cls);
    return close + 1;
  }

  Prefix parse_prefix(std::size_t s, std::size_t e) const {
    Prefix p;
    p.first = s;
    std::size_t k = s;
    for (;;) {
      if (k < e && is_annotation_start(k)) {
        p.annotations.push_back(annotation_name(k));
        k = skip_annotation(k);
      } else if (k < e && toks_[k].is_identifier() && kModifiers.contains(toks_[k].text)) {
        p.modifiers.emplace_back(toks_[k].text);
        ++k;
      } else if (k < e && is_non_sealed(k)) {
        k += 3;
      } else {
        break;
      }
    }
    if (k < e && toks_[k].is("<")) {
      int depth = 0;
      for (; k < e; ++k) {
        if (toks_[k].is("<")) ++depth;
        if (toks_[k].is(">") && --depth == 0) {
          ++k;
          break;
        }
      }
    }
    p.next = std::min(k, e);
    return p;
  }

  bool header_has_type_keyword(std::size_t s, std::size_t e) const {
    for (std::size_t k = s; k < e; ++k) {
      if (toks_[k].is("(")) {
        k = skip_group(k);
        continue;
      }
      if (type_keyword(k)) return true;
    }
    return false;
  }

  /// Position of the first depth-0 '(' or '=' in a member header.
  std::pair<std::size_t, std::size_t> first_paren_and_assign(std::size_t s, std::size_t e) const {
    std::size_t paren = e, assign = e;
    for (std::size_t k = s; k < e; ++k) {
      if (is_annotation_start(k)) {
        k = skip_annotation(k) - 1;
        continue;
      }
      if (toks_[k].is("(")) {
        if (paren == e) paren = k;
        k = skip_group(k);
        continue;
      }
      if (toks_[k].is("=") && assign == e) assign = k;
    }
    return {paren, assign};
  }

  std::string slice(std::size_t from_tok, std::size_t to_tok_inclusive) const {
    return std::string(std::string_view(src_).substr(toks_[from_tok].begin,
                                                     toks_[to_tok_inclusive].end - toks_[from_tok].begin));
  }

  void parse_body(std::size_t open, std::size_t close, ClassModel& cls) {
    const bool in_interface = cls.kind == TypeKind::interface_ || cls.kind == TypeKind::annotation_;
    std::size_t j = open + 1;
    if (cls.kind == TypeKind::enum_) {
      // Constants run up to the first depth-0 ';'.
      while (j < close && !toks_[j].is(";")) {
        if (toks_[j].is("(") || toks_[j].is("{") || toks_[j].is("[")) j = skip_group(j);
        ++j;
      }
      j = j < close ? j + 1 : close;
    }
    std::size_t member_start = j;
    while (j < close) {
      const Token& t = toks_[j];
      if (t.is("(") || t.is("[")) {
        j = skip_group(j) + 1;
        continue;
      }
      if (t.is(";")) {
        if (member_start < j) semicolon_member(member_start, j, in_interface, cls);
        member_start = j + 1;
        ++j;
        continue;
      }
      if (t.is("{")) {
        const std::size_t match = skip_group(j);
        const auto prefix = parse_prefix(member_start, j);
        const auto [paren, assign] = first_paren_and_assign(member_start, j);
        if (member_start == j || prefix.next == j) {
          cls.members.push_back({MemberKind::initializer, "", {toks_[member_start].begin, toks_[match].end}});
          member_start = match + 1;
        } else if (header_has_type_keyword(member_start, j)) {
          std::size_t kw = prefix.next;
          while (kw < j && !type_keyword(kw)) ++kw;
          ClassModel nested;
          parse_type(member_start, kw, *type_keyword(kw), prefix.annotations, prefix.modifiers, in_interface,
                     nested);
          cls.members.push_back({MemberKind::type, nested.name, nested.declaration});
          member_start = match + 1;
        } else if (assign < j) {
          // Array initializer, lambda or anonymous class inside a field initializer.
          j = match + 1;
          continue;
        } else if (paren < j) {
          method_member(member_start, paren, j, match, prefix, in_interface, cls);
          member_start = match + 1;
        } else {
          cls.members.push_back({MemberKind::initializer, "", {toks_[member_start].begin, toks_[match].end}});
          member_start = match + 1;
        }
        j = match + 1;
        continue;
      }
      ++j;
    }
  }

  void collect_signature_names(std::size_t from, std::size_t to, std::set<std::string>& out) const {
    for (std::size_t k = from; k < to; ++k)
      if (toks_[k].is_identifier() && !is_keyword(toks_[k].text)) out.emplace(toks_[k].text);
  }

  void parse_parameters(std::size_t open, std::size_t close, MethodModel& m) const {
    std::size_t start = open + 1;
    int angle = 0;
    auto flush = [&](std::size_t s, std::size_t e) {
      std::size_t k = s;
      for (;;) {
        if (k < e && is_annotation_start(k)) {
          k = skip_annotation(k);
        } else if (k < e && toks_[k].is("final")) {
          ++k;
        } else {
          break;
        }
      }
      if (k >= e) return;
      std::size_t last = e - 1;
      while (last > k && (toks_[last].is("]") || toks_[last].is("["))) --last;
      if (last <= k || toks_[last].is("this")) return;
      m.parameter_types.push_back(slice(k, last - 1));
      collect_signature_names(k, last, m.signature_names);
    };
    for (std::size_t k = start; k < close; ++k) {
      const Token& t = toks_[k];
      if (t.is("(") || t.is("[") || t.is("{")) {
        k = skip_group(k);
      } else if (t.is("<")) {
        ++angle;
      } else if (t.is(">")) {
        --angle;
      } else if (t.is(",") && angle <= 0) {
        flush(start, k);
        start = k + 1;
      }
    }
    flush(start, close);
  }

  void scan_body(std::size_t open, std::size_t close, MethodModel& m) const {
    for (std::size_t k = open + 1; k < close; ++k) {
      const Token& t = toks_[k];
      if (!t.is_identifier() || is_keyword(t.text)) continue;
      m.referenced_names.emplace(t.text);
      if (k + 1 < close && toks_[k + 1].is("(")) {
        bool qualified = k > 0 && toks_[k - 1].is(".");
        bool via_this = qualified && k > 1 && toks_[k - 2].is("this");
        bool constructed = k > 0 && toks_[k - 1].is("new");
        if ((!qualified || via_this) && !constructed && !contains(m.called_names, t.text))
          m.called_names.emplace_back(t.text);
      }
    }
  }

  void method_member(std::size_t s, std::size_t paren, std::size_t open, std::size_t close,
                     const Prefix& prefix, bool in_interface, ClassModel& cls) {
    if (paren == 0 || paren <= prefix.next || !toks_[paren - 1].is_identifier()) {
      cls.members.push_back({MemberKind::initializer, "", {toks_[s].begin, toks_[close].end}});
      return;
    }
    MethodModel m;
    m.name = std::string(toks_[paren - 1].text);
    const bool no_return_type = paren - 1 == prefix.next;
    if (no_return_type || m.name == cls.name) {
      cls.members.push_back({MemberKind::constructor, m.name, {toks_[s].begin, toks_[close].end}});
      return;
    }
    m.return_type = slice(prefix.next, paren - 2);
    collect_signature_names(prefix.next, paren - 1, m.signature_names);
    const std::size_t params_close = skip_group(paren);
    parse_parameters(paren, params_close, m);
    m.visibility = visibility_of(prefix.modifiers, in_interface);
    m.is_static = contains(prefix.modifiers, "static");
    m.annotations = prefix.annotations;
    m.has_body = true;
    m.span = {toks_[open].begin, toks_[close].end};
    m.body_text = src_.substr(m.span.begin, m.span.end - m.span.begin);
    m.declaration = {toks_[s].begin, toks_[close].end};
    m.declaration_text = src_.substr(m.declaration.begin, m.declaration.end - m.declaration.begin);
    scan_body(open, close, m);
    cls.members.push_back({MemberKind::method, m.name, m.declaration});
    cls.methods.push_back(std::move(m));
  }

  void semicolon_member(std::size_t s, std::size_t semi, bool in_interface, ClassModel& cls) {
    const auto prefix = parse_prefix(s, semi);
    if (prefix.next >= semi) return;
    const auto [paren, assign] = first_paren_and_assign(s, semi);
    if (paren < assign && paren > prefix.next && toks_[paren - 1].is_identifier()) {
      MethodModel m;
      m.name = std::string(toks_[paren - 1].text);
      if (paren - 1 == prefix.next) return;  // not a declaration we understand
      m.return_type = slice(prefix.next, paren - 2);
      collect_signature_names(prefix.next, paren - 1, m.signature_names);
      parse_parameters(paren, skip_group(paren), m);
      m.visibility = visibility_of(prefix.modifiers, in_interface);
      m.is_static = contains(prefix.modifiers, "static");
      m.annotations = prefix.annotations;
      m.has_body = false;
      m.span = {toks_[semi].begin, toks_[semi].begin};
      m.declaration = {toks_[s].begin, toks_[semi].end};
      m.declaration_text = src_.substr(m.declaration.begin, m.declaration.end - m.declaration.begin);
      cls.members.push_back({MemberKind::method, m.name, m.declaration});
      cls.methods.push_back(std::move(m));
      return;
    }
    // Field declaration, possibly with several declarators.
    std::vector<std::size_t> names;
    auto record_name = [&](std::size_t boundary) {
      std::size_t nk = boundary;
      while (nk > prefix.next && (toks_[nk - 1].is("]") || toks_[nk - 1].is("["))) --nk;
      if (nk > prefix.next && toks_[nk - 1].is_identifier() && !is_keyword(toks_[nk - 1].text))
        names.push_back(nk - 1);
    };
    int angle = 0;
    bool in_initializer = false;
    for (std::size_t k = prefix.next; k < semi; ++k) {
      const Token& t = toks_[k];
      if (t.is("(") || t.is("{") || (t.is("[") && in_initializer)) {
        k = skip_group(k);
        continue;
      }
      if (!in_initializer) {
        if (t.is("<")) ++angle;
        if (t.is(">")) --angle;
      }
      if (angle > 0) continue;
      if (t.is("=")) {
        if (!in_initializer) record_name(k);
        in_initializer = true;
      } else if (t.is(",")) {
        if (!in_initializer) record_name(k);
        in_initializer = false;
        angle = 0;
      }
    }
    if (!in_initializer) record_name(semi);
    const std::size_t type_end = names.empty() ? prefix.next : names.front();
    if (names.empty() || type_end <= prefix.next) return;
    const std::string type = slice(prefix.next, type_end - 1);
    for (std::size_t name_tok : names) {
      FieldModel f;
      f.name = std::string(toks_[name_tok].text);
      f.declared_type = type;
      f.annotations = prefix.annotations;
      f.declaration = {toks_[s].begin, toks_[semi].end};
      cls.fields.push_back(f);
    }
    cls.members.push_back({MemberKind::field, std::string(toks_[names.front()].text),
                           {toks_[s].begin, toks_[semi].end}});
  }

  const std::string& src_;
  std::string neutral_;
  std::vector<Token> toks_;
  std::vector<long> match_;
};

}  // namespace

SourceUnit scan_source(std::string source, std::filesystem::path path) {
  SourceUnit unit;
  unit.path = std::move(path);
  unit.text = std::move(source);
  std::string neutral = neutralize(unit.text);

  long depth = 0;
  std::vector<std::size_t> open_stack;
  for (std::size_t i = 0; i < neutral.size(); ++i) {
    if (neutral[i] == '{') {
      open_stack.push_back(i);
      ++depth;
    } else if (neutral[i] == '}') {
      if (depth == 0) throw ParseError(i, "unmatched closing brace");
      open_stack.pop_back();
      --depth;
    }
  }
  if (depth != 0) throw ParseError(open_stack.back(), "unclosed brace");

  Scanner scanner(unit.text, std::move(neutral));
  scanner.scan(unit);
  if (unit.classes.empty()) throw ParseError(0, "no class declaration found");
  return unit;
}

std::vector<SourceUnit> scan_tree(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (!fs::exists(root)) throw IoError("source root does not exist: " + root.string());
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".java") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<SourceUnit> units;
  units.reserve(files.size());
  for (const auto& f : files) {
    try {
      units.push_back(scan_source(text::read_file(f), f));
    } catch (const ParseError& e) {
      throw ParseError(e.offset(), f.string() + ": " + e.what());
    }
  }
  return units;
}

std::vector<MethodModel> extract_methods(const SourceUnit& unit, const ClassTarget& target) {
  const ClassModel* cls = unit.find_class(target.class_name);
  if (!cls) throw ClassNotFound("class '" + target.class_name + "' not found in " + unit.path.string());
  if (!target.method_filter) return cls->methods;

  std::vector<std::string> available;
  for (const auto& m : cls->methods)
    if (!contains(available, m.name)) available.push_back(m.name);
  for (const auto& wanted : *target.method_filter)
    if (!contains(available, wanted)) throw MethodNotFound(wanted, available);

  std::vector<MethodModel> out;
  for (const auto& m : cls->methods)
    if (contains(*target.method_filter, m.name)) out.push_back(m);
  return out;
}

std::vector<MethodModel> find_private_dependencies(const MethodModel& method, const ClassModel& cls) {
  std::multimap<std::string_view, std::size_t> by_name;
  std::optional<std::size_t> self;
  for (std::size_t i = 0; i < cls.methods.size(); ++i) {
    by_name.emplace(cls.methods[i].name, i);
    if (cls.methods[i] == method) self = i;
  }

  std::vector<bool> visited(cls.methods.size(), false);
  if (self) visited[*self] = true;
  std::deque<const MethodModel*> queue{&method};
  std::vector<MethodModel> result;
  while (!queue.empty()) {
    const MethodModel* current = queue.front();
    queue.pop_front();
    for (const auto& called : current->called_names) {
      auto [lo, hi] = by_name.equal_range(called);
      for (auto it = lo; it != hi; ++it) {
        const std::size_t idx = it->second;
        if (visited[idx]) continue;
        visited[idx] = true;
        queue.push_back(&cls.methods[idx]);
        if (cls.methods[idx].visibility == Visibility::private_) result.push_back(cls.methods[idx]);
      }
    }
  }
  return result;
}

bool is_data_type(const SourceUnit& unit, const ClassModel& cls) {
  const std::string pkg = text::to_lower(unit.package_name);
  for (const char* marker : {"entity", "dto", "model", "document"})
    if (pkg.find(marker) != std::string::npos) return true;
  return cls.has_annotation("Entity") || cls.has_annotation("Document");
}

namespace {

std::vector<std::string> identifiers_in(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (ident_start(static_cast<unsigned char>(s[i]))) {
      std::size_t start = i;
      while (i < s.size() && ident_part(static_cast<unsigned char>(s[i]))) ++i;
      out.emplace_back(s.substr(start, i - start));
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace

MethodContext collect_dependencies(const MethodModel& method, const SourceUnit& unit, const ClassModel& cls,
                                   const std::vector<SourceUnit>& project_sources, std::string java_version) {
  MethodContext ctx;
  ctx.package_name = unit.package_name;
  ctx.imports = unit.imports;
  ctx.class_name = cls.name;
  ctx.java_version = std::move(java_version);
  ctx.method = method;
  ctx.private_helpers = find_private_dependencies(method, cls);

  std::set<std::string> used(method.referenced_names.begin(), method.referenced_names.end());
  used.insert(method.signature_names.begin(), method.signature_names.end());
  for (const auto& h : ctx.private_helpers) {
    used.insert(h.referenced_names.begin(), h.referenced_names.end());
    used.insert(h.signature_names.begin(), h.signature_names.end());
  }

  for (const auto& f : cls.fields) {
    if (!f.has_annotation("Autowired")) continue;
    bool referenced = used.contains(f.name);
    for (const auto& id : identifiers_in(f.declared_type)) referenced = referenced || used.contains(id);
    if (referenced) ctx.autowired.push_back(f);
  }

  // Index of top-level types across the project; same-package and imported
  // candidates win over others with the same simple name.
  std::multimap<std::string, std::pair<const SourceUnit*, const ClassModel*>> index;
  for (const auto& u : project_sources)
    for (const auto& c : u.classes) index.emplace(c.name, std::pair{&u, &c});

  auto imported = [&](const SourceUnit& candidate, const std::string& name) {
    const std::string fq = candidate.package_name.empty() ? name : candidate.package_name + "." + name;
    return contains(unit.imports, fq) || candidate.package_name == unit.package_name;
  };

  for (const auto& name : used) {
    if (name == cls.name || name.empty() || !std::isupper(static_cast<unsigned char>(name[0]))) continue;
    auto [lo, hi] = index.equal_range(name);
    if (lo == hi) continue;
    const SourceUnit* chosen = nullptr;
    const ClassModel* chosen_cls = nullptr;
    for (auto it = lo; it != hi; ++it) {
      if (!chosen || imported(*it->second.first, name)) {
        chosen = it->second.first;
        chosen_cls = it->second.second;
        if (imported(*chosen, name)) break;
      }
    }
    if (chosen && is_data_type(*chosen, *chosen_cls)) ctx.dependency_sources.push_back({name, chosen->text});
  }

  for (const auto& imp : unit.imports) {
    if (imp.starts_with("static ") || imp.ends_with(".*")) continue;
    const auto dot = imp.rfind('.');
    if (dot == std::string::npos) continue;
    const std::string simple = imp.substr(dot + 1);
    const std::string pkg = text::to_lower(imp.substr(0, dot));
    if (!used.contains(simple) || index.contains(simple)) continue;
    bool data_pkg = false;
    for (const char* marker : {"entity", "dto", "model", "document"})
      data_pkg = data_pkg || pkg.find(marker) != std::string::npos;
    if (data_pkg) ctx.dependency_sources.push_back({simple, ""});
  }
  std::sort(ctx.dependency_sources.begin(), ctx.dependency_sources.end(),
            [](const auto& a, const auto& b) { return a.type_name < b.type_name; });
  return ctx;
}

std::string context_to_json(const MethodContext& ctx) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["package"] = ctx.package_name;
  j["imports"] = ctx.imports;
  j["class"] = ctx.class_name;
  j["method"] = {{"name", ctx.method.name},
                 {"visibility", std::string(to_string(ctx.method.visibility))},
                 {"return_type", ctx.method.return_type},
                 {"parameter_types", ctx.method.parameter_types},
                 {"source", ctx.method.declaration_text}};
  j["helpers"] = ordered_json::array();
  for (const auto& h : ctx.private_helpers)
    j["helpers"].push_back({{"name", h.name}, {"source", h.declaration_text}});
  j["autowired"] = ordered_json::array();
  for (const auto& f : ctx.autowired)
    j["autowired"].push_back({{"name", f.name}, {"type", f.declared_type}, {"annotations", f.annotations}});
  j["dependencies"] = ordered_json::array();
  for (const auto& d : ctx.dependency_sources)
    j["dependencies"].push_back({{"type", d.type_name}, {"source", d.source_text}});
  return j.dump(2) + "\n";
}

}  // namespace testforge::java
