#include "testforge/postprocess.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <optional>
#include <regex>
#include <stdexcept>

#include "testforge/deadline.hpp"
#include "testforge/error.hpp"
#include "testforge/java_analyzer.hpp"
#include "testforge/text.hpp"

namespace testforge {

namespace {

using java::Token;

struct LineRange {
  std::size_t begin;
  std::size_t end;  // excludes '\n'
};

std::vector<LineRange> line_ranges(std::string_view s) {
  std::vector<LineRange> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t nl = s.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < s.size()) out.push_back({pos, s.size()});
      break;
    }
    out.push_back({pos, nl});
    pos = nl + 1;
  }
  return out;
}

std::size_t line_start(std::string_view s, std::size_t pos) {
  while (pos > 0 && s[pos - 1] != '\n') --pos;
  return pos;
}

std::size_t line_end(std::string_view s, std::size_t pos) {
  std::size_t nl = s.find('\n', pos);
  return nl == std::string_view::npos ? s.size() : nl;
}

bool only_spaces(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

bool declares_type(std::string_view code, const Deadline& dl) {
  const std::string neutral = java::neutralize(code, dl);
  const auto toks = java::tokenize(neutral);
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    dl.check();
    if (i > 0 && toks[i - 1].is(".")) continue;
    if ((toks[i].is("class") || toks[i].is("interface") || toks[i].is("enum")) && toks[i + 1].is_identifier())
      return true;
    if (toks[i].is("record") && toks[i + 1].is_identifier() && i + 2 < toks.size() && toks[i + 2].is("("))
      return true;
  }
  return false;
}

const std::regex& code_start_re() {
  static const std::regex re(
      R"(^\s*(package\s+[\w.\s]+;|import\s+(static\s+)?[\w.\s]+(\.\s*\*)?\s*;|@[A-Za-z_][\w.]*|((public|protected|private|abstract|final|static|sealed|strictfp)\s+)*(class|interface|enum|record)\s+[A-Za-z_$][\w$]*))");
  return re;
}

bool is_code_start(std::string_view line) {
  const std::string head(line.substr(0, 400));
  return std::regex_search(head, code_start_re());
}

// Slice from the first code line to the last brace that closes depth 0.
std::string slice_code(std::string_view text, const Deadline& dl) {
  const std::string neutral = java::neutralize(text, dl);
  const auto lines = line_ranges(text);
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    dl.check();
    if (is_code_start(text.substr(lines[i].begin, lines[i].end - lines[i].begin))) {
      first = i;
      break;
    }
  }
  if (!first) throw NoCodeFound("response contains no Java code");
  // pull in comment lines directly above (javadoc, license header)
  while (*first > 0) {
    const auto& prev = lines[*first - 1];
    const auto raw = text.substr(prev.begin, prev.end - prev.begin);
    const auto neu = std::string_view(neutral).substr(prev.begin, prev.end - prev.begin);
    if (text::is_blank(raw) || !text::is_blank(neu)) break;
    --*first;
  }
  const std::size_t start = lines[*first].begin;

  long depth = 0;
  std::optional<std::size_t> last_close;
  for (std::size_t k = start; k < neutral.size(); ++k) {
    dl.check();
    if (neutral[k] == '{') {
      ++depth;
    } else if (neutral[k] == '}') {
      if (--depth == 0) last_close = k;
      if (depth < 0) depth = 0;
    }
  }
  std::size_t end;
  if (last_close) {
    end = *last_close + 1;
  } else {
    // truncated response: keep everything, repair adds the braces
    if (!declares_type(text.substr(start), dl)) throw NoCodeFound("response contains no type declaration");
    end = text.size();
    while (end > start && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  }
  if (text::is_blank(std::string_view(neutral).substr(0, start)) &&
      text::is_blank(std::string_view(neutral).substr(end)))
    return std::string(text);
  return std::string(text.substr(start, end - start)) + "\n";
}

// Unterminated fence: try every '}' from the end as a cut point and rescan the
// prefix from scratch until one balances. Quadratic on hostile input, which is
// what the deadline is for.
std::string salvage_unterminated(std::string_view body, const Deadline& dl) {
  std::vector<std::size_t> closes;
  for (std::size_t k = 0; k < body.size(); ++k) {
    dl.check();
    if (body[k] == '}') closes.push_back(k);
  }
  for (auto it = closes.rbegin(); it != closes.rend(); ++it) {
    const auto prefix = body.substr(0, *it + 1);
    const std::string neutral = java::neutralize(prefix, dl);
    long depth = 0;
    bool negative = false;
    for (char c : neutral) {
      dl.check();
      if (c == '{') ++depth;
      else if (c == '}' && --depth < 0) negative = true;
    }
    if (depth == 0 && !negative && declares_type(prefix, dl)) return slice_code(prefix, dl);
  }
  dl.check_now();
  return slice_code(body, dl);
}

bool is_fence(std::string_view line) {
  const auto t = text::trim(line);
  return t.starts_with("```") || t.starts_with("~~~");
}

// ---- token helpers ------------------------------------------------------

const std::set<std::string_view> kClassModifiers = {"public", "protected", "private", "abstract", "final",
                                                    "static", "sealed",    "strictfp", "non"};

struct Lexed {
  std::string neutral;
  std::vector<Token> toks;
  std::vector<long> match;  // matching paren/brace token, -1 if none
};

Lexed lex(std::string_view code) {
  Lexed l;
  l.neutral = java::neutralize(code);
  l.toks = java::tokenize(l.neutral);
  l.match.assign(l.toks.size(), -1);
  std::vector<std::size_t> parens, braces;
  for (std::size_t i = 0; i < l.toks.size(); ++i) {
    const auto& t = l.toks[i];
    auto pair_up = [&](std::vector<std::size_t>& st) {
      if (st.empty()) return;
      l.match[st.back()] = static_cast<long>(i);
      l.match[i] = static_cast<long>(st.back());
      st.pop_back();
    };
    if (t.is("(")) parens.push_back(i);
    else if (t.is(")")) pair_up(parens);
    else if (t.is("{")) braces.push_back(i);
    else if (t.is("}")) pair_up(braces);
  }
  return l;
}

struct AnnotationUse {
  std::size_t first_tok;
  std::size_t end_tok;  // exclusive
  std::string name;     // simple name
  bool qualified = false;
};

struct ClassHeader {
  std::size_t keyword = 0;
  std::size_t first_non_annotation = 0;  // first modifier or the keyword
  std::vector<AnnotationUse> annotations;
  bool is_public = false;
};

// Top-level `class` declarations with their annotation/modifier prefix.
std::vector<ClassHeader> top_level_classes(const Lexed& l) {
  std::vector<ClassHeader> out;
  const auto& toks = l.toks;
  long depth = 0;
  std::size_t segment = 0;  // first token after the last ';' or '}' at depth 0
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.is("{")) {
      ++depth;
      continue;
    }
    if (t.is("}")) {
      if (--depth <= 0) {
        depth = 0;
        segment = i + 1;
      }
      continue;
    }
    if (depth != 0) continue;
    if (t.is(";")) {
      segment = i + 1;
      continue;
    }
    if (!t.is("class") || (i > 0 && toks[i - 1].is(".")) || i + 1 >= toks.size() || !toks[i + 1].is_identifier())
      continue;
    ClassHeader h;
    h.keyword = i;
    h.first_non_annotation = i;
    bool seen_modifier = false;
    for (std::size_t k = segment; k < i;) {
      if (toks[k].is("@") && k + 1 < i && toks[k + 1].is_identifier()) {
        AnnotationUse a;
        a.first_tok = k;
        std::size_t q = k + 1;
        while (q + 2 < i && toks[q + 1].is(".") && toks[q + 2].is_identifier()) {
          q += 2;
          a.qualified = true;
        }
        a.name = std::string(toks[q].text);
        ++q;
        if (q < i && toks[q].is("(") && l.match[q] >= 0) q = static_cast<std::size_t>(l.match[q]) + 1;
        a.end_tok = q;
        h.annotations.push_back(std::move(a));
        k = q;
      } else {
        if (toks[k].is_identifier() && kClassModifiers.contains(toks[k].text)) {
          if (!seen_modifier) h.first_non_annotation = k;
          seen_modifier = true;
          if (toks[k].is("public")) h.is_public = true;
        }
        ++k;
      }
    }
    out.push_back(std::move(h));
  }
  return out;
}

enum class ExtendForm { none, single, multi };

ExtendForm mockito_form(const Lexed& l, const AnnotationUse& a) {
  if (a.name != "ExtendWith") return ExtendForm::none;
  bool mockito = false, multi = false;
  for (std::size_t k = a.first_tok; k < a.end_tok; ++k) {
    if (l.toks[k].is("MockitoExtension")) mockito = true;
    if (l.toks[k].is("{") || l.toks[k].is(",") || l.toks[k].is("=")) multi = true;
  }
  if (!mockito) return ExtendForm::none;
  return multi ? ExtendForm::multi : ExtendForm::single;
}

bool mockito_qualified(const Lexed& l, const AnnotationUse& a) {
  for (std::size_t k = a.first_tok; k < a.end_tok; ++k)
    if (l.toks[k].is("MockitoExtension")) return k > 0 && l.toks[k - 1].is(".");
  return false;
}

struct ImportInfo {
  std::vector<std::string> statements;
  std::optional<std::size_t> last_import_end;  // offset after ';'
  std::optional<std::size_t> package_end;
};

ImportInfo imports_of(const Lexed& l, std::string_view code, std::size_t before_tok) {
  ImportInfo info;
  const auto& toks = l.toks;
  for (std::size_t i = 0; i < before_tok && i < toks.size(); ++i) {
    if (!toks[i].is("import") && !toks[i].is("package")) continue;
    std::size_t semi = i + 1;
    while (semi < toks.size() && !toks[semi].is(";")) ++semi;
    if (semi >= toks.size()) break;
    if (toks[i].is("package")) {
      info.package_end = toks[semi].end;
    } else {
      info.statements.push_back(
          "import " + text::collapse_whitespace(code.substr(toks[i].end, toks[semi].begin - toks[i].end)) + ";");
      info.last_import_end = toks[semi].end;
    }
    i = semi;
  }
  return info;
}

bool has_import(const std::vector<std::string>& imports, std::string_view statement) {
  if (std::find(imports.begin(), imports.end(), statement) != imports.end()) return true;
  // wildcard on the same package
  const auto dot = statement.rfind('.');
  const std::string wildcard = std::string(statement.substr(0, dot)) + ".*;";
  return std::find(imports.begin(), imports.end(), wildcard) != imports.end();
}

std::string ensure_mockito_impl(std::string_view code, bool with_imports) {
  const Lexed l = lex(code);
  auto classes = top_level_classes(l);
  if (classes.empty()) return std::string(code);
  auto chosen = std::find_if(classes.begin(), classes.end(), [](const ClassHeader& h) { return h.is_public; });
  const ClassHeader& h = chosen != classes.end() ? *chosen : classes.front();

  std::vector<const AnnotationUse*> singles;
  const AnnotationUse* multi = nullptr;
  for (const auto& a : h.annotations) {
    const auto form = mockito_form(l, a);
    if (form == ExtendForm::single) singles.push_back(&a);
    if (form == ExtendForm::multi && !multi) multi = &a;
  }

  std::string out(code);
  const AnnotationUse* kept = multi ? multi : (singles.empty() ? nullptr : singles.front());
  // removals back to front
  for (auto it = singles.rbegin(); it != singles.rend(); ++it) {
    if (*it == kept) continue;
    std::size_t b = l.toks[(*it)->first_tok].begin;
    std::size_t e = l.toks[(*it)->end_tok - 1].end;
    const std::size_t ls = line_start(out, b), le = line_end(out, e);
    if (only_spaces(std::string_view(out).substr(ls, b - ls)) && only_spaces(std::string_view(out).substr(e, le - e))) {
      b = ls;
      e = le < out.size() ? le + 1 : le;
    } else {
      while (e < out.size() && (out[e] == ' ' || out[e] == '\t')) ++e;
    }
    out.erase(b, e - b);
  }
  bool need_ext_import = false, need_mock_import = false;
  if (kept) {
    need_ext_import = !kept->qualified;
    need_mock_import = !mockito_qualified(l, *kept);
  } else {
    const std::size_t pos = l.toks[h.first_non_annotation].begin;
    const std::size_t ls = line_start(out, pos);
    const std::string indent = out.substr(ls, pos - ls);
    if (only_spaces(indent))
      out.insert(pos, std::string(kMockitoAnnotation) + "\n" + indent);
    else
      out.insert(pos, std::string(kMockitoAnnotation) + " ");
    need_ext_import = need_mock_import = true;
  }
  if (!with_imports) return out;

  // imports sit before the class header, so offsets computed on `code` still hold
  const ImportInfo info = imports_of(l, code, h.annotations.empty() ? h.first_non_annotation
                                                                    : h.annotations.front().first_tok);
  std::vector<std::string> missing;
  if (need_ext_import && !has_import(info.statements, kExtendWithImport)) missing.emplace_back(kExtendWithImport);
  if (need_mock_import && !has_import(info.statements, kMockitoExtensionImport))
    missing.emplace_back(kMockitoExtensionImport);
  if (missing.empty()) return out;
  const std::string block = text::join(missing, "\n");
  if (info.last_import_end) {
    out.insert(line_end(out, *info.last_import_end), "\n" + block);
  } else if (info.package_end) {
    out.insert(line_end(out, *info.package_end), "\n\n" + block);
  } else {
    out.insert(0, block + "\n\n");
  }
  return out;
}

std::string base_test_name(std::string_view class_name) {
  static const std::regex re("Temp[0-9]*$");
  return std::regex_replace(std::string(class_name), re, "");
}

std::optional<std::size_t> first_class_index(const java::SourceUnit& unit) {
  for (std::size_t i = 0; i < unit.classes.size(); ++i)
    if (unit.classes[i].kind == java::TypeKind::class_ && unit.classes[i].visibility == java::Visibility::public_)
      return i;
  for (std::size_t i = 0; i < unit.classes.size(); ++i)
    if (unit.classes[i].kind == java::TypeKind::class_) return i;
  if (!unit.classes.empty()) return 0;
  return std::nullopt;
}

// Source of `artifact` renamed to `new_name` with every test method except
// `keep` removed.
std::string isolate(const java::SourceUnit& unit, const java::ClassModel& cls, const java::MethodModel& keep,
                    const std::string& new_name) {
  struct Edit {
    std::size_t begin, end;
    std::string replacement;
  };
  std::vector<Edit> edits;
  const std::string& src = unit.text;
  const std::string neutral = java::neutralize(src);
  for (const auto& m : cls.methods) {
    if (&m == &keep || !std::any_of(m.annotations.begin(), m.annotations.end(), is_test_annotation)) continue;
    std::size_t b = m.declaration.begin, e = m.declaration.end;
    const std::size_t ls = line_start(src, b), le = line_end(src, e);
    if (only_spaces(std::string_view(src).substr(ls, b - ls)) && only_spaces(std::string_view(src).substr(e, le - e))) {
      b = ls;
      e = le < src.size() ? le + 1 : le;
      // swallow one blank separator line below
      const std::size_t nle = line_end(src, e);
      if (e < src.size() && only_spaces(std::string_view(src).substr(e, nle - e)) && nle < src.size()) e = nle + 1;
    }
    edits.push_back({b, e, ""});
  }
  edits.push_back({cls.name_offset, cls.name_offset + cls.name.size(), new_name});
  for (const auto& member : cls.members) {
    if (member.kind != java::MemberKind::constructor) continue;
    const auto decl = std::string_view(neutral).substr(member.declaration.begin,
                                                       member.declaration.end - member.declaration.begin);
    for (std::size_t p = decl.find(cls.name); p != std::string_view::npos; p = decl.find(cls.name, p + 1)) {
      const bool left_ok = p == 0 || !(std::isalnum(static_cast<unsigned char>(decl[p - 1])) || decl[p - 1] == '_');
      std::size_t q = p + cls.name.size();
      while (q < decl.size() && std::isspace(static_cast<unsigned char>(decl[q]))) ++q;
      if (left_ok && q < decl.size() && decl[q] == '(') {
        edits.push_back({member.declaration.begin + p, member.declaration.begin + p + cls.name.size(), new_name});
        break;
      }
    }
  }
  std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) { return a.begin > b.begin; });
  std::string out = src;
  for (const auto& e : edits) out.replace(e.begin, e.end - e.begin, e.replacement);
  return out;
}

}  // namespace

bool is_test_annotation(std::string_view name) {
  return name == "Test" || name == "ParameterizedTest" || name == "RepeatedTest" || name == "TestFactory" ||
         name == "TestTemplate";
}

TestArtifact parse_test_artifact(std::string source, ArtifactOrigin origin) {
  const auto unit = java::scan_source(source);
  const auto idx = first_class_index(unit);
  TestArtifact a;
  const auto& cls = unit.classes[*idx];
  a.class_name = cls.name;
  for (const auto& m : cls.methods)
    if (std::any_of(m.annotations.begin(), m.annotations.end(), is_test_annotation))
      a.test_method_names.push_back(m.name);
  a.source_text = std::move(source);
  a.origin = origin;
  return a;
}

std::string extract_java_code(std::string_view raw, double deadline_seconds) {
  if (!(deadline_seconds > 0)) throw std::invalid_argument("extract_java_code: deadline must be positive");
  const Deadline dl = Deadline::after(std::chrono::duration<double>(deadline_seconds));

  const auto lines = line_ranges(raw);
  std::optional<std::size_t> open;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    dl.check();
    if (!is_fence(raw.substr(lines[i].begin, lines[i].end - lines[i].begin))) continue;
    if (!open) {
      open = i;
      continue;
    }
    const std::size_t b = *open + 1 < lines.size() ? lines[*open + 1].begin : raw.size();
    const auto content = raw.substr(b, lines[i].begin - b);
    open.reset();
    if (declares_type(content, dl)) return std::string(content);
  }
  if (open) {
    const std::size_t b = *open + 1 < lines.size() ? lines[*open + 1].begin : raw.size();
    return salvage_unterminated(raw.substr(b), dl);
  }
  return slice_code(raw, dl);
}

std::string ensure_package(std::string_view code, std::string_view package_name) {
  const std::string neutral = java::neutralize(code);
  const auto toks = java::tokenize(neutral);
  if (!toks.empty() && toks.front().is("package")) {
    std::size_t semi = 1;
    std::string name;
    while (semi < toks.size() && !toks[semi].is(";")) name += toks[semi++].text;
    const std::size_t b = toks.front().begin;
    std::size_t e = semi < toks.size() ? toks[semi].end : line_end(code, b);
    if (name == package_name) return std::string(code);
    std::string out(code);
    if (package_name.empty()) {
      while (e < out.size() && (out[e] == '\n' || out[e] == '\r' || out[e] == ' ')) ++e;
      out.erase(b, e - b);
    } else {
      out.replace(b, e - b, "package " + std::string(package_name) + ";");
    }
    return out;
  }
  if (package_name.empty()) return std::string(code);
  return "package " + std::string(package_name) + ";\n\n" + std::string(code);
}

std::string ensure_mockito_extension(std::string_view code) { return ensure_mockito_impl(code, true); }

std::string ensure_mockito_annotation(std::string_view code) { return ensure_mockito_impl(code, false); }

std::string repair_syntax(std::string_view code, std::string_view compiler_stderr) {
  std::string out(code);

  // 1. trailing prose
  {
    const std::string neutral = java::neutralize(out);
    long depth = 0;
    std::optional<std::size_t> last_balancing;
    for (std::size_t k = 0; k < neutral.size(); ++k) {
      if (neutral[k] == '{') ++depth;
      else if (neutral[k] == '}' && --depth == 0) last_balancing = k;
      if (depth < 0) depth = 0;
    }
    std::optional<std::size_t> cut;
    if (last_balancing && !text::is_blank(std::string_view(neutral).substr(*last_balancing + 1))) {
      const auto tail = std::string_view(neutral).substr(*last_balancing + 1);
      if (tail.find('{') == std::string_view::npos) cut = *last_balancing + 1;
    }
    if (!cut && depth > 0) {
      // unfinished class: drop prose-looking lines at the very end
      const auto lines = line_ranges(neutral);
      std::size_t keep = lines.size();
      while (keep > 0) {
        const auto t = text::trim(std::string_view(neutral).substr(lines[keep - 1].begin,
                                                                   lines[keep - 1].end - lines[keep - 1].begin));
        if (t.empty()) {
          --keep;
          continue;
        }
        const char last = t.back();
        const bool code_like = std::string_view(";{}(),=+-*/&|?:<>").find(last) != std::string_view::npos ||
                               t.front() == '@' || t.front() == '.';
        if (code_like) break;
        --keep;
      }
      if (keep < lines.size() && keep > 0) cut = lines[keep - 1].end;
    }
    // javac positions after the last balancing brace are not code either
    if (last_balancing) {
      static const std::regex err_re(R"(\.java:(\d+): error)");
      const std::size_t brace_line =
          static_cast<std::size_t>(std::count(neutral.begin(), neutral.begin() + *last_balancing, '\n')) + 1;
      const auto lines = line_ranges(out);
      for (const auto& line : text::split_lines(compiler_stderr)) {
        std::smatch m;
        const std::string head = line.substr(0, 400);
        if (!std::regex_search(head, m, err_re)) continue;
        const std::size_t reported = std::stoul(m[1].str());
        if (reported > brace_line && reported <= lines.size()) {
          const std::size_t at = lines[reported - 1].begin;
          if (!cut || at < *cut) cut = std::max(at, *last_balancing + 1);
        }
      }
    }
    if (cut) {
      out.resize(*cut);
      while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
      out += '\n';
    }
  }

  // 2. closing braces without an opener
  {
    const std::string neutral = java::neutralize(out);
    std::vector<std::size_t> surplus;
    long depth = 0;
    for (std::size_t k = 0; k < neutral.size(); ++k) {
      if (neutral[k] == '{') {
        ++depth;
      } else if (neutral[k] == '}') {
        if (depth == 0) surplus.push_back(k);
        else --depth;
      }
    }
    for (auto it = surplus.rbegin(); it != surplus.rend(); ++it) out.erase(*it, 1);
  }

  // 3. missing closing braces
  {
    const long depth = java::brace_balance(java::neutralize(out)).final_depth;
    if (depth > 0) {
      auto survives = [](const std::string& s) {
        const std::string n = java::neutralize(s + "\n}");
        return n.back() == '}';
      };
      if (!survives(out)) {
        for (const char* closer : {"*/", "\"\"\";"}) {
          if (survives(out + "\n" + closer)) {
            out += std::string("\n") + closer;
            break;
          }
        }
      }
      if (!out.empty() && out.back() != '\n') out += '\n';
      for (long k = 0; k < depth; ++k) out += "}\n";
    }
  }
  return out;
}

std::vector<TestArtifact> split_test_methods(const TestArtifact& artifact, int first_index) {
  const auto unit = java::scan_source(artifact.source_text);
  const java::ClassModel* cls = unit.find_class(artifact.class_name);
  if (!cls) {
    const auto idx = first_class_index(unit);
    cls = &unit.classes[*idx];
  }
  std::vector<const java::MethodModel*> tests;
  for (const auto& m : cls->methods)
    if (std::any_of(m.annotations.begin(), m.annotations.end(), is_test_annotation)) tests.push_back(&m);
  if (tests.empty()) throw EmptyGeneration("test class " + cls->name + " declares no test methods");

  const std::string base = base_test_name(cls->name);
  std::vector<TestArtifact> out;
  int k = first_index;
  for (const auto* m : tests) {
    TestArtifact a;
    a.class_name = base + "Temp" + std::to_string(k++);
    a.source_text = isolate(unit, *cls, *m, a.class_name);
    a.test_method_names = {m->name};
    a.origin = artifact.origin;
    out.push_back(std::move(a));
  }
  return out;
}

TestArtifact isolate_test_method(const TestArtifact& artifact, std::string_view method_name,
                                 std::string_view new_class_name) {
  const auto unit = java::scan_source(artifact.source_text);
  const auto idx = first_class_index(unit);
  const auto& cls = unit.classes[*idx];
  const java::MethodModel* keep = nullptr;
  for (const auto& m : cls.methods) {
    if (!std::any_of(m.annotations.begin(), m.annotations.end(), is_test_annotation)) continue;
    if (!keep || m.name == method_name) keep = &m;
    if (m.name == method_name) break;
  }
  if (!keep) throw EmptyGeneration("test class " + cls.name + " declares no test methods");
  TestArtifact a;
  a.class_name = std::string(new_class_name);
  a.source_text = isolate(unit, cls, *keep, a.class_name);
  a.test_method_names = {keep->name};
  a.origin = artifact.origin;
  return a;
}

std::vector<std::string> import_statements(std::string_view source) {
  const Lexed l = lex(source);
  return imports_of(l, source, l.toks.size()).statements;
}

// ---- ledger -------------------------------------------------------------

ImportLedger::ImportLedger(const ImportLedger& other) {
  std::lock_guard lock(other.mu_);
  path_ = other.path_;
  entries_ = other.entries_;
}

ImportLedger& ImportLedger::operator=(const ImportLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  path_ = other.path_;
  entries_ = other.entries_;
  return *this;
}

ImportLedger ImportLedger::load(const std::filesystem::path& path) {
  ImportLedger ledger(path);
  if (!std::filesystem::exists(path)) return ledger;
  try {
    const auto j = nlohmann::json::parse(text::read_file(path));
    for (const auto& [key, value] : j.items())
      for (const auto& imp : value) ledger.entries_[key].insert(imp.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw LedgerIoError("cannot read import ledger " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw LedgerIoError(e.what());
  }
  return ledger;
}

void ImportLedger::add(const std::string& id, const std::vector<std::string>& imports) {
  std::lock_guard lock(mu_);
  auto& set = entries_[id];
  set.insert(imports.begin(), imports.end());
  persist_locked();
}

std::map<std::string, std::set<std::string>> ImportLedger::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::set<std::string> ImportLedger::union_of(const std::vector<std::string>& ids) const {
  std::lock_guard lock(mu_);
  std::set<std::string> out;
  for (const auto& id : ids) {
    auto it = entries_.find(id);
    if (it != entries_.end()) out.insert(it->second.begin(), it->second.end());
  }
  return out;
}

std::string ImportLedger::serialize() const {
  std::lock_guard lock(mu_);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, set] : entries_) j[key] = std::vector<std::string>(set.begin(), set.end());
  return j.dump(2) + "\n";
}

void ImportLedger::persist_locked() const {
  if (path_.empty()) return;
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, set] : entries_) j[key] = std::vector<std::string>(set.begin(), set.end());
  try {
    text::write_file(path_, j.dump(2) + "\n");
  } catch (const IoError& e) {
    throw LedgerIoError(e.what());
  }
}

std::string test_id(std::string_view test_class, std::string_view test_method) {
  return std::string(test_class) + "#" + std::string(test_method);
}

ImportLedger& record_imports(const TestArtifact& artifact, ImportLedger& ledger) {
  const auto imports = import_statements(artifact.source_text);
  for (const auto& m : artifact.test_method_names) ledger.add(test_id(artifact.class_name, m), imports);
  return ledger;
}

TestArtifact postprocess_response(std::string_view raw, std::string_view package_name, ArtifactOrigin origin,
                                  double deadline_seconds, std::string_view compiler_stderr) {
  std::string code = extract_java_code(raw, deadline_seconds);
  code = repair_syntax(code, compiler_stderr);
  code = ensure_package(code, package_name);
  code = ensure_mockito_extension(code);
  try {
    return parse_test_artifact(std::move(code), origin);
  } catch (const ParseError& e) {
    throw NoCodeFound(std::string("response is not a usable test class: ") + e.what());
  }
}

}  // namespace testforge
