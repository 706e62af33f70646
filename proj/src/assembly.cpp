#include "testforge/assembly.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include "testforge/error.hpp"
#include "testforge/java_analyzer.hpp"
#include "testforge/process.hpp"
#include "testforge/text.hpp"

namespace testforge {

namespace fs = std::filesystem;

std::string merged_test_class_name(std::string_view class_name) { return std::string(class_name) + "Test"; }

namespace {

const java::ClassModel& test_class_of(const java::SourceUnit& unit, const std::string& name) {
  if (const auto* c = unit.find_class(name)) return *c;
  return unit.classes.front();
}

std::string indent_before(const std::string& src, std::size_t pos) {
  std::size_t ls = pos;
  while (ls > 0 && src[ls - 1] != '\n') --ls;
  const std::string lead = src.substr(ls, pos - ls);
  if (std::all_of(lead.begin(), lead.end(), [](char c) { return c == ' ' || c == '\t'; })) return lead;
  return "    ";
}

// Renames the declared method inside its declaration text.
std::string rename_method(const std::string& decl, const std::string& from, const std::string& to) {
  const std::string neutral = java::neutralize(decl);
  for (std::size_t p = neutral.find(from); p != std::string::npos; p = neutral.find(from, p + 1)) {
    const bool left_ok =
        p == 0 || !(std::isalnum(static_cast<unsigned char>(neutral[p - 1])) || neutral[p - 1] == '_' ||
                    neutral[p - 1] == '$' || neutral[p - 1] == '@' || neutral[p - 1] == '.');
    std::size_t q = p + from.size();
    if (q < neutral.size() && (std::isalnum(static_cast<unsigned char>(neutral[q])) || neutral[q] == '_')) continue;
    while (q < neutral.size() && std::isspace(static_cast<unsigned char>(neutral[q]))) ++q;
    if (left_ok && q < neutral.size() && neutral[q] == '(') {
      std::string out = decl;
      out.replace(p, from.size(), to);
      return out;
    }
  }
  return decl;
}

const java::MethodModel* method_at(const java::ClassModel& cls, const java::Span& decl) {
  for (const auto& m : cls.methods)
    if (m.declaration == decl) return &m;
  return nullptr;
}

bool is_test_method(const java::MethodModel& m) {
  return std::any_of(m.annotations.begin(), m.annotations.end(), is_test_annotation);
}

}  // namespace

std::string merge_passing_tests(const std::vector<RefinementOutcome>& outcomes, const ImportLedger& ledger,
                                std::string_view class_name, std::string_view package_name) {
  std::vector<const RefinementOutcome*> passing;
  for (const auto& o : outcomes) {
    if (o.class_name != class_name)
      throw std::invalid_argument("merge_passing_tests: outcome of " + o.class_name + " passed for " +
                                  std::string(class_name));
    if (o.terminal == Terminal::passed) passing.push_back(&o);
  }
  if (passing.empty()) throw NothingToMerge("no passing tests for " + std::string(class_name));

  std::vector<std::string> ids;
  for (const auto* o : passing)
    ids.push_back(test_id(o->final_artifact.class_name, o->final_artifact.test_method_names.front()));
  const auto imports = ledger.union_of(ids);
  const std::string new_name = merged_test_class_name(class_name);

  std::string header;
  std::vector<std::string> fields, others;
  std::set<std::string> field_names, helper_sigs, test_names, misc;

  for (const auto* o : passing) {
    const std::string& src = o->final_artifact.source_text;
    const auto unit = java::scan_source(src);
    const auto& cls = test_class_of(unit, o->final_artifact.class_name);
    if (header.empty()) {
      const std::size_t name_end = cls.name_offset + cls.name.size();
      header = src.substr(cls.header.begin, cls.name_offset - cls.header.begin) + new_name +
               src.substr(name_end, cls.body_open - name_end);
      while (!header.empty() && std::isspace(static_cast<unsigned char>(header.back()))) header.pop_back();
      header += " {";
    }
    for (const auto& member : cls.members) {
      const std::string text = src.substr(member.declaration.begin, member.declaration.end - member.declaration.begin);
      const std::string indent = indent_before(src, member.declaration.begin);
      switch (member.kind) {
        case java::MemberKind::field:
          if (field_names.insert(member.name).second) fields.push_back(indent + text);
          break;
        case java::MemberKind::method: {
          const auto* m = method_at(cls, member.declaration);
          if (m && is_test_method(*m)) {
            std::string name = m->name;
            for (int suffix = 2; test_names.contains(name); ++suffix) name = m->name + std::to_string(suffix);
            test_names.insert(name);
            others.push_back(indent + (name == m->name ? text : rename_method(text, m->name, name)));
          } else {
            std::string sig = member.name + "(";
            if (m) sig += text::join(m->parameter_types, ",");
            sig += ")";
            if (helper_sigs.insert(sig).second) others.push_back(indent + text);
          }
          break;
        }
        case java::MemberKind::constructor:
          break;  // a scratch-class constructor has the wrong name
        case java::MemberKind::type:
        case java::MemberKind::initializer:
          if (misc.insert(text::collapse_whitespace(text)).second) others.push_back(indent + text);
          break;
      }
    }
  }

  std::string out;
  if (!package_name.empty()) out += "package " + std::string(package_name) + ";\n\n";
  for (const auto& imp : imports) out += imp + "\n";
  if (!imports.empty()) out += "\n";
  out += header + "\n";
  if (!fields.empty()) out += "\n" + text::join(fields, "\n") + "\n";
  for (const auto& block : others) out += "\n" + block + "\n";
  out += "}\n";
  return ensure_mockito_annotation(out);
}

fs::path place_merged_test(const fs::path& workspace, const BuildSpec& build, std::string_view package_name,
                           std::string_view class_name, std::string_view source) {
  const fs::path target = workspace / build.test_root /
                          text::replace_all(std::string(package_name), ".", "/") /
                          (merged_test_class_name(class_name) + ".java");
  if (fs::exists(target)) throw IoError(target.string() + " already exists; not overwriting it");
  text::write_file(target, source);
  return target;
}

std::vector<fs::path> emit_failures(const std::vector<RefinementOutcome>& outcomes, const fs::path& out_dir) {
  std::vector<fs::path> written;
  for (const auto& o : outcomes) {
    if (o.terminal == Terminal::passed) continue;
    const auto& a = o.final_artifact;
    const std::string method = a.test_method_names.empty() ? o.test_method : a.test_method_names.front();
    const fs::path path = out_dir / "failed" / (a.class_name + "." + method + ".txt");
    std::string body;
    body += std::string(kFailureSourceHeader) + "\n";
    body += a.source_text;
    if (!body.ends_with('\n')) body += '\n';
    const TestRunResult* last = o.trace.empty() ? nullptr : &o.trace.back();
    if (last && !last->error_lines.empty()) {
      body += "===== ERROR LOG (iteration " + std::to_string(last->iteration) + ", " +
              std::string(to_string(last->status)) + ") =====\n";
      for (const auto& line : last->error_lines) body += line + "\n";
    } else {
      body += "===== RUNNER ERROR =====\n";
      body += o.note.empty() ? std::string("the build tool reported no error lines\n") : o.note + "\n";
    }
    if (!o.note.empty() && last && !last->error_lines.empty()) body += "===== NOTES =====\n" + o.note + "\n";
    text::write_file(path, body);
    written.push_back(path);
  }
  return written;
}

FinalBuild final_build(BuildAdapter& adapter, const fs::path& out_dir) {
  const AdapterRun run = adapter.build();
  FinalBuild fb;
  fb.status = run.status;
  fb.ok = run.status == RunStatus::passed;
  fb.log_path = out_dir / "logs" / "final-build.log";
  text::write_file(fb.log_path, run.log);
  return fb;
}

// ---- publish ------------------------------------------------------------

std::string publish_branch_name(std::string_view base_branch, const Clock& clock) {
  if (base_branch.empty()) throw std::invalid_argument("publish_branch_name: empty base branch");
  return std::string(base_branch) + "-junit-tests-" + format_utc_compact(clock.now());
}

std::string PublishPlan::describe() const {
  std::ostringstream s;
  s << "branch: " << branch << "\n";
  s << "git checkout -b " << branch << "\n";
  if (remove_file) s << "git rm --ignore-unmatch -- " << *remove_file << "\n";
  s << "git add -f --";
  for (const auto& p : add_paths) s << " " << p;
  s << "\n";
  s << "git commit -m \"" << commit_message << "\"\n";
  s << "git push " << remote << " " << branch << "\n";
  return s.str();
}

PublishPlan plan_publish(const fs::path& workspace, std::string_view base_branch, const Clock& clock,
                         const PublishSpec& spec, const std::vector<fs::path>& paths) {
  PublishPlan plan;
  plan.base_branch = std::string(base_branch);
  plan.branch = publish_branch_name(base_branch, clock);
  plan.remote = spec.remote;
  if (spec.remove_pipeline_file) plan.remove_file = spec.pipeline_file;
  for (const auto& p : paths) plan.add_paths.push_back(fs::relative(p, workspace).generic_string());
  std::sort(plan.add_paths.begin(), plan.add_paths.end());
  plan.add_paths.erase(std::unique(plan.add_paths.begin(), plan.add_paths.end()), plan.add_paths.end());
  plan.commit_message = "Add generated unit tests";
  return plan;
}

namespace {

ProcessResult git(const fs::path& ws, std::vector<std::string> args) {
  std::vector<std::string> argv{"git", "-C", ws.string()};
  argv.insert(argv.end(), std::make_move_iterator(args.begin()), std::make_move_iterator(args.end()));
  ProcessOptions opts;
  opts.extra_env["GIT_TERMINAL_PROMPT"] = "0";
  opts.timeout = std::chrono::seconds(300);
  return run_process(argv, opts);
}

std::string git_ok(const fs::path& ws, std::vector<std::string> args) {
  const std::string what = "git " + text::join(args, " ");
  auto r = git(ws, std::move(args));
  if (r.exit_code != 0) throw VcsError(what + " failed: " + text::trim_copy(r.output));
  return r.output;
}

}  // namespace

std::optional<std::string> current_git_branch(const fs::path& workspace) {
  if (!program_on_path("git")) return std::nullopt;
  const auto r = git(workspace, {"rev-parse", "--abbrev-ref", "HEAD"});
  if (r.exit_code != 0) return std::nullopt;
  std::string name = text::trim_copy(r.output);
  if (name.empty() || name == "HEAD") return std::nullopt;
  return name;
}

void execute_publish(const fs::path& workspace, const PublishPlan& plan, const std::vector<fs::path>& owned) {
  if (git(workspace, {"rev-parse", "--git-dir"}).exit_code != 0)
    throw VcsError(workspace.string() + " is not a git checkout");
  const std::string orig = text::trim_copy(git_ok(workspace, {"rev-parse", "HEAD"}));
  const auto sym = git(workspace, {"symbolic-ref", "-q", "--short", "HEAD"});
  const std::string back_to = sym.exit_code == 0 ? text::trim_copy(sym.output) : orig;

  std::vector<std::string> owned_rel;
  for (const auto& p : owned) owned_rel.push_back(fs::relative(p, workspace).generic_string());
  for (const auto& line : text::split_lines(git_ok(workspace, {"status", "--porcelain", "--untracked-files=all"}))) {
    if (line.size() < 4) continue;
    std::string path = line.substr(3);
    if (auto arrow = path.find(" -> "); arrow != std::string::npos) path = path.substr(arrow + 4);
    if (path.size() >= 2 && path.front() == '"') path = path.substr(1, path.size() - 2);
    const bool ours = std::any_of(owned_rel.begin(), owned_rel.end(), [&](const std::string& o) {
      return path == o || path.starts_with(o.ends_with('/') ? o : o + "/");
    });
    if (!ours) throw VcsError("clone is dirty: " + path);
  }

  git_ok(workspace, {"checkout", "-q", "-b", plan.branch});
  try {
    if (plan.remove_file) git_ok(workspace, {"rm", "-q", "--ignore-unmatch", "--", *plan.remove_file});
    std::vector<std::string> add{"add", "-f", "--"};
    for (const auto& p : plan.add_paths)
      if (fs::exists(workspace / p)) add.push_back(p);
    if (add.size() > 3) git_ok(workspace, add);

    std::vector<std::string> commit;
    if (git(workspace, {"config", "user.email"}).exit_code != 0)
      commit = {"-c", "user.name=testforge", "-c", "user.email=testforge@localhost"};
    commit.insert(commit.end(), {"commit", "-q", "--allow-empty", "-m", plan.commit_message});
    git_ok(workspace, commit);

    std::vector<std::string> push;
    if (const char* token = std::getenv("VCS_TOKEN"); token && *token)
      push = {"-c", "http.extraHeader=Authorization: Basic " + text::base64_encode(std::string("oauth2:") + token)};
    push.insert(push.end(), {"push", "-q", plan.remote, plan.branch});
    auto r = git(workspace, push);
    if (r.exit_code != 0) throw VcsError("push to " + plan.remote + " rejected: " + text::trim_copy(r.output));
  } catch (const VcsError&) {
    git(workspace, {"reset", "-q", "--mixed", orig});
    if (plan.remove_file) git(workspace, {"checkout", orig, "--", *plan.remove_file});
    git(workspace, {"checkout", "-q", back_to});
    git(workspace, {"branch", "-D", plan.branch});
    throw;
  }
}

}  // namespace testforge
