#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace testforge {

struct ProcessResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
  bool timed_out = false;
  std::chrono::duration<double> elapsed{};
};

struct ProcessOptions {
  std::filesystem::path cwd;
  std::map<std::string, std::string> extra_env;
  std::optional<std::chrono::seconds> timeout;
};

/// Runs argv[0] from PATH. Exit code 127 means the program could not be
/// executed. Throws RunnerError if the process cannot be created at all.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options = {});

/// Runs a command line through /bin/sh -c.
ProcessResult run_shell(const std::string& command, const ProcessOptions& options = {});

/// True if `program` resolves to an executable on PATH.
bool program_on_path(const std::string& program);

}  // namespace testforge
