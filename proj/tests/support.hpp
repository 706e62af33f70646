#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testsupport {

inline std::filesystem::path fixtures() { return TESTFORGE_FIXTURES; }
inline std::filesystem::path cli_binary() { return TESTFORGE_CLI; }
inline std::filesystem::path oracles() { return TESTFORGE_ORACLES; }
inline std::filesystem::path shipped_templates() { return TESTFORGE_TEMPLATES; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "tf-test-XXXXXX").string();
    path_ = mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

// Copies a fixture directory so a test can write into it.
inline std::filesystem::path copy_fixture(const std::string& name, const std::filesystem::path& dest) {
  std::filesystem::copy(fixtures() / name, dest, std::filesystem::copy_options::recursive);
  return dest;
}

}  // namespace testsupport
