#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace testforge {

struct ArtifactOrigin {
  bool refined = false;
  int iteration = 0;  // refinement iteration when refined
  bool operator==(const ArtifactOrigin&) const = default;
};

struct TestArtifact {
  std::string class_name;
  std::string source_text;
  std::vector<std::string> test_method_names;
  ArtifactOrigin origin;
};

/// Annotation names that mark a JUnit test method.
bool is_test_annotation(std::string_view simple_name);

/// Scans `source` and fills class name and test method names. The test class
/// is the first public top-level class, else the first top-level type.
/// Throws ParseError.
TestArtifact parse_test_artifact(std::string source, ArtifactOrigin origin = {});

/// Pulls Java source out of a model response. Fenced blocks win (first one
/// declaring a type); otherwise the slice from the first code line to the
/// last balancing brace. Pure code comes back unchanged.
/// Throws std::invalid_argument (deadline_seconds <= 0), ExtractionTimeout,
/// NoCodeFound.
std::string extract_java_code(std::string_view raw, double deadline_seconds = 30.0);

/// Makes the package declaration match `package_name` (empty = default
/// package, so any declaration is dropped).
std::string ensure_package(std::string_view code, std::string_view package_name);

inline constexpr std::string_view kMockitoAnnotation = "@ExtendWith(MockitoExtension.class)";
inline constexpr std::string_view kExtendWithImport = "import org.junit.jupiter.api.extension.ExtendWith;";
inline constexpr std::string_view kMockitoExtensionImport = "import org.mockito.junit.jupiter.MockitoExtension;";

/// Exactly one Mockito extension annotation on the test class, plus its two
/// imports.
std::string ensure_mockito_extension(std::string_view code);

/// Same as ensure_mockito_extension but never touches imports.
std::string ensure_mockito_annotation(std::string_view code);

/// One bounded repair pass: drops trailing prose after the last closing brace
/// (javac "file:line: error" positions extend this), deletes closing braces
/// that have no opener, then appends the missing ones.
std::string repair_syntax(std::string_view code, std::string_view compiler_stderr = {});

/// One artifact per test method, named `<Base>Temp<k>` with k counting from
/// `first_index`; `<Base>` is class_name without a trailing "Temp".
/// Throws EmptyGeneration.
std::vector<TestArtifact> split_test_methods(const TestArtifact& artifact, int first_index = 1);

/// Copy of `artifact` renamed to `new_class_name` that keeps only the test
/// method `method_name` (or the first one if absent). Throws EmptyGeneration.
TestArtifact isolate_test_method(const TestArtifact& artifact, std::string_view method_name,
                                 std::string_view new_class_name);

/// Import statements ("import x.y.Z;") of a Java source, in file order.
std::vector<std::string> import_statements(std::string_view source);

/// test id ("<TestClass>#<testMethod>") -> import statements. Every mutation
/// is written through to the backing file when one is set.
class ImportLedger {
public:
  ImportLedger() = default;
  explicit ImportLedger(std::filesystem::path path) : path_(std::move(path)) {}
  ImportLedger(const ImportLedger& other);
  ImportLedger& operator=(const ImportLedger& other);

  /// Reads an existing ledger file; a missing file yields an empty ledger.
  /// Throws LedgerIoError.
  static ImportLedger load(const std::filesystem::path& path);

  void add(const std::string& test_id, const std::vector<std::string>& imports);
  std::map<std::string, std::set<std::string>> entries() const;
  std::set<std::string> union_of(const std::vector<std::string>& test_ids) const;
  /// Pretty JSON, sorted keys and values, trailing newline.
  std::string serialize() const;
  const std::filesystem::path& path() const noexcept { return path_; }

private:
  void persist_locked() const;

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, std::set<std::string>> entries_;
};

std::string test_id(std::string_view test_class, std::string_view test_method);

/// Adds the artifact's imports under each of its test ids and persists.
/// Throws LedgerIoError.
ImportLedger& record_imports(const TestArtifact& artifact, ImportLedger& ledger);

/// extract -> repair -> package -> annotation -> parse. Every stored artifact
/// goes through this chain.
TestArtifact postprocess_response(std::string_view raw, std::string_view package_name, ArtifactOrigin origin,
                                  double deadline_seconds = 30.0, std::string_view compiler_stderr = {});

}  // namespace testforge
