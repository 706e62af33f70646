#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace testforge::text {

/// Splits on '\n'. A trailing newline does not produce an empty last line;
/// a '\r' before the newline is stripped.
std::vector<std::string> split_lines(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string_view trim(std::string_view s);
std::string trim_copy(std::string_view s);

/// Collapses every run of whitespace to one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

std::string to_lower(std::string_view s);

bool is_blank(std::string_view s);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames into place.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace testforge::text
