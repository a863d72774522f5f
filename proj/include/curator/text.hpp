#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace curator {

/// Number of unicode scalar values in a UTF-8 string. Throws on invalid UTF-8.
std::size_t utf8_length(std::string_view s);
bool is_valid_utf8(std::string_view s);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view data);

std::vector<std::string> split_lines(std::string_view s);

/// Fixed-decimal formatting used by every report table.
std::string fixed(double v, int decimals);
/// Shortest representation that round-trips through strtod.
std::string exact(double v);

}  // namespace curator
