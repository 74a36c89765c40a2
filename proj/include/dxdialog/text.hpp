#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dxdialog {

/// Lowercases ASCII and splits on anything that is not a letter or digit.
/// Bytes >= 0x80 are kept as word characters so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// 64-bit FNV-1a. Stable across platforms; used wherever output must be reproducible.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

using UtcSeconds = std::chrono::sys_seconds;

/// "2024-01-01T00:00:00Z"
std::string format_utc(UtcSeconds t);
UtcSeconds parse_utc(std::string_view iso);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace dxdialog
