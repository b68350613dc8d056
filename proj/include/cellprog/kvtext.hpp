#pragma once

// key=value text files: blank lines and '#' comments are ignored.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace cellprog {

/// Throws ErrorCode::kConfig, prefixed with `what`, on a malformed or duplicate line.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& what);

double kv_double(const std::string& key, const std::string& value, const std::string& what);
std::uint64_t kv_uint(const std::string& key, const std::string& value, const std::string& what);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cellprog
