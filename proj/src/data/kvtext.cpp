#include "cellprog/kvtext.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kConfig, what + " line " + std::to_string(row) + ": expected key=value, got '" + t + "'");
    }
    const auto key = trim(t.substr(0, eq));
    if (!kv.emplace(key, trim(t.substr(eq + 1))).second) {
      throw Error(ErrorCode::kConfig, what + " line " + std::to_string(row) + ": duplicate key " + key);
    }
  }
  return kv;
}

double kv_double(const std::string& key, const std::string& value, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kConfig, what + ": bad number for " + key + ": '" + value + "'");
  }
  return v;
}

std::uint64_t kv_uint(const std::string& key, const std::string& value, const std::string& what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kConfig, what + ": bad non-negative integer for " + key + ": '" + value + "'");
  }
  return v;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace cellprog
