#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cellprog {

enum class ErrorCode {
  kDimension,
  kConfig,
  kData,
  kUsage,
  kNumeric,
  kIo,
  kSearch,
};

/// Short stable tag used in the CLI's "E:<code>:" prefix.
constexpr std::string_view error_tag(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dim";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kData: return "data";
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kSearch: return "search";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cellprog
