#pragma once

#include <stdexcept>
#include <string>

namespace gmtl {

// Error categories. Values are stable: they double as C API status codes and
// CLI exit codes (see gmtl.h).
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kUnknownTask = 3,
  kNotFound = 4,
  kSchemaVersion = 5,
  kFormat = 6,
  kNumeric = 7,
  kShape = 8,
  kIo = 9,
  kInternal = 10,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace gmtl
