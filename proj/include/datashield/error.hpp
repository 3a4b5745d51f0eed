#pragma once

#include <stdexcept>
#include <string>

namespace datashield {

// Status codes shared with the C API. Values are part of the ABI.
enum class ErrorCode : int {
  kOk = 0,
  kArgument = 1,
  kConfig = 2,
  kNotFound = 3,
  kIo = 4,
  kParse = 5,
  kLlm = 6,
  kTimeout = 7,
  kReplay = 8,
  kFetch = 9,
  kContent = 10,
  kStorage = 11,
  kInternal = 12,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define DATASHIELD_DEFINE_ERROR(Name, Code)                      \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& message) : Error(Code, message) {} \
  };

DATASHIELD_DEFINE_ERROR(ArgumentError, ErrorCode::kArgument)
DATASHIELD_DEFINE_ERROR(ConfigError, ErrorCode::kConfig)
DATASHIELD_DEFINE_ERROR(NotFoundError, ErrorCode::kNotFound)
DATASHIELD_DEFINE_ERROR(IoError, ErrorCode::kIo)
DATASHIELD_DEFINE_ERROR(LlmError, ErrorCode::kLlm)
DATASHIELD_DEFINE_ERROR(TimeoutError, ErrorCode::kTimeout)
DATASHIELD_DEFINE_ERROR(ReplayError, ErrorCode::kReplay)
DATASHIELD_DEFINE_ERROR(FetchError, ErrorCode::kFetch)
DATASHIELD_DEFINE_ERROR(ContentError, ErrorCode::kContent)
DATASHIELD_DEFINE_ERROR(StorageError, ErrorCode::kStorage)

#undef DATASHIELD_DEFINE_ERROR

// Parse failure in an input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::kParse, "line " + std::to_string(line) + ": " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace datashield
