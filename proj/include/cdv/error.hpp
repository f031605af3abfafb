#pragma once

#include <stdexcept>
#include <string>

namespace cdv {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kShape,
  kEmptyInput,
  kState,
  kParse,
  kIntegrity,
  kNotFound,
  kConfig,
  kUnresolvable,
  kDegenerateLabels,
  kIo,
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

#define CDV_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Code, message) {} \
  };

CDV_DEFINE_ERROR(InvalidArgumentError, ErrorCode::kInvalidArgument)
CDV_DEFINE_ERROR(ShapeError, ErrorCode::kShape)
CDV_DEFINE_ERROR(EmptyInputError, ErrorCode::kEmptyInput)
CDV_DEFINE_ERROR(StateError, ErrorCode::kState)
CDV_DEFINE_ERROR(ParseError, ErrorCode::kParse)
CDV_DEFINE_ERROR(IntegrityError, ErrorCode::kIntegrity)
CDV_DEFINE_ERROR(NotFoundError, ErrorCode::kNotFound)
CDV_DEFINE_ERROR(ConfigError, ErrorCode::kConfig)
CDV_DEFINE_ERROR(UnresolvableError, ErrorCode::kUnresolvable)
CDV_DEFINE_ERROR(DegenerateLabelError, ErrorCode::kDegenerateLabels)
CDV_DEFINE_ERROR(IoError, ErrorCode::kIo)

#undef CDV_DEFINE_ERROR

// Throws ShapeError naming both dimensions when they differ.
void check_dims(std::size_t expected, std::size_t actual, const char* what);

}  // namespace cdv
