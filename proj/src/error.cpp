#include "cdv/error.hpp"

namespace cdv {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShape: return "shape_error";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kState: return "state_error";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kIntegrity: return "integrity_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kUnresolvable: return "unresolvable_entity";
    case ErrorCode::kDegenerateLabels: return "degenerate_labels";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

void check_dims(std::size_t expected, std::size_t actual, const char* what) {
  if (expected != actual) {
    throw ShapeError(std::string(what) + ": expected dimension " +
                     std::to_string(expected) + ", got " +
                     std::to_string(actual));
  }
}

}  // namespace cdv
