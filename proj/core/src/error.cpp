#include "inertia/error.hpp"

namespace inertia {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::EmptySuite: return "EmptySuite";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NumericalFailure: return 3;
    case ErrorCode::ProviderUnavailable: return 4;
    default: return 2;
  }
}

Error::Error(ErrorCode code, const std::string& message, std::string payload)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      payload_(std::move(payload)) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace inertia
