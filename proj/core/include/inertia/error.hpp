#pragma once

#include <stdexcept>
#include <string>

namespace inertia {

enum class ErrorCode {
  InvalidInput,
  InvalidConfig,
  ProviderUnavailable,
  NumericalFailure,
  ParseFailure,
  EmptySuite,
};

const char* to_string(ErrorCode code);

// Process exit status for the CLI: 2 config/input, 3 numeric, 4 provider.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string payload = {});

  ErrorCode code() const noexcept { return code_; }

  // Raw payload retained for ParseFailure (e.g. the judge's reply).
  const std::string& payload() const noexcept { return payload_; }

 private:
  ErrorCode code_;
  std::string payload_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::InvalidInput, message);
}

}  // namespace inertia
