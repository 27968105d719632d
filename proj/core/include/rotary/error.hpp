#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rotary {

enum class ErrorCode {
  invalid_argument,
  budget_exceeded,
  duplicate_resident,
  infeasible_trace,
  parse_error,
  validation_error,
  io_error,
  invalid_scenario,
  not_gguf,
  unsupported_version,
  truncated_file,
  unknown_type,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rotary
