#include "rotary/error.hpp"

namespace rotary {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::budget_exceeded: return "budget-exceeded";
    case ErrorCode::duplicate_resident: return "duplicate-resident";
    case ErrorCode::infeasible_trace: return "infeasible-trace";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::validation_error: return "validation-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::invalid_scenario: return "invalid-scenario";
    case ErrorCode::not_gguf: return "not-gguf";
    case ErrorCode::unsupported_version: return "unsupported-version";
    case ErrorCode::truncated_file: return "truncated-file";
    case ErrorCode::unknown_type: return "unknown-type";
  }
  return "unknown";
}

}  // namespace rotary
