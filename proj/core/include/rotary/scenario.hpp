#pragma once

#include <filesystem>
#include <istream>
#include <optional>

#include "rotary/cost_model.hpp"

namespace rotary {

/// A parsed scenario file: the run configuration plus the trace it names.
///
/// Format is one `key = value` per line, `#` starts a comment. A `[rotary]`
/// header switches to the controller keys; they may also be written as
/// `rotary.lambda = ...` at top level. Relative paths resolve against the
/// directory of the scenario file.
struct ScenarioFile {
  ScenarioConfig config;
  std::optional<std::filesystem::path> trace;
  std::filesystem::path layout_path;
};

/// Errors: parse_error for malformed lines or values, invalid_scenario for
/// unknown, duplicate or missing keys, io_error when the layout is unreadable.
ScenarioFile parse_scenario(std::istream& in, const std::filesystem::path& base_dir);
ScenarioFile load_scenario(const std::filesystem::path& path);

}  // namespace rotary
