#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rotary/residency.hpp"

namespace rotary {

// Layout file schema:
//   {"submodules": [{"id", "size_bytes", "kind": "expert"|"shared",
//                    "layer_index", "expert_index"?}, ...],
//    "mandatory_resident": [ids...]}
std::string layout_to_json(const ModelLayout& layout);
ModelLayout layout_from_json(const std::string& text);

ModelLayout read_layout(const std::filesystem::path& path);
void write_layout(const std::filesystem::path& path, const ModelLayout& layout);

}  // namespace rotary
