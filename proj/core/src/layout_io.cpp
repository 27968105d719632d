#include "rotary/layout_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rotary/error.hpp"

namespace rotary {

using nlohmann::json;

std::string layout_to_json(const ModelLayout& layout) {
  json subs = json::array();
  for (const auto& sm : layout.submodules()) {
    json j = {{"id", to_index(sm.id)},
              {"size_bytes", sm.size_bytes},
              {"kind", sm.kind == SubModuleKind::expert ? "expert" : "shared"},
              {"layer_index", sm.layer_index}};
    if (sm.expert_index) j["expert_index"] = *sm.expert_index;
    subs.push_back(std::move(j));
  }
  json mandatory = json::array();
  for (auto id : layout.mandatory_resident()) mandatory.push_back(to_index(id));
  json doc = {{"submodules", std::move(subs)}, {"mandatory_resident", std::move(mandatory)}};
  return doc.dump(2) + "\n";
}

ModelLayout layout_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("layout JSON: ") + e.what());
  }
  try {
    std::vector<SubModule> subs;
    for (const auto& j : doc.at("submodules")) {
      SubModule sm;
      sm.id = SubModuleId{j.at("id").get<std::uint32_t>()};
      sm.size_bytes = j.at("size_bytes").get<Bytes>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "expert") {
        sm.kind = SubModuleKind::expert;
      } else if (kind == "shared") {
        sm.kind = SubModuleKind::shared;
      } else {
        throw Error(ErrorCode::parse_error, "layout JSON: unknown kind '" + kind + "'");
      }
      sm.layer_index = j.at("layer_index").get<std::uint32_t>();
      if (j.contains("expert_index")) sm.expert_index = j.at("expert_index").get<std::uint32_t>();
      subs.push_back(sm);
    }
    std::vector<SubModuleId> mandatory;
    if (doc.contains("mandatory_resident"))
      for (const auto& v : doc.at("mandatory_resident"))
        mandatory.push_back(SubModuleId{v.get<std::uint32_t>()});
    return ModelLayout(std::move(subs), std::move(mandatory));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("layout JSON: ") + e.what());
  }
}

ModelLayout read_layout(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open layout file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return layout_from_json(buf.str());
}

void write_layout(const std::filesystem::path& path, const ModelLayout& layout) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write layout file " + path.string());
  out << layout_to_json(layout);
}

}  // namespace rotary
