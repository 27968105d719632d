#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rotary/residency.hpp"

namespace rotary::gguf {

inline constexpr std::array<char, 4> kMagic{'G', 'G', 'U', 'F'};
inline constexpr std::uint64_t kDefaultAlignment = 32;

struct Header {
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint64_t tensor_count = 0;
  std::uint64_t metadata_kv_count = 0;

  friend bool operator==(const Header&, const Header&) = default;
};

/// Metadata value type codes.
enum class ValueType : std::uint32_t {
  uint8 = 0, int8 = 1, uint16 = 2, int16 = 3, uint32 = 4, int32 = 5, float32 = 6,
  boolean = 7, string = 8, array = 9, uint64 = 10, int64 = 11, float64 = 12,
};

/// Tensor element types (ggml numbering). Removed codes are not listed.
enum class TensorType : std::uint32_t {
  f32 = 0, f16 = 1, q4_0 = 2, q4_1 = 3, q5_0 = 6, q5_1 = 7, q8_0 = 8, q8_1 = 9,
  q2_k = 10, q3_k = 11, q4_k = 12, q5_k = 13, q6_k = 14, q8_k = 15,
  iq2_xxs = 16, iq2_xs = 17, iq3_xxs = 18, iq1_s = 19, iq4_nl = 20, iq3_s = 21,
  iq2_s = 22, iq4_xs = 23, i8 = 24, i16 = 25, i32 = 26, i64 = 27, f64 = 28,
  iq1_m = 29, bf16 = 30, tq1_0 = 34, tq2_0 = 35, mxfp4 = 39,
};

struct TypeTraits {
  const char* name;
  std::uint64_t block_elements;
  std::uint64_t block_bytes;
};

/// Block geometry for a type code; nullopt for codes this parser does not know.
std::optional<TypeTraits> type_traits(std::uint32_t code);

struct TensorInfo {
  std::string name;
  std::vector<std::uint64_t> dims;  // 1..4 extents, innermost first
  TensorType type = TensorType::f32;
  std::uint64_t offset = 0;  // relative to the start of the data section

  std::uint64_t elements() const;
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

struct File {
  Header header;
  /// Retained scalar metadata (general.* and architecture shape keys),
  /// rendered as text. All other values are skipped.
  std::map<std::string, std::string> metadata;
  std::vector<TensorInfo> tensors;
  std::uint64_t alignment = kDefaultAlignment;
  std::uint64_t data_offset = 0;  // absolute file offset of tensor data
};

/// Errors: not_gguf, unsupported_version, truncated_file.
Header parse_header(std::span<const std::uint8_t> bytes);

/// Reads header, metadata and tensor table from a stream of `size` bytes.
/// Errors: those of parse_header plus unknown_type and truncated_file.
File read_file(std::istream& in, std::uint64_t size);
File read_file(const std::filesystem::path& path);
File read_file(std::span<const std::uint8_t> bytes);

inline std::vector<TensorInfo> read_tensor_table(const std::filesystem::path& path) {
  return read_file(path).tensors;
}

/// ceil(elements / block_elements) * block_bytes. Error(unknown_type) for
/// unknown codes.
std::uint64_t tensor_bytes(const TensorInfo& info);

/// How tensors map onto expert sub-modules.
///
/// Capture group 1 of `expert_pattern` is the layer index. If the pattern has
/// a second group it is the expert index (one tensor per expert). With only
/// one group the tensor holds all experts of the layer fused along its
/// outermost dimension and is split evenly between them.
struct ExpertClassifier {
  std::string expert_pattern = kDefaultExpertPattern;
  bool shared_default = true;  // unmatched tensors become shared blocks

  static constexpr const char* kDefaultExpertPattern =
      R"(^blk\.(\d+)\.ffn_(?:gate|up|down|gate_up)_exps\.)";

  /// Throws Error(invalid_argument) if the pattern does not compile or has
  /// no layer group.
  void validate() const;
};

struct LayoutBuild {
  ModelLayout layout;
  std::vector<std::string> warnings;
  std::uint32_t experts_per_layer = 0;  // id stride used for expert ids
};

/// Groups expert tensors by (layer, expert) and folds every other tensor into
/// one shared block per layer (plus one for tensors outside any block). Expert
/// ids are layer * experts_per_layer + expert; shared ids follow. All shared
/// blocks are mandatory-resident.
LayoutBuild build_layout(std::span<const TensorInfo> tensors, const ExpertClassifier& classifier);

}  // namespace rotary::gguf
