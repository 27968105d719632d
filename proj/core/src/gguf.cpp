#include "rotary/gguf.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rotary/error.hpp"

namespace rotary::gguf {

std::optional<TypeTraits> type_traits(std::uint32_t code) {
  switch (static_cast<TensorType>(code)) {
    case TensorType::f32: return TypeTraits{"f32", 1, 4};
    case TensorType::f16: return TypeTraits{"f16", 1, 2};
    case TensorType::q4_0: return TypeTraits{"q4_0", 32, 18};
    case TensorType::q4_1: return TypeTraits{"q4_1", 32, 20};
    case TensorType::q5_0: return TypeTraits{"q5_0", 32, 22};
    case TensorType::q5_1: return TypeTraits{"q5_1", 32, 24};
    case TensorType::q8_0: return TypeTraits{"q8_0", 32, 34};
    case TensorType::q8_1: return TypeTraits{"q8_1", 32, 36};
    case TensorType::q2_k: return TypeTraits{"q2_K", 256, 84};
    case TensorType::q3_k: return TypeTraits{"q3_K", 256, 110};
    case TensorType::q4_k: return TypeTraits{"q4_K", 256, 144};
    case TensorType::q5_k: return TypeTraits{"q5_K", 256, 176};
    case TensorType::q6_k: return TypeTraits{"q6_K", 256, 210};
    case TensorType::q8_k: return TypeTraits{"q8_K", 256, 292};
    case TensorType::iq2_xxs: return TypeTraits{"iq2_xxs", 256, 66};
    case TensorType::iq2_xs: return TypeTraits{"iq2_xs", 256, 74};
    case TensorType::iq3_xxs: return TypeTraits{"iq3_xxs", 256, 98};
    case TensorType::iq1_s: return TypeTraits{"iq1_s", 256, 50};
    case TensorType::iq4_nl: return TypeTraits{"iq4_nl", 32, 18};
    case TensorType::iq3_s: return TypeTraits{"iq3_s", 256, 110};
    case TensorType::iq2_s: return TypeTraits{"iq2_s", 256, 82};
    case TensorType::iq4_xs: return TypeTraits{"iq4_xs", 256, 136};
    case TensorType::i8: return TypeTraits{"i8", 1, 1};
    case TensorType::i16: return TypeTraits{"i16", 1, 2};
    case TensorType::i32: return TypeTraits{"i32", 1, 4};
    case TensorType::i64: return TypeTraits{"i64", 1, 8};
    case TensorType::f64: return TypeTraits{"f64", 1, 8};
    case TensorType::iq1_m: return TypeTraits{"iq1_m", 256, 56};
    case TensorType::bf16: return TypeTraits{"bf16", 1, 2};
    case TensorType::tq1_0: return TypeTraits{"tq1_0", 256, 54};
    case TensorType::tq2_0: return TypeTraits{"tq2_0", 256, 66};
    case TensorType::mxfp4: return TypeTraits{"mxfp4", 32, 17};
  }
  return std::nullopt;
}

std::uint64_t TensorInfo::elements() const {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d)
      throw Error(ErrorCode::parse_error, "tensor '" + name + "' element count overflows");
    n *= d;
  }
  return n;
}

std::uint64_t tensor_bytes(const TensorInfo& info) {
  const auto traits = type_traits(static_cast<std::uint32_t>(info.type));
  if (!traits)
    throw Error(ErrorCode::unknown_type,
                "unknown tensor type " + std::to_string(static_cast<std::uint32_t>(info.type)));
  const std::uint64_t n = info.elements();
  const std::uint64_t blocks = n / traits->block_elements + (n % traits->block_elements ? 1 : 0);
  return blocks * traits->block_bytes;
}

namespace {

// Bounds-checked little-endian reader over a stream of known length.
class Reader {
 public:
  Reader(std::istream& in, std::uint64_t size) : in_(in), size_(size) {}

  std::uint64_t pos() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return size_ - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (n > remaining())
      throw Error(ErrorCode::truncated_file, std::string("truncated file while reading ") + what +
                                                 " at offset " + std::to_string(pos_));
  }

  void bytes(void* dst, std::uint64_t n, const char* what) {
    need(n, what);
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw Error(ErrorCode::truncated_file, std::string("short read of ") + what);
    pos_ += n;
  }

  template <typename T>
  T le(const char* what) {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    if constexpr (std::is_floating_point_v<T>) {
      using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      Bits b = static_cast<Bits>(v);
      T out;
      std::memcpy(&out, &b, sizeof(T));
      return out;
    } else {
      return static_cast<T>(v);
    }
  }

  std::string str(const char* what) {
    const auto len = le<std::uint64_t>(what);
    need(len, what);
    std::string s(static_cast<std::size_t>(len), '\0');
    bytes(s.data(), len, what);
    return s;
  }

  void skip(std::uint64_t n, const char* what) {
    need(n, what);
    in_.seekg(static_cast<std::streamoff>(n), std::ios::cur);
    if (!in_) throw Error(ErrorCode::truncated_file, std::string("short seek over ") + what);
    pos_ += n;
  }

 private:
  std::istream& in_;
  std::uint64_t size_;
  std::uint64_t pos_ = 0;
};

Header read_header(Reader& r) {
  Header h;
  r.bytes(h.magic.data(), 4, "magic");
  if (h.magic != kMagic) throw Error(ErrorCode::not_gguf, "missing GGUF magic");
  h.version = r.le<std::uint32_t>("version");
  if (h.version != 2 && h.version != 3)
    throw Error(ErrorCode::unsupported_version,
                "unsupported GGUF version " + std::to_string(h.version));
  h.tensor_count = r.le<std::uint64_t>("tensor count");
  h.metadata_kv_count = r.le<std::uint64_t>("metadata count");
  return h;
}

std::uint64_t scalar_size(ValueType t) {
  switch (t) {
    case ValueType::uint8:
    case ValueType::int8:
    case ValueType::boolean: return 1;
    case ValueType::uint16:
    case ValueType::int16: return 2;
    case ValueType::uint32:
    case ValueType::int32:
    case ValueType::float32: return 4;
    case ValueType::uint64:
    case ValueType::int64:
    case ValueType::float64: return 8;
    case ValueType::string:
    case ValueType::array: return 0;
  }
  return 0;
}

ValueType checked_value_type(std::uint32_t code) {
  if (code > static_cast<std::uint32_t>(ValueType::float64))
    throw Error(ErrorCode::unknown_type, "unknown metadata value type " + std::to_string(code));
  return static_cast<ValueType>(code);
}

void skip_value(Reader& r, ValueType t) {
  if (t == ValueType::string) {
    const auto len = r.le<std::uint64_t>("string length");
    r.skip(len, "string value");
  } else if (t == ValueType::array) {
    const auto elem = checked_value_type(r.le<std::uint32_t>("array type"));
    const auto count = r.le<std::uint64_t>("array length");
    if (elem == ValueType::string || elem == ValueType::array) {
      for (std::uint64_t i = 0; i < count; ++i) skip_value(r, elem);
    } else {
      const auto width = scalar_size(elem);
      if (count > r.remaining() / width) r.need(r.remaining() + 1, "array payload");
      r.skip(count * width, "array payload");
    }
  } else {
    r.skip(scalar_size(t), "scalar value");
  }
}

std::string read_scalar_text(Reader& r, ValueType t) {
  switch (t) {
    case ValueType::uint8: return std::to_string(r.le<std::uint8_t>("u8"));
    case ValueType::int8: return std::to_string(r.le<std::int8_t>("i8"));
    case ValueType::uint16: return std::to_string(r.le<std::uint16_t>("u16"));
    case ValueType::int16: return std::to_string(r.le<std::int16_t>("i16"));
    case ValueType::uint32: return std::to_string(r.le<std::uint32_t>("u32"));
    case ValueType::int32: return std::to_string(r.le<std::int32_t>("i32"));
    case ValueType::uint64: return std::to_string(r.le<std::uint64_t>("u64"));
    case ValueType::int64: return std::to_string(r.le<std::int64_t>("i64"));
    case ValueType::boolean: return r.le<std::uint8_t>("bool") ? "true" : "false";
    case ValueType::float32: {
      std::ostringstream os;
      os << r.le<float>("f32");
      return os.str();
    }
    case ValueType::float64: {
      std::ostringstream os;
      os << r.le<double>("f64");
      return os.str();
    }
    case ValueType::string: return r.str("string value");
    case ValueType::array: break;
  }
  return {};
}

bool retained_key(const std::string& key) {
  auto ends_with = [&](std::string_view suffix) {
    return key.size() >= suffix.size() &&
           key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return key.rfind("general.", 0) == 0 || ends_with(".block_count") ||
         ends_with(".expert_count") || ends_with(".expert_used_count") ||
         ends_with(".context_length");
}

File read_file_impl(std::istream& in, std::uint64_t size) {
  Reader r(in, size);
  File f;
  f.header = read_header(r);

  for (std::uint64_t i = 0; i < f.header.metadata_kv_count; ++i) {
    auto key = r.str("metadata key");
    const auto type = checked_value_type(r.le<std::uint32_t>("metadata type"));
    if (key == "general.alignment" && type == ValueType::uint32) {
      f.alignment = r.le<std::uint32_t>("alignment");
      if (f.alignment == 0 || (f.alignment & (f.alignment - 1)) != 0)
        throw Error(ErrorCode::parse_error, "general.alignment must be a power of two");
      f.metadata[key] = std::to_string(f.alignment);
    } else if (type != ValueType::array && retained_key(key)) {
      f.metadata[key] = read_scalar_text(r, type);
    } else {
      skip_value(r, type);
    }
  }

  std::unordered_set<std::string> names;
  std::uint64_t data_end = 0;
  for (std::uint64_t i = 0; i < f.header.tensor_count; ++i) {
    TensorInfo t;
    t.name = r.str("tensor name");
    const auto n_dims = r.le<std::uint32_t>("tensor n_dims");
    if (n_dims < 1 || n_dims > 4)
      throw Error(ErrorCode::parse_error,
                  "tensor '" + t.name + "' has " + std::to_string(n_dims) + " dimensions");
    for (std::uint32_t d = 0; d < n_dims; ++d) {
      const auto extent = r.le<std::uint64_t>("tensor dim");
      if (extent == 0) throw Error(ErrorCode::parse_error, "tensor '" + t.name + "' has a zero extent");
      t.dims.push_back(extent);
    }
    const auto code = r.le<std::uint32_t>("tensor type");
    if (!type_traits(code))
      throw Error(ErrorCode::unknown_type,
                  "tensor '" + t.name + "' has unknown type " + std::to_string(code));
    t.type = static_cast<TensorType>(code);
    t.offset = r.le<std::uint64_t>("tensor offset");
    if (!f.tensors.empty() && t.offset < f.tensors.back().offset)
      throw Error(ErrorCode::parse_error, "tensor '" + t.name + "' offset goes backwards");
    if (!names.insert(t.name).second)
      throw Error(ErrorCode::parse_error, "duplicate tensor name '" + t.name + "'");
    data_end = std::max(data_end, t.offset + tensor_bytes(t));
    f.tensors.push_back(std::move(t));
  }

  const auto pos = r.pos();
  f.data_offset = (pos + f.alignment - 1) / f.alignment * f.alignment;
  if (!f.tensors.empty() && f.data_offset + data_end > size)
    throw Error(ErrorCode::truncated_file,
                "tensor data ends at " + std::to_string(f.data_offset + data_end) +
                    " but the file has " + std::to_string(size) + " bytes");
  return f;
}

class SpanBuf : public std::streambuf {
 public:
  explicit SpanBuf(std::span<const std::uint8_t> bytes) {
    auto* p = const_cast<char*>(reinterpret_cast<const char*>(bytes.data()));
    setg(p, p, p + bytes.size());
  }

 protected:
  pos_type seekoff(off_type off, std::ios_base::seekdir dir, std::ios_base::openmode) override {
    char* target = dir == std::ios_base::cur ? gptr() + off
                   : dir == std::ios_base::beg ? eback() + off
                                               : egptr() + off;
    if (target < eback() || target > egptr()) return pos_type(off_type(-1));
    setg(eback(), target, egptr());
    return pos_type(target - eback());
  }
};

}  // namespace

Header parse_header(std::span<const std::uint8_t> bytes) {
  SpanBuf buf(bytes);
  std::istream in(&buf);
  Reader r(in, bytes.size());
  return read_header(r);
}

File read_file(std::istream& in, std::uint64_t size) { return read_file_impl(in, size); }

File read_file(std::span<const std::uint8_t> bytes) {
  SpanBuf buf(bytes);
  std::istream in(&buf);
  return read_file_impl(in, bytes.size());
}

File read_file(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot stat " + path.string() + ": " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return read_file_impl(in, size);
}

void ExpertClassifier::validate() const {
  try {
    std::regex re(expert_pattern);
    if (re.mark_count() < 1)
      throw Error(ErrorCode::invalid_argument,
                  "expert pattern needs a capture group for the layer index");
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::invalid_argument,
                "expert pattern does not compile: " + std::string(e.what()));
  }
}

namespace {

std::uint32_t numeric_group(const std::ssub_match& m, const char* what) {
  const std::string s = m.str();
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorCode::invalid_argument,
                std::string("expert pattern ") + what + " group matched non-numeric '" + s + "'");
  return v;
}

}  // namespace

LayoutBuild build_layout(std::span<const TensorInfo> tensors, const ExpertClassifier& classifier) {
  classifier.validate();
  const std::regex expert_re(classifier.expert_pattern);
  const bool per_expert_tensors = expert_re.mark_count() >= 2;
  static const std::regex block_re(R"(^blk\.(\d+)\.)");

  std::map<std::pair<std::uint32_t, std::uint32_t>, Bytes> experts;  // (layer, expert)
  std::map<std::uint32_t, Bytes> shared_by_layer;
  Bytes global_shared = 0;
  bool has_global = false;

  for (const auto& t : tensors) {
    const Bytes bytes = tensor_bytes(t);
    std::smatch m;
    if (std::regex_search(t.name, m, expert_re)) {
      const auto layer = numeric_group(m[1], "layer");
      if (per_expert_tensors && m[2].matched) {
        experts[{layer, numeric_group(m[2], "expert")}] += bytes;
      } else {
        const std::uint64_t n = t.dims.back();
        if (n > std::numeric_limits<std::uint32_t>::max())
          throw Error(ErrorCode::invalid_argument, "tensor '" + t.name + "' has too many experts");
        const Bytes each = bytes / n;
        for (std::uint32_t e = 0; e < n; ++e)
          experts[{layer, e}] += each + (e == 0 ? bytes % n : 0);
      }
      continue;
    }
    if (std::regex_search(t.name, m, block_re)) {
      shared_by_layer[numeric_group(m[1], "block")] += bytes;
    } else {
      global_shared += bytes;
      has_global = true;
    }
  }

  LayoutBuild out;
  std::uint32_t stride = 0;
  for (const auto& [key, _] : experts) stride = std::max(stride, key.second + 1);
  out.experts_per_layer = stride;

  std::vector<SubModule> subs;
  std::uint64_t next_id = 0;
  for (const auto& [key, bytes] : experts) {
    const auto [layer, expert] = key;
    const std::uint64_t id = static_cast<std::uint64_t>(layer) * stride + expert;
    if (id > std::numeric_limits<std::uint32_t>::max())
      throw Error(ErrorCode::invalid_argument, "expert id space exceeds 32 bits");
    subs.push_back({SubModuleId{static_cast<std::uint32_t>(id)}, bytes, SubModuleKind::expert,
                    layer, expert});
    next_id = std::max(next_id, id + 1);
  }

  std::vector<SubModuleId> mandatory;
  auto add_shared = [&](std::uint32_t layer, Bytes bytes) {
    if (bytes == 0) return;  // a block of zero-byte tensors has no residency cost
    const SubModuleId id{static_cast<std::uint32_t>(next_id++)};
    subs.push_back({id, bytes, SubModuleKind::shared, layer, std::nullopt});
    if (classifier.shared_default) mandatory.push_back(id);
  };
  for (const auto& [layer, bytes] : shared_by_layer) add_shared(layer, bytes);
  if (has_global) add_shared(0, global_shared);

  if (experts.empty() && !tensors.empty())
    out.warnings.push_back("expert pattern matched no tensor; layout has shared blocks only");

  out.layout = ModelLayout(std::move(subs), std::move(mandatory));
  return out;
}

}  // namespace rotary::gguf
