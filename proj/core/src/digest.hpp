#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rotary::detail {

/// 64-bit FNV-1a rendered as 16 lowercase hex digits. Used for report
/// digests only, not for anything security related.
std::string fnv1a_hex(std::string_view data);

}  // namespace rotary::detail
