#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stackcast {

/// "%a" formatting; parse_hex_double(hex_double(x)) == x bit for bit.
std::string hex_double(double v);
double parse_hex_double(std::string_view s);

inline constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
/// 64-bit FNV-1a, stable across platforms. Used for config and artifact hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace stackcast
