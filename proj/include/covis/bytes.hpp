// SPDX-License-Identifier: Apache-2.0
//
// Little-endian field packing used by every wire and file format.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace covis::bytes {

template <typename T>
  requires std::is_integral_v<T>
void put_le(std::vector<std::uint8_t> &out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(u & 0xFFU));
    u = static_cast<U>(u >> 8U);
  }
}

inline void put_le(std::vector<std::uint8_t> &out, float v) {
  put_le(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_le(std::vector<std::uint8_t> &out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}

/// Caller guarantees `in.size() >= offset + sizeof(T)`.
template <typename T>
  requires std::is_integral_v<T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    u = static_cast<U>((u << 8U) | in[offset + i]);
  }
  return static_cast<T>(u);
}

inline float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in, offset));
}

inline double get_f64(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, offset));
}

std::string base64_encode(std::span<const std::uint8_t> data);
/// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace covis::bytes
