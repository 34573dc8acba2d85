// SPDX-License-Identifier: Apache-2.0
#include "covis/bytes.hpp"

#include <boost/beast/core/detail/base64.hpp>
#include <stdexcept>

namespace covis::bytes {

namespace b64 = boost::beast::detail::base64;

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(b64::encoded_size(data.size()), '\0');
  out.resize(b64::encode(out.data(), data.data(), data.size()));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw std::invalid_argument("base64: length is not a multiple of 4");
  }
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, consumed] = b64::decode(out.data(), text.data(), text.size());
  // decode() stops at the first non-alphabet character; only '=' padding may remain.
  for (std::size_t i = consumed; i < text.size(); ++i) {
    if (text[i] != '=' || text.size() - i > 2) {
      throw std::invalid_argument("base64: invalid character");
    }
  }
  out.resize(written);
  return out;
}

}  // namespace covis::bytes
