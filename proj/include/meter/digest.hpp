#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace meter {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);
std::string base64_decode(std::string_view text);

std::uint32_t crc32(std::string_view data);

} // namespace meter
