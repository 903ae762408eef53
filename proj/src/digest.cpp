#include "meter/digest.hpp"

#include "meter/error.hpp"

#include <boost/crc.hpp>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <vector>

namespace meter {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (unsigned char byte : digest) {
        out.push_back(kHex[byte >> 4]);
        out.push_back(kHex[byte & 0x0f]);
    }
    return out;
}

std::string base64_encode(std::string_view data) {
    std::vector<unsigned char> out(4 * ((data.size() + 2) / 3) + 1);
    const int written =
        EVP_EncodeBlock(out.data(), reinterpret_cast<const unsigned char*>(data.data()), static_cast<int>(data.size()));
    return std::string(reinterpret_cast<const char*>(out.data()), static_cast<std::size_t>(written));
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        fail(ErrorKind::storage, "corrupt_record", "base64 payload has invalid length");
    }
    std::vector<unsigned char> out(3 * (text.size() / 4) + 1);
    const int written =
        EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (written < 0) {
        fail(ErrorKind::storage, "corrupt_record", "base64 payload is malformed");
    }
    std::size_t size = static_cast<std::size_t>(written);
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    for (auto it = text.rbegin(); it != text.rend() && *it == '='; ++it) {
        --size;
    }
    return std::string(reinterpret_cast<const char*>(out.data()), size);
}

std::uint32_t crc32(std::string_view data) {
    boost::crc_32_type crc;
    crc.process_bytes(data.data(), data.size());
    return crc.checksum();
}

} // namespace meter
