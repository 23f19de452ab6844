#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "qaemb/error.hpp"

namespace qaemb {

inline std::string to_hex(const unsigned char* data, std::size_t n)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xF];
    }
    return out;
}

/// Lowercase hex SHA-256 digest.
inline std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::IoError, "SHA-256 digest failed");
    }
    return to_hex(md.data(), len);
}

/// FNV-1a, 64-bit. Stable across platforms and standard libraries, unlike
/// std::hash; used for feature hashing.
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace qaemb
