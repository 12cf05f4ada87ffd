#pragma once

#include <json.hpp>

#include <cstddef>
#include <string>

namespace vlab::service {

/// Salted PBKDF2-HMAC-SHA256 record; parameters travel with the hash.
struct PasswordHash {
    std::string algorithm = "pbkdf2-sha256";
    int iterations = 0;
    std::string salt_hex;
    std::string hash_hex;

    bool operator==(const PasswordHash&) const = default;
};

PasswordHash hash_password(const std::string& password, int iterations);
/// Constant-time comparison against the stored hash.
bool verify_password(const std::string& password, const PasswordHash& stored);

nlohmann::json to_json(const PasswordHash& h);
PasswordHash password_hash_from_json(const nlohmann::json& j);

/// Hex string of `n` bytes from the OpenSSL CSPRNG.
std::string random_hex(std::size_t n);

std::string sha256_hex(const std::string& data);

} // namespace vlab::service
