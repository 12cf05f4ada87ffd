#include "vlab/service/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <stdexcept>
#include <vector>

namespace vlab::service {

namespace {

constexpr std::size_t salt_bytes = 16, key_bytes = 32;

std::string to_hex(const unsigned char* p, std::size_t n)
{
    static const char* digits = "0123456789abcdef";
    std::string s(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        s[2 * i] = digits[p[i] >> 4];
        s[2 * i + 1] = digits[p[i] & 15];
    }
    return s;
}

std::vector<unsigned char> from_hex(const std::string& s)
{
    if (s.size() % 2)
        throw std::invalid_argument("odd-length hex string");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9')
            return c - '0';
        if (c >= 'a' && c <= 'f')
            return c - 'a' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    std::vector<unsigned char> out(s.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<unsigned char>(nibble(s[2 * i]) * 16 + nibble(s[2 * i + 1]));
    return out;
}

std::vector<unsigned char> derive(const std::string& password, const std::vector<unsigned char>& salt,
                                  int iterations, std::size_t len)
{
    std::vector<unsigned char> key(len);
    if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), iterations, EVP_sha256(), static_cast<int>(len),
                          key.data()) != 1)
        throw std::runtime_error("PBKDF2 failed");
    return key;
}

} // namespace

PasswordHash hash_password(const std::string& password, int iterations)
{
    if (iterations < 1)
        throw std::invalid_argument("iterations must be >= 1");
    std::vector<unsigned char> salt(salt_bytes);
    if (RAND_bytes(salt.data(), static_cast<int>(salt.size())) != 1)
        throw std::runtime_error("RAND_bytes failed");
    const auto key = derive(password, salt, iterations, key_bytes);
    return {"pbkdf2-sha256", iterations, to_hex(salt.data(), salt.size()), to_hex(key.data(), key.size())};
}

bool verify_password(const std::string& password, const PasswordHash& stored)
{
    if (stored.algorithm != "pbkdf2-sha256" || stored.iterations < 1)
        return false;
    const auto expected = from_hex(stored.hash_hex);
    const auto key = derive(password, from_hex(stored.salt_hex), stored.iterations, expected.size());
    return CRYPTO_memcmp(key.data(), expected.data(), key.size()) == 0;
}

nlohmann::json to_json(const PasswordHash& h)
{
    return {{"algorithm", h.algorithm}, {"iterations", h.iterations}, {"salt", h.salt_hex}, {"hash", h.hash_hex}};
}

PasswordHash password_hash_from_json(const nlohmann::json& j)
{
    return {j.at("algorithm").get<std::string>(), j.at("iterations").get<int>(), j.at("salt").get<std::string>(),
            j.at("hash").get<std::string>()};
}

std::string random_hex(std::size_t n)
{
    std::vector<unsigned char> buf(n);
    if (RAND_bytes(buf.data(), static_cast<int>(n)) != 1)
        throw std::runtime_error("RAND_bytes failed");
    return to_hex(buf.data(), n);
}

std::string sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    return to_hex(md, len);
}

} // namespace vlab::service
