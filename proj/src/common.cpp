#include "valuelens/common.hpp"

#include <array>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace valuelens {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::parse: return "parse";
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::duplicate: return "duplicate";
        case ErrorCode::dangling_parent: return "dangling_parent";
        case ErrorCode::count_mismatch: return "count_mismatch";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::auth_missing: return "auth_missing";
        case ErrorCode::transport: return "transport";
        case ErrorCode::rate_limited: return "rate_limited";
        case ErrorCode::unparseable: return "unparseable";
        case ErrorCode::estimation: return "estimation";
        case ErrorCode::undefined: return "undefined";
        case ErrorCode::stale_pool: return "stale_pool";
        case ErrorCode::checksum: return "checksum";
        case ErrorCode::schema_version: return "schema_version";
        case ErrorCode::io: return "io";
        case ErrorCode::run_failed: return "run_failed";
        case ErrorCode::busy: return "busy";
    }
    return "unknown";
}

namespace {

std::array<unsigned char, 32> sha256_raw(std::string_view data) {
    std::array<unsigned char, 32> digest{};
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, digest.data(), &len);
    EVP_MD_CTX_free(ctx);
    return digest;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    auto digest = sha256_raw(data);
    std::string out;
    out.reserve(64);
    for (unsigned char b : digest) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

std::uint64_t stable_hash64(std::string_view data) {
    auto digest = sha256_raw(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | digest[i];
    return v;
}

std::int64_t now_seconds() {
    if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH"); fixed && *fixed) {
        return std::strtoll(fixed, nullptr, 10);
    }
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string iso8601(std::int64_t epoch_seconds) {
    std::time_t t = static_cast<std::time_t>(epoch_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace valuelens
