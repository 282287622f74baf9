#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace valuelens {

using json = nlohmann::json;

enum class ErrorCode {
    parse,
    invalid_argument,
    duplicate,
    dangling_parent,
    count_mismatch,
    not_found,
    auth_missing,
    transport,
    rate_limited,
    unparseable,
    estimation,
    undefined,
    stale_pool,
    checksum,
    schema_version,
    io,
    run_failed,
    busy,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries a stable machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, int attempts)
        : Error(ErrorCode::transport, message), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class RateLimitedError : public Error {
public:
    RateLimitedError(const std::string& message, double retry_after_seconds)
        : Error(ErrorCode::rate_limited, message), retry_after_(retry_after_seconds) {}
    double retry_after_seconds() const noexcept { return retry_after_; }

private:
    double retry_after_;
};

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// First 64 bits of SHA-256, for seeding and stable bucketing.
std::uint64_t stable_hash64(std::string_view data);

// Seconds since epoch; honours SOURCE_DATE_EPOCH so artifacts can be reproduced.
std::int64_t now_seconds();

std::string iso8601(std::int64_t epoch_seconds);

}  // namespace valuelens
