#pragma once

#include <string>
#include <string_view>

namespace trove {

/// Hex-encoded SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// Stable key for provider caching: digests (kind, model, payload) together.
std::string cache_key(std::string_view kind, std::string_view model, std::string_view payload);

/// FNV-1a 64-bit hash, used by the builtin embedder's n-gram bucketing.
std::uint64_t fnv1a64(const void* data, std::size_t len);

}  // namespace trove
