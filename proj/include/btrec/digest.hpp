#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace btrec {

/// Lowercase hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-256 of a file's contents; throws DataError if unreadable.
std::string file_sha256(const std::filesystem::path& path);

/// CRC-32 (zlib polynomial) of a byte range.
std::uint32_t crc32_of(std::span<const std::byte> bytes);

}  // namespace btrec
