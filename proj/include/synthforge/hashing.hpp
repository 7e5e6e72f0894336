#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace synthforge {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's bytes; throws Error(kIoError) when unreadable.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace synthforge
