#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace semtraj {

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents, streamed. Throws std::runtime_error if the
/// file cannot be opened.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace semtraj
