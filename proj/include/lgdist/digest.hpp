#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lgdist {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& file);
/// Digest of every regular file under `dir` (relative path and content),
/// skipping the listed relative paths.
std::string sha256_directory(const std::filesystem::path& dir, const std::vector<std::string>& exclude = {});

} // namespace lgdist
