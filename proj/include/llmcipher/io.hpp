#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace llmcipher {

/// Reads a whole file; throws IoError naming the path when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace llmcipher
