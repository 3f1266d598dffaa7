#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace iqarag {

// Writes to a sibling temporary file, then renames it over `path`. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Throws FileNotFoundError or IoError.
std::string read_file(const std::filesystem::path& path);

}  // namespace iqarag
