#pragma once

#include <filesystem>
#include <string>

namespace npcviz {

/// Reads a whole file; throws std::runtime_error if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written document.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

}  // namespace npcviz
