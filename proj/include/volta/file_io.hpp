#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace volta {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Creates parent directories as needed and replaces any existing file.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Digest over every regular file below `root`, in sorted relative-path order,
/// feeding "<relative path>\n<size>\n<bytes>" for each.
std::string sha256_tree(const std::filesystem::path& root);

}  // namespace volta
