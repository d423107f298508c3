#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "volta/tensor.hpp"

namespace volta {

/// Decodes PNG or JPEG (detected from the signature) into a (1, 3, H, W)
/// tensor scaled to [0, 1]. Grayscale is replicated across channels and alpha
/// is dropped. Throws DecodeError mentioning `name` on failure.
Tensor decode_image(std::span<const std::uint8_t> bytes, const std::string& name);
Tensor read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace volta
