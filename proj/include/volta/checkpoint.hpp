#pragma once

// Checkpoint file (.vvc), all integers and floats little-endian:
//
//   bytes 0..3   magic "VVCK"
//   byte  4      format version (1)
//   bytes 5..7   zero
//   u32          header byte count
//   header:
//     u32 x 12   input_channels, input_h, input_w, conv_filters[0..2], kernel,
//                stride, padding, pool_kernel, pool_stride, num_classes
//     f64 x 2    batchnorm eps, batchnorm momentum
//     u32 + utf8 provenance note
//     u32        class name count (0 or num_classes), each u32 + utf8
//     u32        layer count
//     per layer: u8 kind, u8 tensor count,
//                per tensor: u8 role, u8 rank, u32 x rank extents
//     u64        blob float count
//   blob:        f32 values, tensors in manifest order
//
// Roles: 1 weight, 2 bias, 3 gamma, 4 beta, 5 running_mean, 6 running_var.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "volta/file_io.hpp"
#include "volta/model.hpp"

namespace volta {

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelGraph& model);

/// Throws CheckpointError with kind bad_magic, version_mismatch,
/// truncated_blob or manifest_mismatch.
ModelGraph deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes the checkpoint and returns its byte count.
std::size_t save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

}  // namespace volta
