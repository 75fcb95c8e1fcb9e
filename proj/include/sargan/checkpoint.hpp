#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sargan/networks.hpp"

namespace sargan {

/// Binary checkpoint container, little-endian throughout:
///
///   "SARGANCK"  magic (8 bytes)
///   u32         format version (kCheckpointVersion)
///   u32         epoch
///   str         variant name (u32 length + bytes)
///   u8          network kind (0 generator, 1 discriminator)
///   u32 x 4     base channels, depth, input channels, patch size
///   u32         layer count, then per layer:
///                 u8 op, u32 kernel, stride, padding, output padding,
///                 in channels, out channels, u8 batch norm, u8 activation,
///                 f64 slope, f64 dropout rate, i32 skip source (-1 none)
///   tensors     per layer: weight, bias, then gamma, beta, running mean,
///               running var when the layer has batch norm; each as
///               u32 rank, u32 extents, f64 IEEE-754 values
///   "END!"      trailer
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkState state;
  std::uint32_t epoch = 0;
};

std::string serialize_checkpoint(const NetworkState& state, std::uint32_t epoch);
// Throws DataError with the byte offset of the first inconsistency.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const NetworkState& state,
                     std::uint32_t epoch);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// "ckpt_epoch{N}.bin"
std::string checkpoint_filename(std::uint32_t epoch);

}  // namespace sargan
