#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sargan/data.hpp"

namespace sargan {

/// Supported on-disk encodings, chosen by file extension:
///   .png  grayscale PNG, 8 or 16 bit
///   .sras flat binary: "SRAS", u32 version (1), u32 width, u32 height,
///         u32 bits (16), then width*height u16 samples; all little-endian.
/// Intensities in [0, 1] are quantised to round(v * (2^bits - 1)).
enum class RasterEncoding { png8, png16, sras16 };

constexpr std::size_t kSrasHeaderBytes = 20;

// Throws DataError naming the byte offset for malformed or truncated input.
Raster load_raster(const std::filesystem::path& path);

// Default encoding is 16 bit; `png8` only applies to .png paths.
void save_raster(const Raster& raster, const std::filesystem::path& path,
                 RasterEncoding encoding = RasterEncoding::png16);

/// Mask files store ocean as 0 and glacier+rock as full scale (255 for 8-bit).
/// Loading rejects any other value and lists the offenders.
SegmentationMask load_mask(const std::filesystem::path& path);
void save_mask(const SegmentationMask& mask, const std::filesystem::path& path);

/// Raw quantised samples as stored in the file, before scaling to [0, 1].
struct RawRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

RawRaster read_raw_raster(const std::filesystem::path& path);
void write_raw_raster(const RawRaster& raw, const std::filesystem::path& path);

}  // namespace sargan
