#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sargan/rng.hpp"
#include "sargan/tensor.hpp"
#include "sargan/training.hpp"

namespace sargan {

/// Single-channel intensity grid, row-major.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Raster() = default;
  Raster(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

enum class MaskClass : std::uint8_t { ocean = 0, glacier_and_rock = 1 };

/// Two-class label grid: 0 = ocean, 1 = glacier and rock.
struct SegmentationMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> classes;

  SegmentationMask() = default;
  SegmentationMask(std::size_t w, std::size_t h, MaskClass fill = MaskClass::ocean)
      : width(w), height(h), classes(w * h, static_cast<std::uint8_t>(fill)) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return classes[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return classes[y * width + x]; }

  // Throws DataError when any value other than 0 or 1 is present.
  void validate() const;
  double fraction(MaskClass c) const;

  friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;
};

struct PatchProvenance {
  std::string source;
  std::size_t offset_x = 0;
  std::size_t offset_y = 0;

  friend bool operator==(const PatchProvenance&, const PatchProvenance&) = default;
};

struct PairedPatch {
  SegmentationMask mask;
  Raster image;  // [0, 1]
  PatchProvenance provenance;
};

/// Tiles both rasters on a non-overlapping grid anchored at the origin and
/// drops partial border tiles. Returns nothing (with a warning) when the
/// rasters are smaller than one patch; throws DataError when their sizes differ.
std::vector<PairedPatch> extract_patches(const Raster& image, const SegmentationMask& mask,
                                         std::size_t patch_size, const std::string& source);

// Crops a width x height window at (x0, y0).
Raster crop(const Raster& r, std::size_t x0, std::size_t y0, std::size_t width,
            std::size_t height);
SegmentationMask crop(const SegmentationMask& m, std::size_t x0, std::size_t y0,
                      std::size_t width, std::size_t height);

enum class Split { train, validation };
std::string_view split_name(Split s);

struct ManifestEntry {
  std::string patch_id;
  PatchProvenance provenance;
  Split split = Split::train;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;  // original patch order
  std::uint64_t seed = 0;

  std::size_t count(Split s) const;
  std::vector<ManifestEntry> subset(Split s) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct PatchRecord {
  std::string patch_id;
  PatchProvenance provenance;
};

/// Shuffles with `seed`; the first floor(n * ratio) go to training, the rest
/// to validation. Throws std::invalid_argument on empty input or a ratio
/// outside (0, 1).
DatasetManifest split_dataset(std::span<const PatchRecord> patches, double ratio,
                              std::uint64_t seed);

// Line-oriented text: "# split_seed=N", header
// `patch_id,source,offset_x,offset_y,split`, one row per patch.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct Scene {
  SegmentationMask mask;
  Raster image;
};

/// Procedural SAR-like scene: a smooth random calving front separates a
/// bright, textured glacier from darker ocean; both regions carry
/// multiplicative speckle and the image is rescaled to [0, 1].
/// Throws std::invalid_argument for dimensions below 64.
Scene synth_scene(std::size_t width, std::size_t height, Rng& rng);

// Network-space tensors: mask classes map to {-1, +1}, intensities to 2v - 1.
Tensor mask_to_tensor(const SegmentationMask& mask);
Tensor image_to_tensor(const Raster& image);
Raster tensor_to_image(const Tensor& t);  // inverse of image_to_tensor, clamped to [0, 1]
TrainingPair to_training_pair(const PairedPatch& patch);

}  // namespace sargan
