#include "sargan/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "sargan/errors.hpp"

namespace sargan {

void SegmentationMask::validate() const {
  if (classes.size() != width * height) {
    throw DataError("mask holds " + std::to_string(classes.size()) + " values for " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  std::set<int> bad;
  for (std::uint8_t c : classes) {
    if (c > 1) bad.insert(c);
  }
  if (!bad.empty()) {
    std::string list;
    for (int v : bad) list += (list.empty() ? "" : ", ") + std::to_string(v);
    throw DataError("mask contains values other than the two classes {0, 1}: " + list);
  }
}

double SegmentationMask::fraction(MaskClass c) const {
  if (classes.empty()) return 0.0;
  const auto n = std::count(classes.begin(), classes.end(), static_cast<std::uint8_t>(c));
  return static_cast<double>(n) / static_cast<double>(classes.size());
}

Raster crop(const Raster& r, std::size_t x0, std::size_t y0, std::size_t width,
            std::size_t height) {
  Raster out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(r.pixels.begin() + static_cast<std::ptrdiff_t>((y0 + y) * r.width + x0), width,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y * width));
  }
  return out;
}

SegmentationMask crop(const SegmentationMask& m, std::size_t x0, std::size_t y0,
                      std::size_t width, std::size_t height) {
  SegmentationMask out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(m.classes.begin() + static_cast<std::ptrdiff_t>((y0 + y) * m.width + x0), width,
                out.classes.begin() + static_cast<std::ptrdiff_t>(y * width));
  }
  return out;
}

std::vector<PairedPatch> extract_patches(const Raster& image, const SegmentationMask& mask,
                                         std::size_t patch_size, const std::string& source) {
  if (patch_size == 0) throw std::invalid_argument("patch size must be positive");
  if (image.width != mask.width || image.height != mask.height) {
    throw DataError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " and mask " + std::to_string(mask.width) + "x" +
                    std::to_string(mask.height) + " differ in size");
  }
  std::vector<PairedPatch> out;
  if (image.width < patch_size || image.height < patch_size) {
    spdlog::warn("raster {} ({}x{}) is smaller than one {}px patch; no patches extracted", source,
                 image.width, image.height, patch_size);
    return out;
  }
  for (std::size_t y = 0; y + patch_size <= image.height; y += patch_size) {
    for (std::size_t x = 0; x + patch_size <= image.width; x += patch_size) {
      out.push_back({crop(mask, x, y, patch_size, patch_size),
                     crop(image, x, y, patch_size, patch_size), {source, x, y}});
    }
  }
  return out;
}

std::string_view split_name(Split s) { return s == Split::train ? "train" : "validation"; }

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

std::vector<ManifestEntry> DatasetManifest::subset(Split s) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [s](const ManifestEntry& e) { return e.split == s; });
  return out;
}

DatasetManifest split_dataset(std::span<const PatchRecord> patches, double ratio,
                              std::uint64_t seed) {
  if (patches.empty()) throw std::invalid_argument("split_dataset: empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must lie strictly between 0 and 1");
  }
  const std::size_t n = patches.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    manifest.entries[i].patch_id = patches[i].patch_id;
    manifest.entries[i].provenance = patches[i].provenance;
  }
  for (std::size_t rank = 0; rank < n; ++rank) {
    manifest.entries[order[rank]].split = rank < n_train ? Split::train : Split::validation;
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# split_seed=" << manifest.seed << "\n";
  out << "patch_id,source,offset_x,offset_y,split\n";
  for (const ManifestEntry& e : manifest.entries) {
    out << e.patch_id << ',' << e.provenance.source << ',' << e.provenance.offset_x << ','
        << e.provenance.offset_y << ',' << split_name(e.split) << '\n';
  }
  out.close();
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto fail = [&](const std::string& msg) {
    throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# split_seed=";
      if (line.rfind(key, 0) == 0) manifest.seed = std::stoull(line.substr(key.size()));
      continue;
    }
    if (!header_seen) {
      if (line != "patch_id,source,offset_x,offset_y,split") fail("unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) fail("expected 5 fields, found " + std::to_string(fields.size()));
    ManifestEntry e;
    e.patch_id = fields[0];
    e.provenance.source = fields[1];
    try {
      e.provenance.offset_x = std::stoull(fields[2]);
      e.provenance.offset_y = std::stoull(fields[3]);
    } catch (const std::exception&) {
      fail("offsets must be non-negative integers");
    }
    if (fields[4] == "train") {
      e.split = Split::train;
    } else if (fields[4] == "validation") {
      e.split = Split::validation;
    } else {
      fail("unknown split '" + fields[4] + "'");
    }
    manifest.entries.push_back(std::move(e));
  }
  if (!header_seen) throw DataError("manifest " + path.string() + " has no header");
  return manifest;
}

namespace {

// Sum of a few random low-frequency sinusoids, used for both the front line
// and the glacier's large-scale texture.
struct SmoothCurve {
  std::vector<double> amplitude, frequency, phase;

  SmoothCurve(Rng& rng, std::size_t terms, double max_amplitude) {
    for (std::size_t i = 0; i < terms; ++i) {
      amplitude.push_back(max_amplitude * uniform01(rng) / static_cast<double>(i + 1));
      frequency.push_back(0.5 + 1.5 * static_cast<double>(i + 1) * uniform01(rng));
      phase.push_back(6.283185307179586 * uniform01(rng));
    }
  }
  double operator()(double t) const {  // t in [0, 1]
    double v = 0.0;
    for (std::size_t i = 0; i < amplitude.size(); ++i) {
      v += amplitude[i] * std::sin(6.283185307179586 * frequency[i] * t + phase[i]);
    }
    return v;
  }
};

// Box-blurred white noise, rescaled to zero mean and unit peak.
std::vector<double> correlated_noise(std::size_t w, std::size_t h, std::size_t radius, Rng& rng) {
  std::vector<double> white(w * h);
  for (double& v : white) v = uniform01(rng) - 0.5;
  std::vector<double> tmp(w * h), out(w * h);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto xx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + d, 0,
                                                   static_cast<std::ptrdiff_t>(w) - 1);
        acc += white[y * w + static_cast<std::size_t>(xx)];
      }
      tmp[y * w + x] = acc;
    }
  }
  double peak = 1e-12;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + d, 0,
                                                   static_cast<std::ptrdiff_t>(h) - 1);
        acc += tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[y * w + x] = acc;
      peak = std::max(peak, std::abs(acc));
    }
  }
  for (double& v : out) v /= peak;
  return out;
}

}  // namespace

Scene synth_scene(std::size_t width, std::size_t height, Rng& rng) {
  if (width < 64 || height < 64) {
    throw std::invalid_argument("synth_scene needs dimensions >= 64");
  }
  // Front runs across the image; orientation picks which side is land.
  const bool vertical_front = uniform01(rng) < 0.5;
  const bool glacier_first = uniform01(rng) < 0.5;
  const double base = 0.35 + 0.3 * uniform01(rng);
  const SmoothCurve front(rng, 4, 0.12);

  Scene scene{SegmentationMask(width, height), Raster(width, height)};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double along = vertical_front ? static_cast<double>(y) / static_cast<double>(height)
                                          : static_cast<double>(x) / static_cast<double>(width);
      const double across = vertical_front ? static_cast<double>(x) / static_cast<double>(width)
                                           : static_cast<double>(y) / static_cast<double>(height);
      const double boundary = std::clamp(base + front(along), 0.15, 0.85);
      const bool glacier = (across < boundary) == glacier_first;
      scene.mask.at(x, y) = static_cast<std::uint8_t>(glacier ? MaskClass::glacier_and_rock
                                                              : MaskClass::ocean);
    }
  }

  const auto texture = correlated_noise(width, height, std::max<std::size_t>(2, width / 32), rng);
  // Multi-look speckle: gamma with unit mean; fewer looks (rougher) on water.
  std::gamma_distribution<double> glacier_speckle(4.0, 1.0 / 4.0);
  std::gamma_distribution<double> ocean_speckle(1.5, 1.0 / 1.5);
  for (std::size_t i = 0; i < width * height; ++i) {
    const bool glacier = scene.mask.classes[i] == 1;
    const double mean = glacier ? 0.6 + 0.25 * texture[i] : 0.18 + 0.04 * texture[i];
    const double speckle = glacier ? glacier_speckle(rng) : ocean_speckle(rng);
    scene.image.pixels[i] = std::max(0.0, mean * speckle);
  }
  // Clip the speckle tail at the 99.5th percentile, then rescale to [0, 1].
  std::vector<double> sorted = scene.image.pixels;
  const std::size_t q = sorted.size() * 995 / 1000;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q), sorted.end());
  const double hi = std::max(sorted[q], 1e-12);
  for (double& v : scene.image.pixels) v = std::min(v, hi) / hi;
  return scene;
}

Tensor mask_to_tensor(const SegmentationMask& mask) {
  mask.validate();
  Tensor t({1, 1, mask.height, mask.width});
  for (std::size_t i = 0; i < mask.classes.size(); ++i) t[i] = mask.classes[i] ? 1.0 : -1.0;
  return t;
}

Tensor image_to_tensor(const Raster& image) {
  Tensor t({1, 1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = 2.0 * image.pixels[i] - 1.0;
  return t;
}

Raster tensor_to_image(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1) {
    throw ShapeError("tensor_to_image expects 1x1xHxW, got " + shape_str(t.shape()));
  }
  Raster r(t.dim(3), t.dim(2));
  for (std::size_t i = 0; i < r.pixels.size(); ++i) {
    r.pixels[i] = std::clamp((t[i] + 1.0) * 0.5, 0.0, 1.0);
  }
  return r;
}

TrainingPair to_training_pair(const PairedPatch& patch) {
  return {mask_to_tensor(patch.mask), image_to_tensor(patch.image)};
}

}  // namespace sargan
