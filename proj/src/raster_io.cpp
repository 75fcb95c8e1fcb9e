#include "sargan/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "sargan/errors.hpp"

namespace sargan {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

bool is_png_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return true;
  if (ext == ".sras") return false;
  throw UsageError("unsupported raster extension '" + ext + "' for " + path.string() +
                   " (expected .png or .sras)");
}

// libpng state shared with the C callbacks. Only trivially destructible
// members, since errors unwind through longjmp.
struct PngBuffer {
  const unsigned char* data;
  std::size_t size;
  std::size_t offset;
  char message[256];
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  if (buf->offset + n > buf->size) {
    std::snprintf(buf->message, sizeof buf->message,
                  "unexpected end of file: needed %zu bytes at offset %zu, file has %zu",
                  static_cast<std::size_t>(n), buf->offset, buf->size);
    png_error(png, buf->message);
  }
  std::memcpy(out, buf->data + buf->offset, n);
  buf->offset += n;
}

void png_error_cb(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<PngBuffer*>(png_get_error_ptr(png));
  if (buf && msg != buf->message) std::snprintf(buf->message, sizeof buf->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

// Returns false on failure with the reason in buf->message.
bool decode_png(PngBuffer* buf, std::uint32_t* width, std::uint32_t* height, int* depth,
                std::vector<std::uint16_t>* samples) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, buf, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  // Raw pointer: longjmp must not skip a destructor.
  png_bytep row = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    png_free(png, row);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, buf, png_read_cb);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int bits = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (bits == 16) png_set_swap(png);
  png_read_update_info(png, info);

  *width = png_get_image_width(png, info);
  *height = png_get_image_height(png, info);
  *depth = bits == 16 ? 16 : 8;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  row = static_cast<png_bytep>(png_malloc(png, rowbytes));
  samples->resize(static_cast<std::size_t>(*width) * *height);
  std::uint16_t* dst = samples->data();
  for (std::uint32_t y = 0; y < *height; ++y) {
    png_read_row(png, row, nullptr);
    for (std::uint32_t x = 0; x < *width; ++x) {
      std::uint16_t v;
      if (*depth == 16) {
        std::memcpy(&v, row + 2 * x, 2);
      } else {
        v = row[x];
      }
      dst[static_cast<std::size_t>(y) * *width + x] = v;
    }
  }
  png_read_end(png, nullptr);
  png_free(png, row);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

struct PngSink {
  std::vector<unsigned char>* bytes;
  char message[256];
};

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* sink = static_cast<PngSink*>(png_get_io_ptr(png));
  sink->bytes->insert(sink->bytes->end(), data, data + n);
}

void png_flush_cb(png_structp) {}

void png_write_error_cb(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngSink*>(png_get_error_ptr(png));
  if (sink) std::snprintf(sink->message, sizeof sink->message, "%s", msg);
  png_longjmp(png, 1);
}

bool encode_png(PngSink* sink, const std::uint16_t* samples, std::uint32_t width,
                std::uint32_t height, int depth, unsigned char* row) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, sink, png_write_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, sink, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, width, height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint16_t* src = samples + static_cast<std::size_t>(y) * width;
    for (std::uint32_t x = 0; x < width; ++x) {
      if (depth == 16) {
        std::memcpy(row + 2 * x, &src[x], 2);
      } else {
        row[x] = static_cast<unsigned char>(src[x]);
      }
    }
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

RawRaster decode_sras(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  const std::string where = path.string();
  if (bytes.size() < kSrasHeaderBytes) {
    throw DataError(where + ": truncated header: expected " + std::to_string(kSrasHeaderBytes) +
                    " bytes, file has " + std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), "SRAS", 4) != 0) {
    throw DataError(where + ": bad magic at byte offset 0 (expected \"SRAS\")");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != 1) {
    throw DataError(where + ": unsupported version " + std::to_string(version) +
                    " at byte offset 4");
  }
  RawRaster raw;
  raw.width = get_u32(bytes, 8);
  raw.height = get_u32(bytes, 12);
  raw.bit_depth = static_cast<int>(get_u32(bytes, 16));
  if (raw.bit_depth != 16) {
    throw DataError(where + ": unsupported bit depth " + std::to_string(raw.bit_depth) +
                    " at byte offset 16");
  }
  if (raw.width == 0 || raw.height == 0) {
    throw DataError(where + ": zero extent in header at byte offset 8");
  }
  const std::size_t expected = kSrasHeaderBytes + 2 * raw.width * raw.height;
  if (bytes.size() != expected) {
    throw DataError(where + ": expected " + std::to_string(expected) + " bytes for " +
                    std::to_string(raw.width) + "x" + std::to_string(raw.height) +
                    " samples, file has " + std::to_string(bytes.size()) +
                    (bytes.size() < expected ? " (truncated at byte offset " : " (trailing data at byte offset ") +
                    std::to_string(std::min(bytes.size(), expected)) + ")");
  }
  raw.samples.resize(raw.width * raw.height);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    const std::size_t at = kSrasHeaderBytes + 2 * i;
    raw.samples[i] = static_cast<std::uint16_t>(bytes[at] | bytes[at + 1] << 8);
  }
  return raw;
}

std::uint16_t quantise(double v, int bits, const std::filesystem::path& path) {
  if (!std::isfinite(v)) throw DataError("non-finite intensity while writing " + path.string());
  const double full = bits == 16 ? 65535.0 : 255.0;
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * full));
}

}  // namespace

RawRaster read_raw_raster(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (!is_png_path(path)) return decode_sras(bytes, path);

  PngBuffer buf{bytes.data(), bytes.size(), 0, {}};
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DataError(path.string() + ": not a PNG file (bad signature at byte offset 0)");
  }
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int depth = 0;
  RawRaster raw;
  if (!decode_png(&buf, &width, &height, &depth, &raw.samples)) {
    throw DataError(path.string() + ": malformed PNG near byte offset " +
                    std::to_string(buf.offset) + ": " + buf.message);
  }
  raw.width = width;
  raw.height = height;
  raw.bit_depth = depth;
  return raw;
}

void write_raw_raster(const RawRaster& raw, const std::filesystem::path& path) {
  if (raw.samples.size() != raw.width * raw.height) {
    throw std::invalid_argument("raster holds " + std::to_string(raw.samples.size()) +
                                " samples for " + std::to_string(raw.width) + "x" +
                                std::to_string(raw.height));
  }
  std::vector<unsigned char> bytes;
  if (is_png_path(path)) {
    if (raw.bit_depth != 8 && raw.bit_depth != 16) {
      throw std::invalid_argument("PNG bit depth must be 8 or 16");
    }
    std::vector<unsigned char> row(raw.width * 2);
    PngSink sink{&bytes, {}};
    if (!encode_png(&sink, raw.samples.data(), static_cast<std::uint32_t>(raw.width),
                    static_cast<std::uint32_t>(raw.height), raw.bit_depth, row.data())) {
      throw std::runtime_error("PNG encoding failed for " + path.string() + ": " + sink.message);
    }
  } else {
    if (raw.bit_depth != 16) throw std::invalid_argument(".sras rasters are 16 bit");
    bytes.insert(bytes.end(), {'S', 'R', 'A', 'S'});
    put_u32(bytes, 1);
    put_u32(bytes, static_cast<std::uint32_t>(raw.width));
    put_u32(bytes, static_cast<std::uint32_t>(raw.height));
    put_u32(bytes, 16);
    for (std::uint16_t v : raw.samples) {
      bytes.push_back(static_cast<unsigned char>(v & 0xff));
      bytes.push_back(static_cast<unsigned char>(v >> 8));
    }
  }
  write_file(path, bytes);
}

Raster load_raster(const std::filesystem::path& path) {
  const RawRaster raw = read_raw_raster(path);
  const double full = raw.bit_depth == 16 ? 65535.0 : 255.0;
  Raster r(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) r.pixels[i] = raw.samples[i] / full;
  return r;
}

void save_raster(const Raster& raster, const std::filesystem::path& path,
                 RasterEncoding encoding) {
  if (raster.pixels.size() != raster.width * raster.height) {
    throw std::invalid_argument("raster pixel count does not match its extent");
  }
  RawRaster raw;
  raw.width = raster.width;
  raw.height = raster.height;
  raw.bit_depth = encoding == RasterEncoding::png8 && is_png_path(path) ? 8 : 16;
  raw.samples.resize(raster.pixels.size());
  for (std::size_t i = 0; i < raster.pixels.size(); ++i) {
    raw.samples[i] = quantise(raster.pixels[i], raw.bit_depth, path);
  }
  write_raw_raster(raw, path);
}

SegmentationMask load_mask(const std::filesystem::path& path) {
  const RawRaster raw = read_raw_raster(path);
  const std::uint16_t full = raw.bit_depth == 16 ? 65535 : 255;
  SegmentationMask mask(raw.width, raw.height);
  std::set<std::uint16_t> bad;
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    const std::uint16_t v = raw.samples[i];
    if (v == 0) {
      mask.classes[i] = 0;
    } else if (v == full) {
      mask.classes[i] = 1;
    } else {
      bad.insert(v);
    }
  }
  if (!bad.empty()) {
    std::string list;
    std::size_t shown = 0;
    for (std::uint16_t v : bad) {
      if (shown++ == 16) {
        list += ", ...";
        break;
      }
      list += (list.empty() ? "" : ", ") + std::to_string(v);
    }
    throw DataError(path.string() + ": mask is not binary; expected only 0 and " +
                    std::to_string(full) + ", found " + list);
  }
  return mask;
}

void save_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
  mask.validate();
  RawRaster raw;
  raw.width = mask.width;
  raw.height = mask.height;
  raw.bit_depth = is_png_path(path) ? 8 : 16;
  const std::uint16_t full = raw.bit_depth == 16 ? 65535 : 255;
  raw.samples.resize(mask.classes.size());
  for (std::size_t i = 0; i < mask.classes.size(); ++i) {
    raw.samples[i] = mask.classes[i] ? full : 0;
  }
  write_raw_raster(raw, path);
}

}  // namespace sargan
