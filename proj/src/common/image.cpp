#include "mulsa/common/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "mulsa/common/bytes.hpp"
#include "mulsa/common/error.hpp"

namespace mulsa {
namespace {

struct AxisWeights {
  // For each destination index: contiguous source range and weights.
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

AxisWeights area_weights(int src, int dst) {
  AxisWeights out;
  out.first.resize(dst);
  out.weights.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    const double lo = d * scale;
    const double hi = (d + 1) * scale;
    const int s0 = static_cast<int>(std::floor(lo));
    const int s1 = std::min(src, static_cast<int>(std::ceil(hi)));
    out.first[d] = s0;
    for (int s = s0; s < s1; ++s) {
      const double cover = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      out.weights[d].push_back(cover / scale);
    }
  }
  return out;
}

}  // namespace

Image area_resize(const Image& src, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) {
    throw ShapeError("area_resize: output size must be positive");
  }
  const AxisWeights wy = area_weights(src.height, out_height);
  const AxisWeights wx = area_weights(src.width, out_width);
  const int c = src.channels;

  // Horizontal pass into a float buffer, then vertical pass.
  std::vector<double> tmp(static_cast<std::size_t>(src.height) * out_width * c, 0.0);
  for (int y = 0; y < src.height; ++y) {
    const std::uint8_t* row = src.at(y, 0);
    double* trow = tmp.data() + static_cast<std::size_t>(y) * out_width * c;
    for (int x = 0; x < out_width; ++x) {
      const auto& w = wx.weights[x];
      const int s0 = wx.first[x];
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * row[(s0 + i) * c + k];
        trow[x * c + k] = acc;
      }
    }
  }
  Image out(out_height, out_width, c);
  for (int y = 0; y < out_height; ++y) {
    const auto& w = wy.weights[y];
    const int s0 = wy.first[y];
    for (int x = 0; x < out_width; ++x) {
      for (int k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
          acc += w[i] * tmp[((s0 + i) * out_width + x) * c + k];
        }
        out.at(y, x)[k] = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

Image crop(const Image& src, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > src.height || left + width > src.width) {
    throw ShapeError("crop window exceeds image bounds");
  }
  Image out(height, width, src.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(width) * src.channels;
  for (int y = 0; y < height; ++y) {
    std::memcpy(out.at(y, 0), src.at(top + y, left), row_bytes);
  }
  return out;
}

namespace {

void png_error_fn(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + n > cursor->bytes.size()) png_error(png, "truncated PNG data");
  std::memcpy(out, cursor->bytes.data() + cursor->offset, n);
  cursor->offset += n;
}

void png_write_fn(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_fn(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.channels != 3 && image.channels != 1) {
    throw FormatError("PNG encoding supports 1 or 3 channels");
  }
  std::string message;
  std::vector<std::uint8_t> out;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG encode failed: " + message);
  }
  png_set_write_fn(png, &out, png_write_fn, png_flush_fn);
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 1);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.at(y, 0));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("not a PNG stream");
  }
  std::string message;
  ReadCursor cursor{bytes, 0};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  Image image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed: " + message);
  }
  png_set_read_fn(png, &cursor, png_read_fn);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG layout (expected 8-bit RGB or gray)");
  }
  image = Image(static_cast<int>(height), static_cast<int>(width),
                color == PNG_COLOR_TYPE_RGB ? 3 : 1);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = image.at(static_cast<int>(y), 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::string& path, const Image& image) {
  const auto bytes = encode_png(image);
  write_file_bytes(path, bytes);
}

Image read_png(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.what(), path);
  }
}

}  // namespace mulsa
