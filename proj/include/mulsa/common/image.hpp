#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mulsa {

// Interleaved 8-bit image, row-major HWC.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c = 3, std::uint8_t fill = 0)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t* at(int y, int x) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  const std::uint8_t* at(int y, int x) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  bool empty() const { return pixels.empty(); }

  bool operator==(const Image&) const = default;
};

// Box-filter (area-averaging) resize; every source pixel contributes with its
// fractional coverage of the destination cell.
Image area_resize(const Image& src, int out_height, int out_width);

Image crop(const Image& src, int top, int left, int height, int width);

// Lossless 8-bit PNG (RGB or gray). Output bytes are deterministic for equal
// input.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

}  // namespace mulsa
