#include "mulsa/sim/raster.hpp"

#include <algorithm>
#include <cmath>

namespace mulsa::sim {

void fill(Image& img, Rgb color) { fill_rect(img, 0, 0, img.width, img.height, color); }

void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb color) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      std::uint8_t* p = img.at(y, x);
      for (int c = 0; c < img.channels; ++c) p[c] = color[c];
    }
}

void fill_convex(Image& img, std::span<const Point> poly, Rgb color) {
  if (poly.size() < 3) return;
  double min_x = poly[0].x, max_x = poly[0].x, min_y = poly[0].y, max_y = poly[0].y;
  for (const Point& p : poly) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(max_x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(max_y)));
  const std::size_t n = poly.size();
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < n; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % n];
        const double cross = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
        if (cross > 0) pos = true;
        if (cross < 0) neg = true;
      }
      if (pos && neg) continue;
      std::uint8_t* p = img.at(y, x);
      for (int c = 0; c < img.channels; ++c) p[c] = color[c];
    }
  }
}

}  // namespace mulsa::sim
