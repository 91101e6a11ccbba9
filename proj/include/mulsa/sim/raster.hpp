#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "mulsa/common/image.hpp"

namespace mulsa::sim {

using Rgb = std::array<std::uint8_t, 3>;

void fill(Image& img, Rgb color);

// Half-open pixel rectangle [x0, x1) x [y0, y1), clipped to the image.
void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb color);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Fills every pixel whose center lies inside the convex polygon.
void fill_convex(Image& img, std::span<const Point> polygon, Rgb color);

}  // namespace mulsa::sim
