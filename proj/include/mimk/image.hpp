// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mimk/errors.hpp"

namespace mimk {

/// Single-channel real image, row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
  Image(std::size_t h, std::size_t w, std::vector<double> values)
      : height(h), width(w), pixels(std::move(values)) {
    if (pixels.size() != h * w) throw ShapeError("image pixel count does not match dimensions");
  }

  double& operator()(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double operator()(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace mimk
