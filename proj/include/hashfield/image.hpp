// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace hashfield {

// Row-major H x W x C float image with values in [0, 1].
struct Image {
  int height = 0, width = 0, channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.f)
      : height(h), width(w), channels(c), data(size_t(h) * w * c, fill) {}

  float& at(int r, int c, int ch) { return data[(size_t(r) * width + c) * channels + ch]; }
  float at(int r, int c, int ch) const { return data[(size_t(r) * width + c) * channels + ch]; }
  std::int64_t pixels() const { return std::int64_t(height) * width; }
};

// Rec. 601 luma for RGB, the channel itself for greyscale.
inline double luminance_at(const Image& img, int r, int c) {
  if (img.channels == 1) return img.at(r, c, 0);
  return 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
}

}  // namespace hashfield
