// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hashfield/image.hpp"
#include "hashfield/rng.hpp"

namespace hashfield {

namespace detail {

inline double lattice_value(int ix, int iy, std::uint64_t seed) {
  Rng r(seed ^ (std::uint64_t(std::uint32_t(ix)) * 0x9e3779b97f4a7c15ull) ^
        (std::uint64_t(std::uint32_t(iy)) * 0xc2b2ae3d27d4eb4full));
  return r.uniform();
}

// Bilinear value noise in [0, 1], lattice of `cells` per axis.
inline double value_noise(double x, double y, int cells, std::uint64_t seed) {
  const double px = x * cells, py = y * cells;
  const int ix = int(std::floor(px)), iy = int(std::floor(py));
  const double fx = px - ix, fy = py - iy;
  const double v00 = lattice_value(ix, iy, seed), v10 = lattice_value(ix + 1, iy, seed);
  const double v01 = lattice_value(ix, iy + 1, seed), v11 = lattice_value(ix + 1, iy + 1, seed);
  return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

}  // namespace detail

// Deterministic test images, addressable from configs as "proc:<name>:<size>".
//   constant - mid-grey, 1 channel
//   checker  - 8px black/white cells, 1 channel
//   edge     - vertical step from 0 to 1 at the mid column, 1 channel
//   natural  - RGB composite of smooth gradients, flat shapes with sharp
//              silhouettes, patches of band-limited texture and thin strokes;
//              high-frequency detail is spatially localized on purpose
inline Image make_synthetic_image(const std::string& name, int size, std::uint64_t seed = 7) {
  if (size < 1) throw std::invalid_argument("make_synthetic_image: bad size");
  if (name == "constant") return Image(size, size, 1, 0.5f);
  if (name == "checker") {
    Image img(size, size, 1);
    const int cell = std::max(1, size / 8);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        img.at(r, c, 0) = float(((r / cell + c / cell) % 2 == 0) ? 1.0 : 0.0);
    return img;
  }
  if (name == "edge") {
    Image img(size, size, 1);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) img.at(r, c, 0) = c < size / 2 ? 0.f : 1.f;
    return img;
  }
  if (name != "natural") throw std::invalid_argument("unknown synthetic image: " + name);

  Image img(size, size, 3);
  Rng rng(seed);

  // smooth background
  double fr[3], phase[3], ang[3];
  for (int ch = 0; ch < 3; ++ch) {
    fr[ch] = rng.uniform(0.6, 1.6);
    phase[ch] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ang[ch] = rng.uniform(0.0, std::numbers::pi);
  }
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double x = (c + 0.5) / size, y = (r + 0.5) / size;
      for (int ch = 0; ch < 3; ++ch) {
        const double u = x * std::cos(ang[ch]) + y * std::sin(ang[ch]);
        img.at(r, c, ch) =
            float(0.5 + 0.22 * std::sin(2.0 * std::numbers::pi * fr[ch] * u + phase[ch]));
      }
    }

  // flat shapes with crisp silhouettes over the gradients; one small noise
  // patch and one grating patch
  struct Shape {
    double cx, cy, radius;
    double color[3];
    int kind;  // 0 flat, 1 grating, 2 noise
    double freq, angle;
  };
  Shape shapes[7];
  for (int s = 0; s < 7; ++s) {
    shapes[s].cx = rng.uniform(0.12, 0.88);
    shapes[s].cy = rng.uniform(0.12, 0.88);
    shapes[s].kind = s == 0 ? 1 : s == 1 ? 2 : 0;
    shapes[s].radius = shapes[s].kind == 0 ? rng.uniform(0.09, 0.2) : rng.uniform(0.06, 0.09);
    for (double& v : shapes[s].color) v = rng.uniform(0.2, 0.8);
    shapes[s].freq = rng.uniform(10.0, 18.0);
    shapes[s].angle = rng.uniform(0.0, std::numbers::pi);
  }
  const std::uint64_t noise_seed = rng.next_u64();
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double x = (c + 0.5) / size, y = (r + 0.5) / size;
      for (const Shape& s : shapes) {
        const double dx = x - s.cx, dy = y - s.cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 > s.radius * s.radius) continue;
        double tex = 0.0;
        if (s.kind == 1) {
          const double u = x * std::cos(s.angle) + y * std::sin(s.angle);
          tex = std::sin(2.0 * std::numbers::pi * s.freq * u) > 0.0 ? 0.2 : -0.2;
        } else if (s.kind == 2) {
          tex = 0.3 * (detail::value_noise(x, y, 20, noise_seed) - 0.5);
        }
        for (int ch = 0; ch < 3; ++ch)
          img.at(r, c, ch) = float(std::clamp(s.color[ch] + tex, 0.0, 1.0));
      }
    }

  // crack network: meandering dark curves a few pixels wide, like craquelure
  auto stamp = [&](double x, double y, double radius, double shade) {
    const int r0 = std::max(0, int((y - radius) * size)), r1 = std::min(size - 1, int((y + radius) * size));
    const int c0 = std::max(0, int((x - radius) * size)), c1 = std::min(size - 1, int((x + radius) * size));
    for (int rr = r0; rr <= r1; ++rr)
      for (int cc = c0; cc <= c1; ++cc) {
        const double dx = (cc + 0.5) / size - x, dy = (rr + 0.5) / size - y;
        if (dx * dx + dy * dy > radius * radius) continue;
        for (int ch = 0; ch < 3; ++ch) img.at(rr, cc, ch) = float(shade);
      }
  };
  for (int crack = 0; crack < 20; ++crack) {
    double x = rng.uniform(0.04, 0.96), y = rng.uniform(0.04, 0.96);
    double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(0.08, 0.4);
    const double shade = rng.uniform(0.0, 0.18);
    const double width = rng.uniform(1.5, 3.0) / size;
    const int n = int(len * size * 2);
    for (int i = 0; i <= n; ++i) {
      a += rng.uniform(-0.3, 0.3);  // random walk of the heading
      x += 0.5 * std::cos(a) / size;
      y += 0.5 * std::sin(a) / size;
      if (x < 0 || x > 1 || y < 0 || y > 1) break;
      stamp(x, y, width, shade);
    }
  }

  // short bright scratches, same chunky width
  for (int line = 0; line < 12; ++line) {
    const double x0 = rng.uniform(0.05, 0.95), y0 = rng.uniform(0.05, 0.95);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(0.02, 0.1);
    const double shade = rng.uniform(0.85, 1.0);
    const double width = rng.uniform(1.5, 2.5) / size;
    const int n = int(len * size * 2);
    for (int i = 0; i <= n; ++i) {
      const double t = len * i / std::max(1, n);
      stamp(x0 + t * std::cos(a), y0 + t * std::sin(a), width, shade);
    }
  }
  return img;
}

}  // namespace hashfield
