// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "hashfield/io.hpp"

namespace hashfield {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ConfigError("cannot open image file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_png(png, info,
               PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND |
                   PNG_TRANSFORM_STRIP_ALPHA,
               nullptr);

  const int h = int(png_get_image_height(png, info));
  const int w = int(png_get_image_width(png, info));
  const int c = int(png_get_channels(png, info));
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported PNG channel count in " + path);
  }
  png_bytep* rows = png_get_rows(png, info);
  Image img(h, w, c);
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col)
      for (int ch = 0; ch < c; ++ch) img.at(r, col, ch) = float(rows[r][col * c + ch]) / 255.f;
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: only greyscale and RGB supported");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_byte> row(size_t(img.width) * img.channels);
  std::vector<png_bytep> rows(img.height);
  std::vector<std::vector<png_byte>> storage(img.height, row);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) {
        const float v = std::clamp(img.at(r, c, ch), 0.f, 1.f);
        storage[r][size_t(c) * img.channels + ch] = png_byte(std::lround(v * 255.f));
      }
    rows[r] = storage[r].data();
  }
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_image_source(const std::string& spec) {
  if (spec.rfind("proc:", 0) == 0) {
    const auto second = spec.find(':', 5);
    const std::string name = spec.substr(5, second == std::string::npos ? std::string::npos
                                                                        : second - 5);
    int size = 256;
    if (second != std::string::npos) {
      try {
        size = std::stoi(spec.substr(second + 1));
      } catch (const std::exception&) {
        throw ConfigError("bad size in image spec: " + spec);
      }
    }
    try {
      return make_synthetic_image(name, size);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return read_png(spec);
}

FlatScene load_scene_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene file: " + path);
  return parse_scene(in);
}

}  // namespace hashfield
