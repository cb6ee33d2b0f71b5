// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uktr {

// 8-bit grayscale raster, row-major, top row first.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;  // height * width

  uint8_t at(int r, int c) const {
    return pixels[static_cast<size_t>(r) * width + c];
  }
  void set(int r, int c, uint8_t v) {
    pixels[static_cast<size_t>(r) * width + c] = v;
  }
};

GrayImage make_gray(int height, int width, uint8_t fill);

// Reads any PNG (color, palette, alpha, 16-bit) as 8-bit grayscale.
// Fails with a data error on missing files or undecodable bytes.
GrayImage read_png_gray(const std::string& path);

void write_png_gray(const std::string& path, const GrayImage& img);

}  // namespace uktr
