// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "common.hpp"

namespace uktr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage make_gray(int height, int width, uint8_t fill) {
  GrayImage img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<size_t>(height) * width, fill);
  return img;
}

GrayImage read_png_gray(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail_data("cannot open image " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
    fail_data(path + " is not a PNG file");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_data("libpng initialization failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_data("undecodable PNG data in " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Fold every representation down to 8-bit gray.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const int color = png_get_color_type(png, info);
  if (color & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
  png_read_update_info(png, info);

  GrayImage img = make_gray(static_cast<int>(png_get_image_height(png, info)),
                            static_cast<int>(png_get_image_width(png, info)),
                            0);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int r = 0; r < img.height; ++r)
    rows[static_cast<size_t>(r)] =
        img.pixels.data() + static_cast<size_t>(r) * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_gray(const std::string& path, const GrayImage& img) {
  if (img.height < 1 || img.width < 1 ||
      img.pixels.size() != static_cast<size_t>(img.height) * img.width)
    fail_usage("invalid image dimensions for " + path);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail_data("cannot write image " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail_data("libpng initialization failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_data("PNG encode failed for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int r = 0; r < img.height; ++r)
    rows[static_cast<size_t>(r)] = const_cast<png_bytep>(
        img.pixels.data() + static_cast<size_t>(r) * img.width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace uktr
