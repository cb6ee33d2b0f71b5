// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "common.hpp"

namespace uktr {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::kDocument: return "document";
    case Modality::kScene: return "scene";
    case Modality::kHandwritten: return "handwritten";
  }
  return "?";
}

Manifest load_manifest(const std::string& path, Modality modality) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open manifest " + path);
  Manifest m;
  m.modality = modality;
  const size_t slash = path.find_last_of('/');
  m.root = slash == std::string::npos ? "." : path.substr(0, slash);

  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      fail_data(path + ":" + std::to_string(lineno) +
                ": expected <path>\\t<label>");
    ManifestEntry e;
    e.path = line.substr(0, tab);
    e.label = line.substr(tab + 1);
    if (e.path.empty())
      fail_data(path + ":" + std::to_string(lineno) + ": empty image path");
    if (e.label.empty())
      fail_data(path + ":" + std::to_string(lineno) + ": empty label");
    if (!seen.insert(e.path).second)
      fail_data(path + ":" + std::to_string(lineno) + ": duplicate image path " +
                e.path);
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty())
    std::cerr << "warning: manifest " << path << " is empty\n";
  return m;
}

GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) fail_usage("resize target must be positive");
  GrayImage out = make_gray(out_h, out_w, 0);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int r = 0; r < out_h; ++r) {
    // Center-aligned sampling, clamped at the borders.
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < out_w; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0) +
                                   wx * img.at(y0, x1)) +
                       wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
      out.set(r, c, static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))));
    }
  }
  return out;
}

Tensor preprocess(const GrayImage& img, int target_height, int pad_multiple) {
  if (img.height < 1 || img.width < 1) fail_data("empty image");
  if (target_height < 1 || pad_multiple < 1)
    fail_usage("bad preprocess arguments");
  const int scaled_w = std::max(
      1, static_cast<int>(std::lround(static_cast<double>(img.width) *
                                      target_height / img.height)));
  GrayImage resized = (img.height == target_height && scaled_w == img.width)
                          ? img
                          : resize_bilinear(img, target_height, scaled_w);
  const int padded_w =
      ((scaled_w + pad_multiple - 1) / pad_multiple) * pad_multiple;
  std::vector<double> v(static_cast<size_t>(target_height) * padded_w,
                        1.0);  // white padding
  for (int r = 0; r < target_height; ++r)
    for (int c = 0; c < scaled_w; ++c)
      v[static_cast<size_t>(r) * padded_w + c] =
          (resized.at(r, c) / 255.0 - 0.5) / 0.5;
  return Tensor({1, target_height, padded_w}, std::move(v));
}

GrayImage augment(const GrayImage& img, Rng& rng) {
  const double brightness = rng.uniform(-12.0, 12.0);
  const double contrast = rng.uniform(0.92, 1.08);
  const double noise_sd = rng.uniform(0.0, 4.0);
  const double angle = rng.uniform(-0.03, 0.03);  // radians, ~1.7 degrees

  const double cg = std::cos(angle), sg = std::sin(angle);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  GrayImage out = make_gray(img.height, img.width, 255);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      // Inverse-rotate around the center; out-of-range samples stay white.
      const double sy = cg * (r - cy) + sg * (c - cx) + cy;
      const double sx = -sg * (r - cy) + cg * (c - cx) + cx;
      double v = 255.0;
      if (sy >= 0 && sy <= img.height - 1 && sx >= 0 && sx <= img.width - 1) {
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const int x1 = std::min(x0 + 1, img.width - 1);
        const double wy = sy - y0, wx = sx - x0;
        v = (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
            wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
      }
      v = (v - 127.5) * contrast + 127.5 + brightness +
          rng.normal(0.0, noise_sd);
      out.set(r, c, static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))));
    }
  return out;
}

}  // namespace uktr
