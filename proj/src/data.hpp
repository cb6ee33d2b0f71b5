// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "png_io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace uktr {

// Dataset group. Metadata only: it selects manifests and evaluation rows and
// never reaches any model input.
enum class Modality { kDocument = 0, kScene = 1, kHandwritten = 2 };
inline constexpr int kNumModalities = 3;
const char* modality_name(Modality m);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string label;
};

struct Manifest {
  std::string root;  // directory of the manifest file
  Modality modality = Modality::kDocument;
  std::vector<ManifestEntry> entries;

  std::string image_path(size_t i) const { return root + "/" + entries[i].path; }
};

// UTF-8 TSV, one `relative/path.png<TAB>label` per line. Malformed lines are
// reported with their line number; duplicate paths and empty labels are data
// errors. An empty manifest loads fine but warns on stderr.
Manifest load_manifest(const std::string& path, Modality modality);

// Aspect-preserving bilinear resize to target_height, pixel normalization to
// (v/255 - 0.5)/0.5 (white = +1), then white right-padding so the width is a
// positive multiple of pad_multiple. Returns [1, target_height, W].
Tensor preprocess(const GrayImage& img, int target_height, int pad_multiple);

// Label-invariant pixel perturbation: brightness shift, mild contrast
// change, pixel noise, and a small rotation. Pure in (img, rng state).
GrayImage augment(const GrayImage& img, Rng& rng);

GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w);

}  // namespace uktr
