// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uktr {

// Visual encoder: ResNet-style backbone followed by a Transformer encoder.
struct EncoderConfig {
  int height = 32;  // input image height after preprocessing
  std::vector<int> channels = {32, 32, 32, 64, 256, 512};
  std::vector<int> repeats = {1, 3, 4, 6, 6, 3};
  // per-block flag: 1 = this block downsamples by (2,2) in its first unit
  std::vector<int> downsample = {0, 1, 0, 0, 1, 0};
  int norm_groups = 8;
  int d = 512;  // embedding dim; must equal channels.back()
  int layers = 3;
  int heads = 8;
  int ffn = 2048;
  double dropout = 0.1;

  int downsample_factor() const;  // product over blocks of 2^flag
};

struct MafsConfig {
  bool enabled = true;
  int n = 5;    // modality sources
  int p = 128;  // adapter bottleneck dim
};

struct DecoderConfig {
  int layers = 3;
  int heads = 8;
  int ffn = 2048;
  double dropout = 0.1;
  double mask_ratio = 0.30;  // context-token masking during training
  int max_len = 256;         // generation cap
};

struct PhaseConfig {
  int epochs;
  double lr_min;
  double lr_max;
};

struct TrainConfig {
  int batch_size = 32;
  double clip_norm = 50.0;
  int cycle_epochs = 2;  // cyclic LR period, in epochs of steps
  PhaseConfig phase1{5, 1e-5, 1e-4};
  PhaseConfig phase2{50, 1e-6, 1e-5};
};

// Manifest paths are relative to `root`.
struct DataConfig {
  std::string root = "data";
  std::string vocab = "vocab.txt";
  std::string train_document = "train_document.tsv";
  std::string train_scene = "train_scene.tsv";
  std::string train_handwritten = "train_handwritten.tsv";
  std::string eval_document = "eval_document.tsv";
  std::string eval_scene = "eval_scene.tsv";
  std::string eval_handwritten = "eval_handwritten.tsv";
  bool augment = false;  // mild pixel jitter on training samples
};

struct SynthConfig {
  int samples_train = 600;
  int samples_eval = 120;
  double prop_document = 0.8;
  double prop_scene = 0.1;
  double prop_handwritten = 0.1;
  int words_min = 1;
  int words_max = 4;  // line length in lexicon words
  // Size of the seeded word bank lines draw from; 0 composes every word from
  // fresh random symbols instead. A bank gives labels reusable word forms, so
  // decoders that condition on context have structure to learn.
  int lexicon = 0;
};

struct AblateConfig {
  // variant tokens: "mafs", "nomafs", or "nK" for a K-adapter sweep entry
  std::vector<std::string> variants = {"mafs", "nomafs"};
  std::vector<uint64_t> seeds = {101, 202, 303};
  std::string decoder = "ar";  // head used for ablation CER
};

// Whole-run configuration parsed from a flat key=value file with section
// prefixes (e.g. "encoder.d = 512"). '#' starts a comment. Unknown keys and
// malformed values are usage errors; every command validates the full file
// before doing any work.
struct RunConfig {
  uint64_t seed = 42;
  EncoderConfig encoder;
  MafsConfig mafs;
  DecoderConfig decoder;
  TrainConfig train;
  DataConfig data;
  SynthConfig synth;
  AblateConfig ablate;

  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text, const std::string& origin);

  // Effective configuration (defaults applied) in parseable form, suitable
  // for echoing into the output directory.
  std::string echo_string() const;
};

}  // namespace uktr
