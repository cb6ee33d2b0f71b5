// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every subcommand is a thin wrapper over the C
// library interface; exit codes are the uktr_status values (0 ok, 1 usage,
// 2 data, 3 numeric).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uktr/uktr.h"

namespace {

int finish(uktr_status st) {
  if (st != UKTR_OK) std::cerr << "error: " << uktr_last_error() << "\n";
  return static_cast<int>(st);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// Prints and optionally saves a CSV produced by the library.
int deliver_csv(uktr_status st, char* csv, const std::string& out_path) {
  if (st != UKTR_OK || !csv) return finish(st);
  std::cout << csv;
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) {
      uktr_free_string(csv);
      std::cerr << "error: cannot write " << out_path << "\n";
      return static_cast<int>(UKTR_DATA);
    }
    f << csv;
  }
  uktr_free_string(csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Khmer/Latin multi-modality text-line recognizer"};
  app.require_subcommand(1);

  std::string config, phase = "general", base_ckpt, resume_ckpt, out_dir;
  std::string ckpt, decoder = "ctc", decoders = "ctc,ar", manifest, image;
  std::string out_csv;
  int beam = 1, width = 116;
  bool timing = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--config", config)->required();

  auto* vocab = app.add_subcommand(
      "build-vocab", "Build the cluster vocabulary from the training data");
  vocab->add_option("--config", config)->required();

  auto* tok = app.add_subcommand(
      "tokenize", "Encode stdin lines to cluster ids (one line per input)");
  tok->add_option("--vocab", manifest, "vocabulary file")->required();

  auto* train = app.add_subcommand("train", "Run one training phase");
  train->add_option("--config", config)->required();
  train->add_option("--phase", phase, "general or adapt");
  train->add_option("--from", base_ckpt, "warm-start parameters only");
  train->add_option("--resume", resume_ckpt, "continue a saved run");
  train->add_option("--out", out_dir)->required();

  auto* rec = app.add_subcommand("recognize", "Recognize PNG images");
  rec->add_option("--config", config)->required();
  rec->add_option("--ckpt", ckpt)->required();
  rec->add_option("--image", image, "one PNG file");
  rec->add_option("--manifest", manifest, "TSV of images to recognize");
  rec->add_option("--decoder", decoder, "ctc or ar");
  rec->add_option("--beam", beam, "beam width; 1 = greedy");
  rec->add_flag("--timing", timing, "append per-image wall time in ms");

  auto* bench = app.add_subcommand("benchmark",
                                   "CER over every eval split and decoder");
  bench->add_option("--config", config)->required();
  bench->add_option("--ckpt", ckpt)->required();
  bench->add_option("--decoders", decoders, "comma-separated list");
  bench->add_option("--beam", beam);
  bench->add_option("--out", out_csv, "also write the CSV here");

  auto* abl = app.add_subcommand("ablate",
                                 "Train and evaluate the configured variants");
  abl->add_option("--config", config)->required();
  abl->add_option("--out-dir", out_dir)->required();
  abl->add_option("--out", out_csv, "also write the CSV here");

  auto* router = app.add_subcommand("inspect-router",
                                    "Router weights per manifest image");
  router->add_option("--config", config)->required();
  router->add_option("--ckpt", ckpt)->required();
  router->add_option("--manifest", manifest)->required();
  router->add_option("--out", out_csv, "also write the CSV here");

  auto* info = app.add_subcommand("info", "Parameter and MAC report");
  info->add_option("--config", config)->required();
  info->add_option("--width", width, "input width for the MAC count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message or the help text
    return code == 0 ? 0 : static_cast<int>(UKTR_USAGE);
  }

  if (gen->parsed()) return finish(uktr_gen_data(config.c_str()));
  if (vocab->parsed()) return finish(uktr_build_vocab(config.c_str()));

  if (tok->parsed()) {
    uktr_vocab* v = nullptr;
    const uktr_status st = uktr_vocab_load(manifest.c_str(), &v);
    if (st != UKTR_OK) return finish(st);
    std::string line;
    while (std::getline(std::cin, line)) {
      int* ids = nullptr;
      size_t n = 0;
      const uktr_status est = uktr_vocab_encode(v, line.c_str(), &ids, &n);
      if (est != UKTR_OK) {
        uktr_vocab_free(v);
        return finish(est);
      }
      for (size_t i = 0; i < n; ++i)
        std::cout << (i ? " " : "") << ids[i];
      std::cout << "\n";
      uktr_free_ids(ids);
    }
    uktr_vocab_free(v);
    return 0;
  }

  if (train->parsed())
    return finish(uktr_train(config.c_str(), phase.c_str(), opt(base_ckpt),
                             opt(resume_ckpt), out_dir.c_str()));

  if (rec->parsed()) {
    if (image.empty() == manifest.empty()) {
      std::cerr << "error: pass exactly one of --image or --manifest\n";
      return static_cast<int>(UKTR_USAGE);
    }
    uktr_recognizer* r = nullptr;
    uktr_status st = uktr_recognizer_open(config.c_str(), ckpt.c_str(), &r);
    if (st != UKTR_OK) return finish(st);

    std::vector<std::string> paths;
    uktr_manifest* m = nullptr;
    if (!image.empty()) {
      paths.push_back(image);
    } else {
      st = uktr_manifest_load(manifest.c_str(), &m);
      if (st != UKTR_OK) {
        uktr_recognizer_free(r);
        return finish(st);
      }
      for (size_t i = 0; i < uktr_manifest_size(m); ++i)
        paths.push_back(uktr_manifest_image_path(m, i));
    }

    for (const std::string& path : paths) {
      char* text = nullptr;
      double millis = 0;
      st = uktr_recognize_png(r, path.c_str(), decoder.c_str(), beam, &text,
                              nullptr, &millis);
      if (st != UKTR_OK) break;
      std::cout << text;
      if (timing) std::printf("\t%.3f", millis);
      std::cout << "\n";
      uktr_free_string(text);
    }
    if (m) uktr_manifest_free(m);
    uktr_recognizer_free(r);
    return finish(st);
  }

  if (bench->parsed()) {
    char* csv = nullptr;
    const uktr_status st = uktr_benchmark(config.c_str(), ckpt.c_str(),
                                          decoders.c_str(), beam, &csv);
    return deliver_csv(st, csv, out_csv);
  }

  if (abl->parsed()) {
    char* csv = nullptr;
    const uktr_status st = uktr_ablate(config.c_str(), out_dir.c_str(), &csv);
    return deliver_csv(st, csv, out_csv);
  }

  if (router->parsed()) {
    char* csv = nullptr;
    const uktr_status st = uktr_inspect_router(config.c_str(), ckpt.c_str(),
                                               manifest.c_str(), &csv);
    return deliver_csv(st, csv, out_csv);
  }

  if (info->parsed()) {
    char* text = nullptr;
    const uktr_status st = uktr_model_info(config.c_str(), width, &text);
    if (st != UKTR_OK) return finish(st);
    std::cout << text;
    uktr_free_string(text);
    return 0;
  }

  return static_cast<int>(UKTR_USAGE);
}
