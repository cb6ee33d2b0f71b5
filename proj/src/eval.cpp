// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "eval.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "common.hpp"
#include "png_io.hpp"
#include "training.hpp"
#include "utf8.hpp"

namespace uktr {

int edit_distance(const std::string& a, const std::string& b) {
  const std::vector<uint32_t> x = utf8_decode(a);
  const std::vector<uint32_t> y = utf8_decode(b);
  const size_t n = y.size();
  std::vector<int> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= x.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= n; ++j) {
      const int sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

double corpus_cer(const std::vector<std::string>& predictions,
                  const std::vector<std::string>& references) {
  if (predictions.size() != references.size())
    fail_data("prediction and reference lists differ in length");
  if (references.empty()) fail_data("CER over an empty corpus is undefined");
  int64_t dist = 0, chars = 0;
  for (size_t i = 0; i < references.size(); ++i) {
    if (references[i].empty())
      fail_data("reference " + std::to_string(i) + " is empty");
    dist += edit_distance(predictions[i], references[i]);
    chars += static_cast<int64_t>(utf8_decode(references[i]).size());
  }
  return static_cast<double>(dist) / static_cast<double>(chars);
}

CerRow evaluate_manifest(const Model& model, const Vocabulary& vocab,
                         const Manifest& manifest, const std::string& decoder,
                         int beam_width, const std::string& dataset_name) {
  if (manifest.entries.empty())
    fail_data("manifest " + dataset_name + " has no samples to evaluate");
  CerRow row;
  row.dataset = dataset_name;
  row.modality = modality_name(manifest.modality);
  row.decoder = beam_width > 1
                    ? decoder + ":beam" + std::to_string(beam_width)
                    : decoder;
  const int height = model.config().encoder.height;
  const int pad = model.config().encoder.downsample_factor();
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const Tensor image =
        preprocess(read_png_gray(manifest.image_path(i)), height, pad);
    const DecodeResult res = model.recognize(image, decoder, beam_width);
    const std::string pred = vocab.decode(res.ids);
    const std::string& ref = manifest.entries[i].label;
    row.total_dist += edit_distance(pred, ref);
    row.total_chars += static_cast<int64_t>(utf8_decode(ref).size());
    ++row.samples;
  }
  return row;
}

std::string benchmark_csv(const std::vector<CerRow>& rows) {
  std::ostringstream os;
  os << "dataset,modality,decoder,samples,total_chars,total_dist,cer\n";
  os << std::setprecision(17);
  for (const CerRow& r : rows)
    os << r.dataset << ',' << r.modality << ',' << r.decoder << ','
       << r.samples << ',' << r.total_chars << ',' << r.total_dist << ','
       << r.cer() << '\n';
  return os.str();
}

namespace {

// Applies one ablation variant token to a copy of the base config.
RunConfig variant_config(const RunConfig& base, const std::string& variant) {
  RunConfig cfg = base;
  if (variant == "mafs") {
    cfg.mafs.enabled = true;
  } else if (variant == "nomafs") {
    cfg.mafs.enabled = false;
  } else if (variant.size() > 1 && variant[0] == 'n') {
    cfg.mafs.enabled = true;
    cfg.mafs.n = std::stoi(variant.substr(1));
  } else {
    fail_usage("unknown ablation variant " + variant);
  }
  return cfg;
}

}  // namespace

std::vector<AblationResult> run_ablation(const RunConfig& cfg,
                                         const std::string& out_dir) {
  const Vocabulary vocab =
      Vocabulary::load(cfg.data.root + "/" + cfg.data.vocab);
  const TrainDatasets data = load_datasets(cfg.data);

  std::vector<AblationResult> results;
  for (const std::string& variant : cfg.ablate.variants) {
    const RunConfig vcfg = variant_config(cfg, variant);
    for (uint64_t seed : cfg.ablate.seeds) {
      ParamStore ps(derive_seed(seed, "params"));
      Model model(vcfg, vocab.size(), ps);
      Trainer trainer(model, vocab, data, 1, derive_seed(seed, "trainer"));
      const std::string run_dir =
          out_dir + "/" + variant + "_s" + std::to_string(seed);
      trainer.run(vcfg.train.phase1.epochs, run_dir);
      if (data.train[1].entries.size() + data.train[2].entries.size() > 0 &&
          vcfg.train.phase2.epochs > 0) {
        Trainer adapt(model, vocab, data, 2, derive_seed(seed, "trainer2"));
        adapt.run(vcfg.train.phase2.epochs, run_dir + "/adapt");
      }

      AblationResult res;
      res.variant = variant;
      res.seed = seed;
      double* cer[3] = {&res.cer_document, &res.cer_scene,
                        &res.cer_handwritten};
      for (int m = 0; m < kNumModalities; ++m) {
        if (data.eval[m].entries.empty()) continue;
        *cer[m] = evaluate_manifest(model, vocab, data.eval[m],
                                    cfg.ablate.decoder, 1,
                                    modality_name(static_cast<Modality>(m)))
                      .cer();
      }
      results.push_back(std::move(res));
    }
  }
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << "variant,seed,modality,cer\n";
  os << std::setprecision(17);
  for (const AblationResult& r : results) {
    const double cers[kNumModalities] = {r.cer_document, r.cer_scene,
                                         r.cer_handwritten};
    for (int m = 0; m < kNumModalities; ++m) {
      if (cers[m] < 0) continue;  // empty eval split
      os << r.variant << ',' << r.seed << ','
         << modality_name(static_cast<Modality>(m)) << ',' << cers[m] << '\n';
    }
  }
  return os.str();
}

int count_strictly_below(const std::vector<double>& a,
                         const std::vector<double>& b) {
  if (a.size() != b.size()) fail_usage("paired lists differ in length");
  int wins = 0;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] < b[i]) ++wins;
  return wins;
}

}  // namespace uktr
