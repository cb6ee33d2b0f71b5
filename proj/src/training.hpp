// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "model.hpp"
#include "param_store.hpp"
#include "rng.hpp"
#include "tokenizer.hpp"

namespace uktr {

// Exact unweighted sum of the two loss terms. NaN input is a numeric error.
double total_loss(double l_ctc, double l_tr);

// Triangular learning-rate wave with the given period (in optimizer steps):
// lr(0) = lr_min, lr(period/2) = lr_max, lr(period) = lr_min.
double cyclic_lr(int64_t step, double lr_min, double lr_max, int64_t period);

// Scales every parameter gradient so the global L2 norm over the whole store
// is at most max_norm (direction preserved). Returns the pre-clip norm.
double clip_gradients(ParamStore& params, double max_norm);

// Adam moments, one pair of buffers per parameter in store order.
struct AdamState {
  int64_t step = 0;  // completed updates
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState adam_init(const ParamStore& params);

// One Adam update (beta1 0.9, beta2 0.999, eps 1e-8) from the gradients
// currently held by the parameters. Parameters without an allocated gradient
// are treated as zero-gradient.
void adam_step(ParamStore& params, AdamState& state, double lr);

// A training sample: manifest group (0 document, 1 scene, 2 handwritten)
// and row within that manifest.
struct SampleRef {
  int dataset = 0;
  int index = 0;
};

// Phase-1 epoch: every document sample once, shuffled.
std::vector<SampleRef> document_epoch(size_t doc_size, Rng& rng);

// Phase-2 epoch: every scene and handwritten sample once, plus an equal
// number of document samples (drawn without replacement when the document
// set is large enough, uniformly with replacement otherwise), all shuffled.
std::vector<SampleRef> equal_mix_epoch(size_t doc_size, size_t scene_size,
                                       size_t hand_size, Rng& rng);

// The six manifests of a run, indexed by modality.
struct TrainDatasets {
  Manifest train[kNumModalities];
  Manifest eval[kNumModalities];
};

// Loads all six manifests named by the data config. Missing files fail;
// empty manifests are allowed (phase 1 ignores scene/handwritten anyway).
TrainDatasets load_datasets(const DataConfig& data);

struct StepStats {
  double l_ctc = 0;
  double l_tr = 0;
  double l_total = 0;
  double lr = 0;
  int batch = 0;
  int ctc_skipped = 0;  // samples whose target cannot fit the CTC frames
};

struct EpochLog {
  int epoch = 0;  // 1-based, cumulative across resumes
  double l_ctc = 0;
  double l_tr = 0;
  double l_total = 0;
  double lr = 0;                 // learning rate at the last step
  double cer_document = -1.0;    // -1 when that eval split is empty
  double cer_scene = -1.0;
  double cer_handwritten = -1.0;
};

// Header plus one line per log entry, parseable back by tests.
std::string epoch_csv_header();
std::string epoch_csv_line(const EpochLog& log);

// Drives one training phase of the two-phase recipe: forward both heads,
// backprop their sum, clip to the configured global norm, Adam-update under
// the cyclic schedule. All randomness (plan shuffling, dropout, masking,
// augmentation) is owned here and serializes with the state, so a reloaded
// trainer continues the loss trajectory bit-for-bit.
class Trainer {
 public:
  // phase 1 = general (documents only), phase 2 = modality adaptation.
  Trainer(Model& model, const Vocabulary& vocab, const TrainDatasets& data,
          int phase, uint64_t seed);

  // One optimizer step over the next batch of the epoch plan. The final
  // batch of an epoch may be short. NaN loss is a numeric error.
  StepStats step();

  // Steps until the current epoch plan is exhausted, then evaluates CER on
  // every non-empty eval split (greedy CTC) and starts the next plan.
  EpochLog run_epoch();

  // Runs `epochs` epochs; writes out_dir/train_log.csv (appending, header
  // once), a full-state checkpoint per epoch (epoch_<N>.ckpt) and
  // out_dir/latest.ckpt. With epochs = 0 writes only latest.ckpt, leaving
  // every parameter untouched.
  std::vector<EpochLog> run(int epochs, const std::string& out_dir);

  // Full state: parameters, Adam moments, step/epoch counters, RNG streams,
  // and the unfinished portion of the current epoch plan.
  void save_state(Checkpoint& ck) const;
  void load_state(const Checkpoint& ck);

  int64_t step_count() const { return step_; }
  int epoch_count() const { return epoch_; }
  int steps_per_epoch() const;
  int64_t lr_period() const;
  double next_lr() const;
  const PhaseConfig& phase_config() const { return phase_cfg_; }
  int phase() const { return phase_; }

 private:
  std::vector<SampleRef> make_plan();
  Tensor sample_image(const SampleRef& ref);
  std::vector<int> sample_target(const SampleRef& ref) const;

  Model& model_;
  const Vocabulary& vocab_;
  const TrainDatasets& data_;
  TrainConfig train_cfg_;
  PhaseConfig phase_cfg_;
  int phase_;
  bool augment_ = false;
  int target_height_;
  int pad_multiple_;

  AdamState adam_;
  Rng rng_plan_;
  Rng rng_train_;
  std::vector<SampleRef> plan_;
  size_t cursor_ = 0;
  int64_t step_ = 0;
  int epoch_ = 0;
};

}  // namespace uktr
