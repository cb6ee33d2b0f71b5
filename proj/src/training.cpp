// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "eval.hpp"
#include "ops.hpp"
#include "png_io.hpp"

namespace uktr {

namespace o = ops;

double total_loss(double l_ctc, double l_tr) {
  if (std::isnan(l_ctc) || std::isnan(l_tr))
    fail_numeric("loss is NaN (ctc=" + std::to_string(l_ctc) +
                 ", tr=" + std::to_string(l_tr) + ")");
  return l_ctc + l_tr;
}

double cyclic_lr(int64_t step, double lr_min, double lr_max, int64_t period) {
  if (step < 0 || period < 1) fail_usage("bad cyclic_lr arguments");
  const double half = period / 2.0;
  const double pos = static_cast<double>(step % period);
  const double tri = pos <= half ? pos / half : (period - pos) / half;
  // Two-sided interpolation so tri = 0 / 1 hit lr_min / lr_max exactly; the
  // clamp keeps rounding from ever escaping the configured band.
  const double lr = lr_min * (1.0 - tri) + lr_max * tri;
  return std::clamp(lr, std::min(lr_min, lr_max), std::max(lr_min, lr_max));
}

double clip_gradients(ParamStore& params, double max_norm) {
  if (max_norm <= 0) fail_usage("clip norm must be positive");
  double sq = 0;
  for (const auto& name : params.names()) {
    const Tensor t = params.get(name);
    for (double g : t.node()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& name : params.names()) {
      Tensor t = params.get(name);
      for (double& g : t.node()->grad) g *= s;
    }
  }
  return norm;
}

AdamState adam_init(const ParamStore& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& name : params.names()) {
    const size_t n = params.get(name).values().size();
    st.m.emplace_back(n, 0.0);
    st.v.emplace_back(n, 0.0);
  }
  return st;
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (state.m.size() != params.size())
    fail_usage("optimizer state does not match the parameter store");
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor t = params.get(params.names()[i]);
    std::vector<double>& value = t.values();
    const std::vector<double>& grad = t.node()->grad;
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (size_t j = 0; j < value.size(); ++j) {
      const double g = j < grad.size() ? grad[j] : 0.0;
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
      value[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kEps);
    }
  }
}

std::vector<SampleRef> document_epoch(size_t doc_size, Rng& rng) {
  if (doc_size == 0) fail_data("document training set is empty");
  std::vector<SampleRef> plan(doc_size);
  for (size_t i = 0; i < doc_size; ++i)
    plan[i] = {0, static_cast<int>(i)};
  rng.shuffle(plan);
  return plan;
}

std::vector<SampleRef> equal_mix_epoch(size_t doc_size, size_t scene_size,
                                       size_t hand_size, Rng& rng) {
  const size_t n_sh = scene_size + hand_size;
  if (n_sh == 0) fail_data("adaptation phase needs scene or handwritten data");
  if (doc_size == 0) fail_data("adaptation phase needs document data");
  std::vector<SampleRef> plan;
  plan.reserve(2 * n_sh);
  for (size_t i = 0; i < scene_size; ++i)
    plan.push_back({1, static_cast<int>(i)});
  for (size_t i = 0; i < hand_size; ++i)
    plan.push_back({2, static_cast<int>(i)});
  if (doc_size >= n_sh) {
    for (size_t i : rng.sample_indices(doc_size, n_sh))
      plan.push_back({0, static_cast<int>(i)});
  } else {
    for (size_t i = 0; i < n_sh; ++i)
      plan.push_back(
          {0, static_cast<int>(rng.uniform_int(
                  0, static_cast<int64_t>(doc_size) - 1))});
  }
  rng.shuffle(plan);
  return plan;
}

TrainDatasets load_datasets(const DataConfig& data) {
  TrainDatasets d;
  d.train[0] = load_manifest(data.root + "/" + data.train_document,
                             Modality::kDocument);
  d.train[1] =
      load_manifest(data.root + "/" + data.train_scene, Modality::kScene);
  d.train[2] = load_manifest(data.root + "/" + data.train_handwritten,
                             Modality::kHandwritten);
  d.eval[0] =
      load_manifest(data.root + "/" + data.eval_document, Modality::kDocument);
  d.eval[1] =
      load_manifest(data.root + "/" + data.eval_scene, Modality::kScene);
  d.eval[2] = load_manifest(data.root + "/" + data.eval_handwritten,
                            Modality::kHandwritten);
  return d;
}

std::string epoch_csv_header() {
  return "epoch,l_ctc,l_tr,l_total,lr,cer_document,cer_scene,cer_handwritten";
}

std::string epoch_csv_line(const EpochLog& log) {
  std::ostringstream os;
  os << std::setprecision(17) << log.epoch << ',' << log.l_ctc << ','
     << log.l_tr << ',' << log.l_total << ',' << log.lr << ','
     << log.cer_document << ',' << log.cer_scene << ',' << log.cer_handwritten;
  return os.str();
}

Trainer::Trainer(Model& model, const Vocabulary& vocab,
                 const TrainDatasets& data, int phase, uint64_t seed)
    : model_(model),
      vocab_(vocab),
      data_(data),
      train_cfg_(model.config().train),
      phase_cfg_(phase == 1 ? model.config().train.phase1
                            : model.config().train.phase2),
      phase_(phase),
      augment_(model.config().data.augment),
      target_height_(model.config().encoder.height),
      pad_multiple_(model.config().encoder.downsample_factor()),
      adam_(adam_init(model.params())),
      rng_plan_(derive_seed(seed, "plan")),
      rng_train_(derive_seed(seed, "train")) {
  if (phase != 1 && phase != 2) fail_usage("training phase must be 1 or 2");
  plan_ = make_plan();
}

std::vector<SampleRef> Trainer::make_plan() {
  if (phase_ == 1)
    return document_epoch(data_.train[0].entries.size(), rng_plan_);
  return equal_mix_epoch(data_.train[0].entries.size(),
                         data_.train[1].entries.size(),
                         data_.train[2].entries.size(), rng_plan_);
}

int Trainer::steps_per_epoch() const {
  const int batch = train_cfg_.batch_size;
  return static_cast<int>((plan_.size() + batch - 1) / batch);
}

int64_t Trainer::lr_period() const {
  return std::max<int64_t>(1, static_cast<int64_t>(train_cfg_.cycle_epochs) *
                                  steps_per_epoch());
}

double Trainer::next_lr() const {
  return cyclic_lr(step_, phase_cfg_.lr_min, phase_cfg_.lr_max, lr_period());
}

Tensor Trainer::sample_image(const SampleRef& ref) {
  const Manifest& m = data_.train[ref.dataset];
  GrayImage img = read_png_gray(m.image_path(static_cast<size_t>(ref.index)));
  if (augment_) img = augment(img, rng_train_);
  return preprocess(img, target_height_, pad_multiple_);
}

std::vector<int> Trainer::sample_target(const SampleRef& ref) const {
  return vocab_.encode(
      data_.train[ref.dataset].entries[static_cast<size_t>(ref.index)].label);
}

StepStats Trainer::step() {
  if (cursor_ >= plan_.size()) {
    plan_ = make_plan();
    cursor_ = 0;
  }
  const int batch = std::min<int>(train_cfg_.batch_size,
                                  static_cast<int>(plan_.size() - cursor_));
  StepStats stats;
  stats.batch = batch;
  stats.lr = next_lr();

  model_.params().zero_grads();
  Tensor ctc_sum = Tensor::scalar(0.0);
  Tensor tr_sum = Tensor::scalar(0.0);
  for (int b = 0; b < batch; ++b) {
    const SampleRef ref = plan_[cursor_ + static_cast<size_t>(b)];
    const Tensor image = sample_image(ref);
    const std::vector<int> target = sample_target(ref);
    const Features f = model_.encode(image, &rng_train_);
    try {
      ctc_sum = o::add(ctc_sum, model_.ctc_loss(f, target));
    } catch (const Error& e) {
      if (e.code() != ErrCode::kData) throw;
      ++stats.ctc_skipped;
      std::cerr << "warning: step " << step_ << ": " << e.what()
                << "; sample contributes zero CTC loss\n";
    }
    tr_sum = o::add(tr_sum, model_.ar_loss(f, target, &rng_train_,
                                           &rng_train_));
  }
  cursor_ += static_cast<size_t>(batch);

  const Tensor l_ctc = o::scale(ctc_sum, 1.0 / batch);
  const Tensor l_tr = o::scale(tr_sum, 1.0 / batch);
  const Tensor l_total = o::add(l_ctc, l_tr);
  stats.l_ctc = l_ctc.item();
  stats.l_tr = l_tr.item();
  stats.l_total = total_loss(stats.l_ctc, stats.l_tr);
  if (!std::isfinite(stats.l_total))
    fail_numeric("non-finite loss at step " + std::to_string(step_));

  backward(l_total);
  clip_gradients(model_.params(), train_cfg_.clip_norm);
  adam_step(model_.params(), adam_, stats.lr);
  ++step_;
  return stats;
}

EpochLog Trainer::run_epoch() {
  if (cursor_ >= plan_.size()) {
    plan_ = make_plan();
    cursor_ = 0;
  }
  EpochLog log;
  int64_t samples = 0;
  while (cursor_ < plan_.size()) {
    const StepStats s = step();
    log.l_ctc += s.l_ctc * s.batch;
    log.l_tr += s.l_tr * s.batch;
    log.lr = s.lr;
    samples += s.batch;
  }
  log.l_ctc /= static_cast<double>(samples);
  log.l_tr /= static_cast<double>(samples);
  log.l_total = log.l_ctc + log.l_tr;
  log.epoch = ++epoch_;

  double* cer[3] = {&log.cer_document, &log.cer_scene, &log.cer_handwritten};
  for (int m = 0; m < kNumModalities; ++m) {
    if (data_.eval[m].entries.empty()) continue;
    *cer[m] = evaluate_manifest(model_, vocab_, data_.eval[m], "ctc", 1,
                                modality_name(static_cast<Modality>(m)))
                  .cer();
  }
  return log;
}

std::vector<EpochLog> Trainer::run(int epochs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (epochs < 0) fail_usage("epoch count must be non-negative");
  fs::create_directories(out_dir);
  const std::string csv_path = out_dir + "/train_log.csv";
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) fail_data("cannot write " + csv_path);
  if (fresh) csv << epoch_csv_header() << '\n';

  std::vector<EpochLog> logs;
  for (int e = 0; e < epochs; ++e) {
    logs.push_back(run_epoch());
    csv << epoch_csv_line(logs.back()) << '\n';
    csv.flush();
    Checkpoint ck;
    save_state(ck);
    ck.save(out_dir + "/epoch_" + std::to_string(logs.back().epoch) + ".ckpt");
    ck.save(out_dir + "/latest.ckpt");
  }
  if (epochs == 0) {
    Checkpoint ck;
    save_state(ck);
    ck.save(out_dir + "/latest.ckpt");
  }
  return logs;
}

void Trainer::save_state(Checkpoint& ck) const {
  model_.save_params(ck);
  const ParamStore& ps = model_.params();
  for (size_t i = 0; i < ps.size(); ++i) {
    const Tensor t = ps.get(ps.names()[i]);
    ck.put_f64("train/adam/m/" + ps.names()[i], t.shape(), adam_.m[i]);
    ck.put_f64("train/adam/v/" + ps.names()[i], t.shape(), adam_.v[i]);
  }
  ck.put_f64("train/adam/step", {1},
             {static_cast<double>(adam_.step)});
  ck.put_f64("train/step", {1}, {static_cast<double>(step_)});
  ck.put_f64("train/epoch", {1}, {static_cast<double>(epoch_)});
  ck.put_f64("train/phase", {1}, {static_cast<double>(phase_)});
  ck.put_f64("train/cursor", {1}, {static_cast<double>(cursor_)});
  std::vector<double> ds(plan_.size()), ix(plan_.size());
  for (size_t i = 0; i < plan_.size(); ++i) {
    ds[i] = plan_[i].dataset;
    ix[i] = plan_[i].index;
  }
  const int n = static_cast<int>(plan_.size());
  ck.put_f64("train/plan/dataset", {n}, std::move(ds));
  ck.put_f64("train/plan/index", {n}, std::move(ix));
  ck.put_bytes("train/rng/plan", rng_plan_.serialize());
  ck.put_bytes("train/rng/train", rng_train_.serialize());
}

namespace {

double scalar_entry(const Checkpoint& ck, const std::string& name) {
  const CkptEntry& e = ck.require(name);
  if (e.kind != 0 || e.f64.size() != 1)
    fail_data("checkpoint entry " + name + " is not a scalar");
  return e.f64[0];
}

}  // namespace

void Trainer::load_state(const Checkpoint& ck) {
  model_.load_params(ck);
  if (static_cast<int>(scalar_entry(ck, "train/phase")) != phase_)
    fail_data("checkpoint was written by a different training phase");
  ParamStore& ps = model_.params();
  AdamState st = adam_init(ps);
  st.step = static_cast<int64_t>(scalar_entry(ck, "train/adam/step"));
  for (size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps.names()[i];
    const CkptEntry& m = ck.require("train/adam/m/" + name);
    const CkptEntry& v = ck.require("train/adam/v/" + name);
    if (m.f64.size() != st.m[i].size() || v.f64.size() != st.v[i].size())
      fail_data("optimizer state for " + name + " has the wrong size");
    st.m[i] = m.f64;
    st.v[i] = v.f64;
  }
  adam_ = std::move(st);

  step_ = static_cast<int64_t>(scalar_entry(ck, "train/step"));
  epoch_ = static_cast<int>(scalar_entry(ck, "train/epoch"));
  const size_t cursor = static_cast<size_t>(scalar_entry(ck, "train/cursor"));
  const CkptEntry& ds = ck.require("train/plan/dataset");
  const CkptEntry& ix = ck.require("train/plan/index");
  if (ds.f64.size() != ix.f64.size() || cursor > ds.f64.size())
    fail_data("checkpoint epoch plan is inconsistent");
  plan_.resize(ds.f64.size());
  for (size_t i = 0; i < plan_.size(); ++i) {
    plan_[i].dataset = static_cast<int>(ds.f64[i]);
    plan_[i].index = static_cast<int>(ix.f64[i]);
    if (plan_[i].dataset < 0 || plan_[i].dataset >= kNumModalities ||
        plan_[i].index < 0 ||
        plan_[i].index >=
            static_cast<int>(data_.train[plan_[i].dataset].entries.size()))
      fail_data("checkpoint epoch plan references missing samples");
  }
  cursor_ = cursor;
  rng_plan_.deserialize(ck.require("train/rng/plan").bytes);
  rng_train_.deserialize(ck.require("train/rng/train").bytes);
}

}  // namespace uktr
