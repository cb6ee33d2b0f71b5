// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "uktr/uktr.h"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "common.hpp"
#include "config.hpp"
#include "data.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "param_store.hpp"
#include "png_io.hpp"
#include "synth.hpp"
#include "tokenizer.hpp"
#include "training.hpp"

using namespace uktr;

namespace {

thread_local std::string g_last_error;

uktr_status status_of(ErrCode code) {
  switch (code) {
    case ErrCode::kUsage: return UKTR_USAGE;
    case ErrCode::kData: return UKTR_DATA;
    case ErrCode::kNumeric: return UKTR_NUMERIC;
  }
  return UKTR_DATA;
}

template <typename Fn>
uktr_status wrap(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return UKTR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UKTR_DATA;
  }
}

[[noreturn]] void require(const char* what) {
  fail_usage(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) fail_data("out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Vocabulary load_run_vocab(const RunConfig& cfg) {
  return Vocabulary::load(cfg.data.root + "/" + cfg.data.vocab);
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

struct uktr_vocab {
  Vocabulary v;
};

struct uktr_manifest {
  Manifest m;
  std::vector<std::string> paths;  // resolved image paths, one per entry
};

struct uktr_recognizer {
  RunConfig cfg;
  Vocabulary vocab;
  std::unique_ptr<ParamStore> ps;
  std::unique_ptr<Model> model;
};

extern "C" {

const char* uktr_last_error(void) { return g_last_error.c_str(); }

void uktr_free_string(char* s) { std::free(s); }
void uktr_free_ids(int* ids) { std::free(ids); }

uktr_status uktr_gen_data(const char* config_path) {
  return wrap([&] {
    if (!config_path) require("config_path");
    const RunConfig cfg = RunConfig::load(config_path);
    synth_generate(cfg.synth, cfg.data, cfg.seed);
  });
}

uktr_status uktr_build_vocab(const char* config_path) {
  return wrap([&] {
    if (!config_path) require("config_path");
    const RunConfig cfg = RunConfig::load(config_path);
    std::vector<std::string> lines;
    for (const std::string* name :
         {&cfg.data.train_document, &cfg.data.train_scene,
          &cfg.data.train_handwritten}) {
      const Manifest m = load_manifest(cfg.data.root + "/" + *name,
                                       Modality::kDocument);
      for (const auto& e : m.entries) lines.push_back(e.label);
    }
    Vocabulary::build(lines).save(cfg.data.root + "/" + cfg.data.vocab);
  });
}

uktr_status uktr_train(const char* config_path, const char* phase,
                       const char* base_ckpt, const char* resume_ckpt,
                       const char* out_dir) {
  return wrap([&] {
    if (!config_path) require("config_path");
    if (!phase) require("phase");
    if (!out_dir) require("out_dir");
    const std::string phase_str = phase;
    int phase_num = 0;
    if (phase_str == "general") phase_num = 1;
    else if (phase_str == "adapt") phase_num = 2;
    else fail_usage("phase must be \"general\" or \"adapt\", got " + phase_str);
    if (base_ckpt && resume_ckpt)
      fail_usage("pass either a base checkpoint or a resume checkpoint");
    if (phase_num == 2 && !base_ckpt && !resume_ckpt)
      fail_usage("the adapt phase needs a base or resume checkpoint");

    const RunConfig cfg = RunConfig::load(config_path);
    const Vocabulary vocab = load_run_vocab(cfg);
    const TrainDatasets data = load_datasets(cfg.data);
    ParamStore ps(derive_seed(cfg.seed, "params"));
    Model model(cfg, vocab.size(), ps);
    if (base_ckpt) model.load_params(Checkpoint::load(base_ckpt));

    Trainer trainer(model, vocab, data, phase_num,
                    derive_seed(cfg.seed, phase_num == 1 ? "phase1"
                                                         : "phase2"));
    if (resume_ckpt) trainer.load_state(Checkpoint::load(resume_ckpt));

    std::filesystem::create_directories(out_dir);
    std::ofstream echo(std::string(out_dir) + "/config_effective.cfg");
    if (!echo) fail_data(std::string("cannot write to ") + out_dir);
    echo << cfg.echo_string();
    echo.close();

    const PhaseConfig& pc = trainer.phase_config();
    const int remaining = std::max(0, pc.epochs - trainer.epoch_count());
    trainer.run(remaining, out_dir);
  });
}

uktr_status uktr_benchmark(const char* config_path, const char* ckpt,
                           const char* decoders, int beam_width,
                           char** out_csv) {
  return wrap([&] {
    if (!config_path) require("config_path");
    if (!ckpt) require("ckpt");
    if (!out_csv) require("out_csv");
    const RunConfig cfg = RunConfig::load(config_path);
    const Vocabulary vocab = load_run_vocab(cfg);
    ParamStore ps(derive_seed(cfg.seed, "params"));
    Model model(cfg, vocab.size(), ps);
    model.load_params(Checkpoint::load(ckpt));

    const std::vector<std::string> modes =
        split_csv_list(decoders ? decoders : "ctc,ar");
    if (modes.empty()) fail_usage("no decoders requested");

    const std::string* names[kNumModalities] = {
        &cfg.data.eval_document, &cfg.data.eval_scene,
        &cfg.data.eval_handwritten};
    std::vector<CerRow> rows;
    for (int m = 0; m < kNumModalities; ++m) {
      const Manifest manifest = load_manifest(
          cfg.data.root + "/" + *names[m], static_cast<Modality>(m));
      if (manifest.entries.empty()) continue;
      for (const std::string& mode : modes)
        rows.push_back(evaluate_manifest(model, vocab, manifest, mode,
                                         beam_width, *names[m]));
    }
    if (rows.empty()) fail_data("no evaluation samples found");
    *out_csv = dup_string(benchmark_csv(rows));
  });
}

uktr_status uktr_ablate(const char* config_path, const char* out_dir,
                        char** out_csv) {
  return wrap([&] {
    if (!config_path) require("config_path");
    if (!out_dir) require("out_dir");
    if (!out_csv) require("out_csv");
    const RunConfig cfg = RunConfig::load(config_path);
    *out_csv = dup_string(ablation_csv(run_ablation(cfg, out_dir)));
  });
}

uktr_status uktr_inspect_router(const char* config_path, const char* ckpt,
                                const char* manifest_path, char** out_csv) {
  return wrap([&] {
    if (!config_path) require("config_path");
    if (!ckpt) require("ckpt");
    if (!manifest_path) require("manifest_path");
    if (!out_csv) require("out_csv");
    const RunConfig cfg = RunConfig::load(config_path);
    if (!cfg.mafs.enabled)
      fail_usage("the configured model runs without the router");
    const Vocabulary vocab = load_run_vocab(cfg);
    ParamStore ps(derive_seed(cfg.seed, "params"));
    Model model(cfg, vocab.size(), ps);
    model.load_params(Checkpoint::load(ckpt));

    const Manifest manifest =
        load_manifest(manifest_path, Modality::kDocument);
    std::ostringstream os;
    os << "path";
    for (int i = 1; i <= cfg.mafs.n; ++i) os << ",r_" << i;
    os << '\n' << std::setprecision(17);
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
      const Tensor image = preprocess(read_png_gray(manifest.image_path(i)),
                                      cfg.encoder.height,
                                      cfg.encoder.downsample_factor());
      const Tensor w = model.router_weights(image);
      os << manifest.entries[i].path;
      for (double v : w.values()) os << ',' << v;
      os << '\n';
    }
    *out_csv = dup_string(os.str());
  });
}

uktr_status uktr_model_info(const char* config_path, int width,
                            char** out_text) {
  return wrap([&] {
    if (!config_path) require("config_path");
    if (!out_text) require("out_text");
    const RunConfig cfg = RunConfig::load(config_path);
    const Vocabulary vocab = load_run_vocab(cfg);
    ParamStore ps(derive_seed(cfg.seed, "params"));
    Model model(cfg, vocab.size(), ps);
    const ParamReport p = model.param_report();
    const MacReport mac = model.mac_report(width);

    std::ostringstream os;
    os << "vocabulary entries: " << vocab.size() << "\n";
    os << "parameters:\n";
    os << "  cnn backbone        " << p.backbone << "\n";
    os << "  transformer encoder " << p.tr_encoder << "\n";
    os << "  feature selection   " << p.mafs << "\n";
    os << "  transformer decoder " << p.ar_decoder << "\n";
    os << "  ctc head            " << p.ctc_head << "\n";
    os << "  total               " << p.total << "\n";
    os << "multiply-accumulates for one " << cfg.encoder.height << "x"
       << width << " forward pass:\n";
    os << std::setprecision(6);
    os << "  cnn backbone        " << mac.backbone << "\n";
    os << "  transformer encoder " << mac.tr_encoder << "\n";
    os << "  feature selection   " << mac.mafs << "\n";
    os << "  ctc head            " << mac.ctc_head << "\n";
    os << "  total               " << mac.total << "\n";
    os << "flops at 1 FLOP per MAC: " << mac.total << "\n";
    os << "flops at 2 FLOPs per MAC: " << 2 * mac.total << "\n";
    *out_text = dup_string(os.str());
  });
}

uktr_status uktr_vocab_load(const char* path, uktr_vocab** out) {
  return wrap([&] {
    if (!path) require("path");
    if (!out) require("out");
    auto v = std::make_unique<uktr_vocab>();
    v->v = Vocabulary::load(path);
    *out = v.release();
  });
}

void uktr_vocab_free(uktr_vocab* v) { delete v; }

int uktr_vocab_size(const uktr_vocab* v) { return v ? v->v.size() : 0; }

uktr_status uktr_vocab_encode(const uktr_vocab* v, const char* text,
                              int** out_ids, size_t* out_len) {
  return wrap([&] {
    if (!v) require("vocab");
    if (!text) require("text");
    if (!out_ids) require("out_ids");
    if (!out_len) require("out_len");
    const std::vector<int> ids = v->v.encode(text);
    int* buf = static_cast<int*>(std::malloc(sizeof(int) * (ids.size() + 1)));
    if (!buf) fail_data("out of memory");
    std::copy(ids.begin(), ids.end(), buf);
    *out_ids = buf;
    *out_len = ids.size();
  });
}

uktr_status uktr_vocab_decode(const uktr_vocab* v, const int* ids, size_t len,
                              char** out_text) {
  return wrap([&] {
    if (!v) require("vocab");
    if (!ids && len > 0) require("ids");
    if (!out_text) require("out_text");
    *out_text = dup_string(v->v.decode(std::vector<int>(ids, ids + len)));
  });
}

uktr_status uktr_manifest_load(const char* path, uktr_manifest** out) {
  return wrap([&] {
    if (!path) require("path");
    if (!out) require("out");
    auto m = std::make_unique<uktr_manifest>();
    m->m = load_manifest(path, Modality::kDocument);
    m->paths.reserve(m->m.entries.size());
    for (size_t i = 0; i < m->m.entries.size(); ++i)
      m->paths.push_back(m->m.image_path(i));
    *out = m.release();
  });
}

void uktr_manifest_free(uktr_manifest* m) { delete m; }

size_t uktr_manifest_size(const uktr_manifest* m) {
  return m ? m->m.entries.size() : 0;
}

const char* uktr_manifest_image_path(const uktr_manifest* m, size_t i) {
  return m && i < m->paths.size() ? m->paths[i].c_str() : nullptr;
}

const char* uktr_manifest_label(const uktr_manifest* m, size_t i) {
  return m && i < m->m.entries.size() ? m->m.entries[i].label.c_str()
                                      : nullptr;
}

uktr_status uktr_recognizer_open(const char* config_path, const char* ckpt,
                                 uktr_recognizer** out) {
  return wrap([&] {
    if (!config_path) require("config_path");
    if (!ckpt) require("ckpt");
    if (!out) require("out");
    auto r = std::make_unique<uktr_recognizer>();
    r->cfg = RunConfig::load(config_path);
    r->vocab = load_run_vocab(r->cfg);
    r->ps = std::make_unique<ParamStore>(derive_seed(r->cfg.seed, "params"));
    r->model = std::make_unique<Model>(r->cfg, r->vocab.size(), *r->ps);
    r->model->load_params(Checkpoint::load(ckpt));
    *out = r.release();
  });
}

void uktr_recognizer_free(uktr_recognizer* r) { delete r; }

uktr_status uktr_recognize_png(const uktr_recognizer* r, const char* png_path,
                               const char* decoder, int beam_width,
                               char** out_text, double* out_score,
                               double* out_millis) {
  return wrap([&] {
    if (!r) require("recognizer");
    if (!png_path) require("png_path");
    if (!decoder) require("decoder");
    if (!out_text) require("out_text");
    const Tensor image =
        preprocess(read_png_gray(png_path), r->cfg.encoder.height,
                   r->cfg.encoder.downsample_factor());
    const auto t0 = std::chrono::steady_clock::now();
    const DecodeResult res = r->model->recognize(image, decoder, beam_width);
    const auto t1 = std::chrono::steady_clock::now();
    *out_text = dup_string(r->vocab.decode(res.ids));
    if (out_score) *out_score = res.score;
    if (out_millis)
      *out_millis =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
  });
}

int uktr_router_n(const uktr_recognizer* r) {
  return r && r->model->mafs_enabled() ? r->cfg.mafs.n : 0;
}

uktr_status uktr_router_weights(const uktr_recognizer* r,
                                const char* png_path, double* out_weights) {
  return wrap([&] {
    if (!r) require("recognizer");
    if (!png_path) require("png_path");
    if (!out_weights) require("out_weights");
    if (!r->model->mafs_enabled())
      fail_usage("this model runs without the feature-selection block");
    const Tensor image =
        preprocess(read_png_gray(png_path), r->cfg.encoder.height,
                   r->cfg.encoder.downsample_factor());
    const Tensor w = r->model->router_weights(image);
    std::copy(w.values().begin(), w.values().end(), out_weights);
  });
}

}  // extern "C"
