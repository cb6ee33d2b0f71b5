// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "common.hpp"
#include "utf8.hpp"

namespace uktr {

namespace {

std::string cp(uint32_t c) { return utf8_encode_one(c); }

std::vector<std::string> build_alphabet() {
  std::vector<std::string> a;
  for (char c = 'a'; c <= 'z'; ++c) a.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) a.emplace_back(1, c);
  // Bare Khmer consonants.
  for (uint32_t k = 0x1780; k <= 0x1791; ++k) a.push_back(cp(k));
  // Consonant + dependent vowel.
  const uint32_t vowels[] = {0x17B6, 0x17B8, 0x17BB, 0x17C1, 0x17C2, 0x17C5};
  for (int i = 0; i < 6; ++i) a.push_back(cp(0x1780 + 3 * i) + cp(vowels[i]));
  // Consonant + coeng-consonant stacks, with and without a vowel.
  a.push_back(cp(0x1780) + cp(0x17D2) + cp(0x179A));          // k + coeng r
  a.push_back(cp(0x1798) + cp(0x17D2) + cp(0x1796));          // m + coeng ph
  a.push_back(cp(0x179F) + cp(0x17D2) + cp(0x178F));          // s + coeng t
  a.push_back(cp(0x1781) + cp(0x17D2) + cp(0x1798) + cp(0x17C2));
  a.push_back(cp(0x1785) + cp(0x17D2) + cp(0x179B) + cp(0x17B6));
  // Consonant + diacritic, and an independent vowel.
  a.push_back(cp(0x1780) + cp(0x17C6));
  a.push_back(cp(0x1793) + cp(0x17B8) + cp(0x17C7));
  a.push_back(cp(0x17A5));
  // Khmer digits.
  for (uint32_t k = 0x17E0; k <= 0x17E4; ++k) a.push_back(cp(k));
  return a;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// One stroke pattern per symbol, stable across the process and across runs:
// a handful of segments with endpoints in the unit box.
struct Glyph {
  std::vector<std::array<double, 4>> segs;  // x0, y0, x1, y1
};

Glyph glyph_for(const std::string& symbol) {
  Rng g(derive_seed(fnv1a(symbol), "glyph"));
  Glyph glyph;
  const int n = 3 + static_cast<int>(g.uniform_int(0, 3));
  double px = g.uniform(0.1, 0.9), py = g.uniform(0.1, 0.9);
  for (int i = 0; i < n; ++i) {
    // Chain half the segments so glyphs look connected.
    double x0 = px, y0 = py;
    if (g.uniform() < 0.4) {
      x0 = g.uniform(0.05, 0.95);
      y0 = g.uniform(0.05, 0.95);
    }
    const double x1 = g.uniform(0.05, 0.95);
    const double y1 = g.uniform(0.05, 0.95);
    glyph.segs.push_back({x0, y0, x1, y1});
    px = x1;
    py = y1;
  }
  return glyph;
}

void stamp_disk(GrayImage& img, double cx, double cy, double radius,
                uint8_t shade) {
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int r1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int c1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double dy = r - cy, dx = c - cx;
      if (dy * dy + dx * dx <= radius * radius)
        img.set(r, c, std::min(img.at(r, c), shade));
    }
}

void draw_segment(GrayImage& img, double x0, double y0, double x1, double y1,
                  double radius, uint8_t shade) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    stamp_disk(img, x0 + t * (x1 - x0), y0 + t * (y1 - y0), radius, shade);
  }
}

// Layout constants for the base canvas (preprocessing rescales later).
constexpr int kCanvasH = 40;
constexpr int kGlyphW = 22;
constexpr int kGlyphH = 24;
constexpr int kGlyphTop = 8;
constexpr int kSpaceW = 12;
constexpr int kMargin = 8;

GrayImage shear_warp(const GrayImage& img, double k) {
  GrayImage out = make_gray(img.height, img.width, 255);
  const double cy = (img.height - 1) / 2.0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const double sx = std::clamp(c - k * (r - cy), 0.0,
                                   static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = sx - x0;
      const double v = (1 - wx) * img.at(r, x0) + wx * img.at(r, x1);
      out.set(r, c, static_cast<uint8_t>(std::lround(v)));
    }
  return out;
}

}  // namespace

const std::vector<std::string>& synth_alphabet() {
  static const std::vector<std::string> alphabet = build_alphabet();
  return alphabet;
}

std::vector<int> largest_remainder_counts(int total,
                                          const std::vector<double>& props) {
  const size_t n = props.size();
  std::vector<int> counts(n, 0);
  std::vector<double> frac(n, 0.0);
  int assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double exact = total * props[i];
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    frac[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return frac[a] > frac[b]; });
  for (int left = total - assigned; left > 0; --left)
    ++counts[order[static_cast<size_t>(total - assigned - left)]];
  return counts;
}

GrayImage render_line(const std::vector<std::string>& symbols,
                      Modality modality, Rng& rng) {
  int width = 2 * kMargin;
  for (const auto& s : symbols) width += (s == " ") ? kSpaceW : kGlyphW;
  width = std::max(width, 2 * kMargin + kGlyphW);

  // Style parameters per modality.
  uint8_t bg = 247, shade = 30;
  double thickness = 1.8, jitter = 0.0, noise_sd = 0.8, wobble = 0.0;
  bool clutter = false;
  double shear = 0.0;
  switch (modality) {
    case Modality::kDocument:
      bg = static_cast<uint8_t>(rng.uniform_int(240, 252));
      shade = static_cast<uint8_t>(rng.uniform_int(15, 45));
      thickness = rng.uniform(1.5, 2.1);
      noise_sd = rng.uniform(0.0, 1.5);
      break;
    case Modality::kScene: {
      bg = static_cast<uint8_t>(rng.uniform_int(100, 230));
      shade = bg >= 145 ? static_cast<uint8_t>(rng.uniform_int(20, 60))
                        : static_cast<uint8_t>(rng.uniform_int(200, 240));
      thickness = rng.uniform(1.6, 2.6);
      noise_sd = rng.uniform(2.0, 6.0);
      clutter = true;
      shear = rng.uniform(-0.18, 0.18);
      break;
    }
    case Modality::kHandwritten:
      bg = static_cast<uint8_t>(rng.uniform_int(240, 252));
      shade = static_cast<uint8_t>(rng.uniform_int(30, 70));
      thickness = rng.uniform(1.2, 2.4);
      jitter = 0.09;
      wobble = 3.0;
      noise_sd = rng.uniform(0.5, 2.0);
      break;
  }

  GrayImage img = make_gray(kCanvasH, width, bg);
  if (clutter) {
    const int boxes = 3 + static_cast<int>(rng.uniform_int(0, 4));
    for (int i = 0; i < boxes; ++i) {
      const int h = static_cast<int>(rng.uniform_int(3, 12));
      const int w = static_cast<int>(rng.uniform_int(4, 30));
      const int r0 = static_cast<int>(rng.uniform_int(0, kCanvasH - 1));
      const int c0 = static_cast<int>(rng.uniform_int(0, width - 1));
      const int delta = static_cast<int>(rng.uniform_int(-35, 35));
      for (int r = r0; r < std::min(kCanvasH, r0 + h); ++r)
        for (int c = c0; c < std::min(width, c0 + w); ++c)
          img.set(r, c, static_cast<uint8_t>(std::clamp(
                            img.at(r, c) + delta, 0, 255)));
    }
  }

  int x = kMargin;
  for (const auto& s : symbols) {
    if (s == " ") {
      x += kSpaceW;
      continue;
    }
    const Glyph glyph = glyph_for(s);
    const double dy = wobble > 0 ? rng.uniform(-wobble, wobble) : 0.0;
    for (const auto& seg : glyph.segs) {
      double x0 = seg[0], y0 = seg[1], x1 = seg[2], y1 = seg[3];
      if (jitter > 0) {
        x0 += rng.uniform(-jitter, jitter);
        y0 += rng.uniform(-jitter, jitter);
        x1 += rng.uniform(-jitter, jitter);
        y1 += rng.uniform(-jitter, jitter);
      }
      const double rad =
          jitter > 0 ? rng.uniform(0.8, 1.3) * thickness / 2 : thickness / 2;
      draw_segment(img, x + x0 * (kGlyphW - 2), kGlyphTop + dy + y0 * kGlyphH,
                   x + x1 * (kGlyphW - 2), kGlyphTop + dy + y1 * kGlyphH, rad,
                   shade);
    }
    x += kGlyphW;
  }

  if (shear != 0.0) img = shear_warp(img, shear);
  if (noise_sd > 0)
    for (auto& p : img.pixels)
      p = static_cast<uint8_t>(std::clamp(
          std::lround(p + rng.normal(0.0, noise_sd)), 0L, 255L));
  return img;
}

namespace {

using Word = std::vector<std::string>;

Word sample_word(Rng& rng) {
  const auto& alpha = synth_alphabet();
  Word w;
  const int len = static_cast<int>(rng.uniform_int(2, 5));
  for (int i = 0; i < len; ++i)
    w.push_back(alpha[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(alpha.size()) - 1))]);
  return w;
}

// The shared word bank (empty when cfg.lexicon == 0). Seeded independently of
// any sample index so train and eval splits draw from the same forms.
std::vector<Word> build_lexicon(const SynthConfig& cfg, uint64_t seed) {
  std::vector<Word> bank;
  Rng rng(derive_seed(seed, "lexicon"));
  bank.reserve(static_cast<size_t>(cfg.lexicon));
  for (int i = 0; i < cfg.lexicon; ++i) bank.push_back(sample_word(rng));
  return bank;
}

std::vector<std::string> sample_line(Rng& rng, const SynthConfig& cfg,
                                     const std::vector<Word>& lexicon) {
  std::vector<std::string> out;
  const int words =
      static_cast<int>(rng.uniform_int(cfg.words_min, cfg.words_max));
  for (int w = 0; w < words; ++w) {
    if (w) out.emplace_back(" ");
    const Word word =
        lexicon.empty()
            ? sample_word(rng)
            : lexicon[static_cast<size_t>(rng.uniform_int(
                  0, static_cast<int64_t>(lexicon.size()) - 1))];
    out.insert(out.end(), word.begin(), word.end());
  }
  return out;
}

}  // namespace

void synth_generate(const SynthConfig& synth, const DataConfig& data,
                    uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(data.root + "/images");

  struct Split {
    const char* tag;
    int total;
    std::array<const std::string*, 3> manifests;
  };
  const Split splits[2] = {
      {"train", synth.samples_train,
       {&data.train_document, &data.train_scene, &data.train_handwritten}},
      {"eval", synth.samples_eval,
       {&data.eval_document, &data.eval_scene, &data.eval_handwritten}},
  };

  for (const Split& split : splits) {
    const std::vector<int> counts = largest_remainder_counts(
        split.total,
        {synth.prop_document, synth.prop_scene, synth.prop_handwritten});
    int idx = 0;
    for (int m = 0; m < kNumModalities; ++m) {
      const Modality mod = static_cast<Modality>(m);
      std::ofstream manifest(data.root + "/" + *split.manifests[m],
                             std::ios::binary);
      if (!manifest)
        fail_data("cannot write manifest " + data.root + "/" +
                  *split.manifests[m]);
      for (int k = 0; k < counts[m]; ++k, ++idx) {
        Rng rng(derive_seed(seed, split.tag, static_cast<uint64_t>(idx)));
        const std::vector<std::string> symbols = sample_line(rng, synth);
        std::string label;
        for (const auto& s : symbols) label += s;
        char name[64];
        std::snprintf(name, sizeof(name), "images/%s_%06d.png", split.tag, idx);
        write_png_gray(data.root + "/" + name, render_line(symbols, mod, rng));
        manifest << name << '\t' << label << '\n';
      }
    }
  }
}

}  // namespace uktr
