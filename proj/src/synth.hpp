// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "png_io.hpp"
#include "rng.hpp"

namespace uktr {

// Built-in symbol alphabet for synthetic lines: Latin letters and digits plus
// composed Khmer cluster strings, each entry exactly one tokenizer cluster.
// Symbols render as deterministic pseudo-glyphs (seeded stroke patterns), so
// no font assets are needed while labels still exercise the real cluster
// grammar.
const std::vector<std::string>& synth_alphabet();

// Exact integer split of `total` across proportions (largest-remainder
// rounding; ties resolved toward earlier entries). Sum equals total.
std::vector<int> largest_remainder_counts(int total,
                                          const std::vector<double>& props);

// Renders one text line in the given modality style. `symbols` may contain
// the single-space symbol " " between words. Deterministic in (symbols,
// modality, rng state).
GrayImage render_line(const std::vector<std::string>& symbols,
                      Modality modality, Rng& rng);

// Generates the full synthetic corpus under data.root: PNGs in images/ and
// one TSV manifest per split and modality (using the names configured in
// `data`). Modality counts follow the configured proportions exactly; every
// sample derives its own seed, so regeneration is byte-identical.
void synth_generate(const SynthConfig& synth, const DataConfig& data,
                    uint64_t seed);

}  // namespace uktr
