// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uktr {

enum class ClusterKind {
  kKhmer,    // base consonant / independent vowel + attached marks
  kLatin,    // ASCII letter
  kDigit,    // ASCII or Khmer digit
  kSymbol,   // any other printable codepoint
  kSpace,    // space or tab
  kUnknown,  // stray combining mark with no base to attach to
};

struct Cluster {
  std::string text;
  ClusterKind kind;
};

// Reserved vocabulary ids, fixed at the low end so CTC blank is id 0.
inline constexpr int kBlankId = 0;
inline constexpr int kPadId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kUnkId = 5;
inline constexpr int kNumReserved = 6;
extern const char* const kReservedNames[kNumReserved];

// Khmer codepoint classes used by the cluster grammar.
bool is_khmer_consonant(uint32_t cp);    // U+1780..U+17A2
bool is_khmer_indep_vowel(uint32_t cp);  // U+17A3..U+17B3
bool is_khmer_dep_vowel(uint32_t cp);    // U+17B4..U+17C5
bool is_khmer_diacritic(uint32_t cp);    // U+17C6..U+17D1, U+17DD
bool is_khmer_coeng(uint32_t cp);        // U+17D2

// Splits text into clusters. Grammar: base := consonant | independent vowel;
// cluster := base (COENG consonant)* (dependent-vowel)* (diacritic)*. Latin
// letters, digits, symbols and spaces are single-codepoint clusters; a
// combining mark with nothing to attach to becomes a kind=unknown cluster.
// Concatenating the returned texts always reproduces the input exactly.
std::vector<Cluster> segment(const std::string& text);

class Vocabulary {
 public:
  // Ids 0..5 are reserved; content entries follow in sorted order, so the
  // same corpus yields the same vocabulary regardless of line order.
  static Vocabulary build(const std::vector<std::string>& corpus_lines);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(entries_.size()); }
  // Id for a cluster string; kUnkId when absent.
  int id_of(const std::string& cluster_text) const;
  // Entry text for an id; fails with a data error when id is out of range.
  const std::string& entry(int id) const;

  std::vector<int> encode(const std::string& text) const;
  // Concatenates entries; reserved ids render as empty strings.
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> entries_;        // index = id
  std::map<std::string, int> id_by_text_;   // content entries only
};

}  // namespace uktr
