// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokenizer.hpp"

#include <fstream>
#include <set>

#include "common.hpp"
#include "utf8.hpp"

namespace uktr {

const char* const kReservedNames[kNumReserved] = {"<blank>", "<pad>", "<bos>",
                                                  "<eos>", "<mask>", "<unk>"};

bool is_khmer_consonant(uint32_t cp) { return cp >= 0x1780 && cp <= 0x17A2; }
bool is_khmer_indep_vowel(uint32_t cp) { return cp >= 0x17A3 && cp <= 0x17B3; }
bool is_khmer_dep_vowel(uint32_t cp) { return cp >= 0x17B4 && cp <= 0x17C5; }
bool is_khmer_diacritic(uint32_t cp) {
  return (cp >= 0x17C6 && cp <= 0x17D1) || cp == 0x17DD;
}
bool is_khmer_coeng(uint32_t cp) { return cp == 0x17D2; }

namespace {

bool is_khmer_base(uint32_t cp) {
  return is_khmer_consonant(cp) || is_khmer_indep_vowel(cp);
}

bool is_ascii_letter(uint32_t cp) {
  return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

bool is_digit_cp(uint32_t cp) {
  return (cp >= '0' && cp <= '9') || (cp >= 0x17E0 && cp <= 0x17E9);
}

bool is_space_cp(uint32_t cp) { return cp == ' ' || cp == '\t'; }

// Marks that may only appear inside a khmer cluster.
bool is_khmer_attached_mark(uint32_t cp) {
  return is_khmer_coeng(cp) || is_khmer_dep_vowel(cp) || is_khmer_diacritic(cp);
}

}  // namespace

std::vector<Cluster> segment(const std::string& text) {
  const std::vector<uint32_t> cps = utf8_decode(text);
  std::vector<Cluster> out;
  size_t i = 0;
  const size_t n = cps.size();
  while (i < n) {
    const uint32_t cp = cps[i];
    if (is_khmer_base(cp)) {
      size_t j = i + 1;
      // subscript consonants: COENG only counts with a consonant behind it,
      // otherwise it is a stray mark and ends the cluster
      while (j + 1 < n && is_khmer_coeng(cps[j]) && is_khmer_consonant(cps[j + 1]))
        j += 2;
      while (j < n && is_khmer_dep_vowel(cps[j])) ++j;
      while (j < n && is_khmer_diacritic(cps[j])) ++j;
      std::string t;
      for (size_t k = i; k < j; ++k) t += utf8_encode_one(cps[k]);
      out.push_back({std::move(t), ClusterKind::kKhmer});
      i = j;
    } else if (is_ascii_letter(cp)) {
      out.push_back({utf8_encode_one(cp), ClusterKind::kLatin});
      ++i;
    } else if (is_digit_cp(cp)) {
      out.push_back({utf8_encode_one(cp), ClusterKind::kDigit});
      ++i;
    } else if (is_space_cp(cp)) {
      out.push_back({utf8_encode_one(cp), ClusterKind::kSpace});
      ++i;
    } else if (is_khmer_attached_mark(cp)) {
      out.push_back({utf8_encode_one(cp), ClusterKind::kUnknown});
      ++i;
    } else {
      out.push_back({utf8_encode_one(cp), ClusterKind::kSymbol});
      ++i;
    }
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus_lines) {
  std::set<std::string> seen;
  for (const auto& line : corpus_lines)
    for (const auto& cl : segment(line)) seen.insert(cl.text);
  Vocabulary v;
  for (int i = 0; i < kNumReserved; ++i) v.entries_.push_back(kReservedNames[i]);
  for (const auto& text : seen) {
    v.id_by_text_.emplace(text, static_cast<int>(v.entries_.size()));
    v.entries_.push_back(text);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open vocabulary " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.entries_.push_back(line);
  }
  if (v.entries_.size() < kNumReserved)
    fail_data("vocabulary " + path + " is missing reserved entries");
  for (int i = 0; i < kNumReserved; ++i)
    if (v.entries_[i] != kReservedNames[i])
      fail_data("vocabulary " + path + ": line " + std::to_string(i) +
                " must be " + kReservedNames[i]);
  for (size_t i = kNumReserved; i < v.entries_.size(); ++i) {
    if (v.entries_[i].empty())
      fail_data("vocabulary " + path + ": empty entry at line " +
                std::to_string(i));
    if (!v.id_by_text_.emplace(v.entries_[i], static_cast<int>(i)).second)
      fail_data("vocabulary " + path + ": duplicate entry at line " +
                std::to_string(i));
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_data("cannot open " + path + " for writing");
  for (const auto& e : entries_) f << e << '\n';
  if (!f) fail_data("short write to " + path);
}

int Vocabulary::id_of(const std::string& cluster_text) const {
  auto it = id_by_text_.find(cluster_text);
  return it == id_by_text_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::entry(int id) const {
  if (id < 0 || id >= size())
    fail_data("token id " + std::to_string(id) + " out of range for vocabulary of " +
              std::to_string(size()));
  return entries_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& cl : segment(text)) ids.push_back(id_of(cl.text));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    const std::string& e = entry(id);
    if (id >= kNumReserved) out += e;
  }
  return out;
}

}  // namespace uktr
