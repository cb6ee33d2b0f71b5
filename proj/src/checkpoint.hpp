// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uktr {

// Single-file binary container for model and optimizer state.
//
// Layout, all integers little-endian:
//   magic "UKTRCKPT" (8 bytes), u32 version, u64 entry count, then per entry
//     u32 name length, name bytes, u8 kind
//     kind 0 (f64 tensor): u32 rank, u32 dims[rank], f64 data (IEEE754 LE)
//     kind 1 (raw bytes):  u64 size, payload
// load() rejects bad magic, version mismatch, truncation, and trailing bytes.
struct CkptEntry {
  uint8_t kind = 0;
  std::vector<int> dims;      // kind 0
  std::vector<double> f64;    // kind 0
  std::string bytes;          // kind 1
};

class Checkpoint {
 public:
  static constexpr uint32_t kVersion = 1;

  void put_f64(const std::string& name, std::vector<int> dims,
               std::vector<double> data);
  void put_bytes(const std::string& name, std::string data);

  const CkptEntry* find(const std::string& name) const;
  // Like find() but fails with a data error when the entry is missing.
  const CkptEntry& require(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<std::string> order_;
  std::map<std::string, CkptEntry> entries_;
};

}  // namespace uktr
