// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "common.hpp"

namespace uktr {

namespace {

constexpr char kMagic[8] = {'U', 'K', 'T', 'R', 'C', 'K', 'P', 'T'};

void append_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  append_u64(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  const char* take(size_t n) {
    if (pos_ + n > buf_.size())
      fail_data("checkpoint " + path_ + " is truncated");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  uint32_t u32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(8));
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put_f64(const std::string& name, std::vector<int> dims,
                         std::vector<double> data) {
  int64_t n = 1;
  for (int d : dims) n *= d;
  if (n != static_cast<int64_t>(data.size()))
    fail_usage("checkpoint entry " + name + ": dims do not match data length");
  if (!entries_.count(name)) order_.push_back(name);
  CkptEntry e;
  e.kind = 0;
  e.dims = std::move(dims);
  e.f64 = std::move(data);
  entries_[name] = std::move(e);
}

void Checkpoint::put_bytes(const std::string& name, std::string data) {
  if (!entries_.count(name)) order_.push_back(name);
  CkptEntry e;
  e.kind = 1;
  e.bytes = std::move(data);
  entries_[name] = std::move(e);
}

const CkptEntry* Checkpoint::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

const CkptEntry& Checkpoint::require(const std::string& name) const {
  const CkptEntry* e = find(name);
  if (!e) fail_data("checkpoint is missing entry " + name);
  return *e;
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 8);
  append_u32(out, kVersion);
  append_u64(out, order_.size());
  for (const auto& name : order_) {
    const CkptEntry& e = entries_.at(name);
    append_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(e.kind));
    if (e.kind == 0) {
      append_u32(out, static_cast<uint32_t>(e.dims.size()));
      for (int d : e.dims) append_u32(out, static_cast<uint32_t>(d));
      for (double d : e.f64) append_f64(out, d);
    } else {
      append_u64(out, e.bytes.size());
      out += e.bytes;
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_data("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail_data("short write to " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r(buf, path);
  if (std::memcmp(r.take(8), kMagic, 8) != 0)
    fail_data(path + " is not a checkpoint file (bad magic)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    fail_data("checkpoint " + path + " has version " + std::to_string(version) +
              "; this build reads version " + std::to_string(kVersion));
  const uint64_t count = r.u64();
  Checkpoint ck;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    std::string name(r.take(name_len), name_len);
    const uint8_t kind = static_cast<uint8_t>(*r.take(1));
    if (kind == 0) {
      const uint32_t rank = r.u32();
      std::vector<int> dims(rank);
      int64_t n = 1;
      for (auto& d : dims) {
        d = static_cast<int>(r.u32());
        n *= d;
      }
      std::vector<double> data(static_cast<size_t>(n));
      for (auto& d : data) d = r.f64();
      ck.put_f64(name, std::move(dims), std::move(data));
    } else if (kind == 1) {
      const uint64_t size = r.u64();
      ck.put_bytes(name, std::string(r.take(size), size));
    } else {
      fail_data("checkpoint " + path + ": unknown entry kind");
    }
  }
  if (r.remaining() != 0)
    fail_data("checkpoint " + path + " has trailing bytes");
  return ck;
}

}  // namespace uktr
