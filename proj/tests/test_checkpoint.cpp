// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "checkpoint.hpp"
#include "common.hpp"
#include "param_store.hpp"
#include "rng.hpp"

using namespace uktr;

namespace {
std::string tmp_path(const char* name) {
  return std::string("/tmp/uktr_test_") + name;
}
}  // namespace

TEST_CASE("param store keeps creation order and counts by prefix") {
  ParamStore ps(1);
  ps.fan_in_uniform("encoder.w", {4, 8}, 4);
  ps.zeros("encoder.b", {8});
  ps.ones("decoder.g", {8});
  CHECK(ps.names() == std::vector<std::string>({"encoder.w", "encoder.b",
                                                "decoder.g"}));
  CHECK(ps.count_params() == 32 + 8 + 8);
  CHECK(ps.count_params("encoder.") == 40);
  CHECK(ps.count_params("decoder.") == 8);
  CHECK(ps.count_params("nothing.") == 0);
  CHECK(ps.get("encoder.b").numel() == 8);
  CHECK(ps.get("encoder.w").requires_grad());
  CHECK_THROWS_AS(ps.get("missing"), Error);
}

TEST_CASE("param store rejects duplicate names") {
  ParamStore ps(1);
  ps.zeros("a", {2});
  CHECK_THROWS_AS(ps.zeros("a", {2}), Error);
}

TEST_CASE("fan-in uniform init respects its bound and the seed") {
  ParamStore a(7), b(7), c(8);
  Tensor wa = a.fan_in_uniform("w", {100, 100}, 100);
  Tensor wb = b.fan_in_uniform("w", {100, 100}, 100);
  Tensor wc = c.fan_in_uniform("w", {100, 100}, 100);
  CHECK(wa.values() == wb.values());
  CHECK(wa.values() != wc.values());
  for (double v : wa.values()) CHECK(std::abs(v) <= 0.1);
}

TEST_CASE("checkpoint round-trips tensors and bytes exactly") {
  Rng rng(3);
  std::vector<double> data(60);
  for (auto& x : data) x = rng.normal() * 1e-7;  // tiny values stress exactness
  data[0] = -0.0;
  data[1] = 1e308;

  Checkpoint ck;
  ck.put_f64("m.w", {3, 4, 5}, data);
  ck.put_bytes("rng", "12345 678 90");
  ck.put_f64("step", {1}, {42.0});
  const std::string path = tmp_path("ckpt.bin");
  ck.save(path);

  Checkpoint in = Checkpoint::load(path);
  CHECK(in.names() == std::vector<std::string>({"m.w", "rng", "step"}));
  const CkptEntry& w = in.require("m.w");
  CHECK(w.dims == std::vector<int>({3, 4, 5}));
  REQUIRE(w.f64.size() == 60);
  for (size_t i = 0; i < 60; ++i) {
    // bit-exact, including the sign of zero
    CHECK(std::memcmp(&w.f64[i], &data[i], 8) == 0);
  }
  CHECK(in.require("rng").bytes == "12345 678 90");
  CHECK(in.find("nope") == nullptr);
  CHECK_THROWS_AS(in.require("nope"), Error);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint load rejects malformed files") {
  const std::string path = tmp_path("ckpt_bad.bin");

  SUBCASE("bad magic") {
    std::ofstream(path, std::ios::binary) << "NOTACKPTxxxxxxxx";
    CHECK_THROWS_AS(Checkpoint::load(path), Error);
  }
  SUBCASE("wrong version") {
    std::string buf = "UKTRCKPT";
    buf += std::string("\x63\x00\x00\x00", 4);  // version 99
    buf += std::string(8, '\0');                // zero entries
    std::ofstream(path, std::ios::binary) << buf;
    CHECK_THROWS_AS(Checkpoint::load(path), Error);
  }
  SUBCASE("truncation") {
    Checkpoint ck;
    ck.put_f64("w", {4}, {1, 2, 3, 4});
    ck.save(path);
    std::ifstream f(path, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    std::ofstream(path, std::ios::binary) << buf.substr(0, buf.size() - 5);
    CHECK_THROWS_AS(Checkpoint::load(path), Error);
  }
  SUBCASE("trailing bytes") {
    Checkpoint ck;
    ck.put_f64("w", {1}, {1});
    ck.save(path);
    std::ofstream(path, std::ios::binary | std::ios::app) << "junk";
    CHECK_THROWS_AS(Checkpoint::load(path), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(Checkpoint::load("/tmp/uktr_no_such_file.bin"), Error);
  }
  std::remove(path.c_str());
}

TEST_CASE("overwriting an entry keeps a single copy") {
  Checkpoint ck;
  ck.put_f64("x", {1}, {1.0});
  ck.put_f64("x", {1}, {2.0});
  CHECK(ck.names().size() == 1);
  CHECK(ck.require("x").f64[0] == 2.0);
}
