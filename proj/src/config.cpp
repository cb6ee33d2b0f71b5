// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "common.hpp"

namespace uktr {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

// Parsed key/value pairs with consumption tracking, so anything left over
// after all sections have read their keys is reported as unknown.
class KvReader {
 public:
  KvReader(const std::string& text, std::string origin)
      : origin_(std::move(origin)) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        fail_usage(origin_ + ":" + std::to_string(lineno) +
                   ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        fail_usage(origin_ + ":" + std::to_string(lineno) + ": empty key");
      if (!kv_.emplace(key, value).second)
        fail_usage(origin_ + ":" + std::to_string(lineno) + ": duplicate key " +
                   key);
    }
  }

  std::string str(const std::string& key, const std::string& def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    return it->second;
  }

  int64_t integer(const std::string& key, int64_t def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    return parse_int(key, it->second);
  }

  uint64_t u64(const std::string& key, uint64_t def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    const int64_t v = parse_int(key, it->second);
    if (v < 0) fail_usage(origin_ + ": key " + key + " must be non-negative");
    return static_cast<uint64_t>(v);
  }

  double real(const std::string& key, double def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    return parse_double(key, it->second);
  }

  bool boolean(const std::string& key, bool def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    const std::string& v = it->second;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail_usage(origin_ + ": key " + key + " must be true or false, got '" + v +
               "'");
  }

  std::vector<int> int_list(const std::string& key, std::vector<int> def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    std::vector<int> out;
    for (const auto& part : split(it->second, ','))
      out.push_back(static_cast<int>(parse_int(key, part)));
    return out;
  }

  std::vector<uint64_t> u64_list(const std::string& key,
                                 std::vector<uint64_t> def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    std::vector<uint64_t> out;
    for (const auto& part : split(it->second, ','))
      out.push_back(static_cast<uint64_t>(parse_int(key, part)));
    return out;
  }

  std::vector<std::string> str_list(const std::string& key,
                                    std::vector<std::string> def) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    used_.insert(key);
    return split(it->second, ',');
  }

  void reject_unknown() const {
    std::string unknown;
    for (const auto& [key, value] : kv_) {
      if (used_.count(key)) continue;
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
    if (!unknown.empty())
      fail_usage(origin_ + ": unknown config keys: " + unknown);
  }

 private:
  int64_t parse_int(const std::string& key, const std::string& v) const {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      fail_usage(origin_ + ": key " + key + " expects an integer, got '" + v +
                 "'");
    return out;
  }
  double parse_double(const std::string& key, const std::string& v) const {
    try {
      size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      fail_usage(origin_ + ": key " + key + " expects a number, got '" + v +
                 "'");
    }
  }

  std::string origin_;
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

void validate(const RunConfig& c, const std::string& origin) {
  const auto& e = c.encoder;
  if (e.channels.empty() || e.channels.size() != e.repeats.size() ||
      e.channels.size() != e.downsample.size())
    fail_usage(origin +
               ": encoder.channels, encoder.repeats and encoder.downsample "
               "must be non-empty lists of equal length");
  for (int ch : e.channels)
    if (ch < 1) fail_usage(origin + ": encoder.channels entries must be >= 1");
  for (int r : e.repeats)
    if (r < 1) fail_usage(origin + ": encoder.repeats entries must be >= 1");
  for (int f : e.downsample)
    if (f != 0 && f != 1)
      fail_usage(origin + ": encoder.downsample entries must be 0 or 1");
  if (e.channels.back() != e.d)
    fail_usage(origin + ": encoder.d (" + std::to_string(e.d) +
               ") must equal the last channel count (" +
               std::to_string(e.channels.back()) + ")");
  if (e.d < 1 || e.layers < 0 || e.ffn < 1)
    fail_usage(origin + ": encoder dims must be positive (layers may be 0)");
  if (e.heads < 1 || e.d % e.heads != 0)
    fail_usage(origin + ": encoder.heads must divide encoder.d");
  if (e.norm_groups < 1)
    fail_usage(origin + ": encoder.norm_groups must be >= 1");
  for (int ch : e.channels)
    if (ch % e.norm_groups != 0)
      fail_usage(origin + ": every encoder channel count must be divisible by "
                          "encoder.norm_groups");
  if (e.dropout < 0.0 || e.dropout >= 1.0)
    fail_usage(origin + ": encoder.dropout must be in [0,1)");
  if (e.height < 1) fail_usage(origin + ": encoder.height must be >= 1");
  if (e.height % e.downsample_factor() != 0)
    fail_usage(origin + ": encoder.height must be divisible by the total "
                        "downsample factor " +
               std::to_string(e.downsample_factor()));

  if (c.mafs.n < 1) fail_usage(origin + ": mafs.n must be >= 1");
  if (c.mafs.p < 1 || c.mafs.p > e.d)
    fail_usage(origin + ": mafs.p must be in [1, encoder.d]");
  if (e.d / 4 < 1) fail_usage(origin + ": encoder.d too small for the router");

  const auto& dec = c.decoder;
  if (dec.layers < 0 || dec.ffn < 1)
    fail_usage(origin + ": decoder dims must be positive (layers may be 0)");
  if (dec.heads < 1 || e.d % dec.heads != 0)
    fail_usage(origin + ": decoder.heads must divide encoder.d");
  if (dec.dropout < 0.0 || dec.dropout >= 1.0)
    fail_usage(origin + ": decoder.dropout must be in [0,1)");
  if (dec.mask_ratio < 0.0 || dec.mask_ratio > 1.0)
    fail_usage(origin + ": decoder.mask_ratio must be in [0,1]");
  if (dec.max_len < 1) fail_usage(origin + ": decoder.max_len must be >= 1");

  const auto& t = c.train;
  if (t.batch_size < 1) fail_usage(origin + ": train.batch_size must be >= 1");
  if (t.clip_norm <= 0.0) fail_usage(origin + ": train.clip_norm must be > 0");
  if (t.cycle_epochs < 1) fail_usage(origin + ": train.cycle_epochs must be >= 1");
  for (const PhaseConfig* p : {&t.phase1, &t.phase2}) {
    if (p->epochs < 0) fail_usage(origin + ": phase epochs must be >= 0");
    if (!(0.0 < p->lr_min && p->lr_min <= p->lr_max))
      fail_usage(origin + ": phase LRs need 0 < lr_min <= lr_max");
  }

  const auto& s = c.synth;
  if (s.samples_train < 0 || s.samples_eval < 0)
    fail_usage(origin + ": synth sample counts must be >= 0");
  if (s.prop_document < 0 || s.prop_scene < 0 || s.prop_handwritten < 0 ||
      std::abs(s.prop_document + s.prop_scene + s.prop_handwritten - 1.0) > 1e-9)
    fail_usage(origin + ": synth proportions must be non-negative and sum to 1");
  if (s.words_min < 1 || s.words_max < s.words_min)
    fail_usage(origin + ": synth.words_min/max must satisfy 1 <= min <= max");
  if (s.lexicon < 0) fail_usage(origin + ": synth.lexicon must be >= 0");

  if (c.ablate.variants.empty() || c.ablate.seeds.empty())
    fail_usage(origin + ": ablate.variants and ablate.seeds must be non-empty");
  for (const auto& v : c.ablate.variants) {
    if (v == "mafs" || v == "nomafs") continue;
    if (v.size() > 1 && v[0] == 'n' &&
        v.find_first_not_of("0123456789", 1) == std::string::npos)
      continue;
    fail_usage(origin + ": unknown ablate variant '" + v +
               "' (expected mafs, nomafs, or n<count>)");
  }
  if (c.ablate.decoder != "ctc" && c.ablate.decoder != "ar")
    fail_usage(origin + ": ablate.decoder must be ctc or ar");
}

}  // namespace

int EncoderConfig::downsample_factor() const {
  int f = 1;
  for (int flag : downsample)
    if (flag) f *= 2;
  return f;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  KvReader kv(text, origin);
  RunConfig c;
  c.seed = kv.u64("seed", c.seed);

  auto& e = c.encoder;
  e.height = static_cast<int>(kv.integer("encoder.height", e.height));
  e.channels = kv.int_list("encoder.channels", e.channels);
  e.repeats = kv.int_list("encoder.repeats", e.repeats);
  e.downsample = kv.int_list("encoder.downsample", e.downsample);
  e.norm_groups = static_cast<int>(kv.integer("encoder.norm_groups", e.norm_groups));
  e.d = static_cast<int>(kv.integer("encoder.d", e.d));
  e.layers = static_cast<int>(kv.integer("encoder.layers", e.layers));
  e.heads = static_cast<int>(kv.integer("encoder.heads", e.heads));
  e.ffn = static_cast<int>(kv.integer("encoder.ffn", e.ffn));
  e.dropout = kv.real("encoder.dropout", e.dropout);

  c.mafs.enabled = kv.boolean("mafs.enabled", c.mafs.enabled);
  c.mafs.n = static_cast<int>(kv.integer("mafs.n", c.mafs.n));
  c.mafs.p = static_cast<int>(kv.integer("mafs.p", c.mafs.p));

  auto& d = c.decoder;
  d.layers = static_cast<int>(kv.integer("decoder.layers", d.layers));
  d.heads = static_cast<int>(kv.integer("decoder.heads", d.heads));
  d.ffn = static_cast<int>(kv.integer("decoder.ffn", d.ffn));
  d.dropout = kv.real("decoder.dropout", d.dropout);
  d.mask_ratio = kv.real("decoder.mask_ratio", d.mask_ratio);
  d.max_len = static_cast<int>(kv.integer("decoder.max_len", d.max_len));

  auto& t = c.train;
  t.batch_size = static_cast<int>(kv.integer("train.batch_size", t.batch_size));
  t.clip_norm = kv.real("train.clip_norm", t.clip_norm);
  t.cycle_epochs = static_cast<int>(kv.integer("train.cycle_epochs", t.cycle_epochs));
  t.phase1.epochs = static_cast<int>(kv.integer("train.phase1.epochs", t.phase1.epochs));
  t.phase1.lr_min = kv.real("train.phase1.lr_min", t.phase1.lr_min);
  t.phase1.lr_max = kv.real("train.phase1.lr_max", t.phase1.lr_max);
  t.phase2.epochs = static_cast<int>(kv.integer("train.phase2.epochs", t.phase2.epochs));
  t.phase2.lr_min = kv.real("train.phase2.lr_min", t.phase2.lr_min);
  t.phase2.lr_max = kv.real("train.phase2.lr_max", t.phase2.lr_max);

  auto& dt = c.data;
  dt.root = kv.str("data.root", dt.root);
  dt.vocab = kv.str("data.vocab", dt.vocab);
  dt.train_document = kv.str("data.train_document", dt.train_document);
  dt.train_scene = kv.str("data.train_scene", dt.train_scene);
  dt.train_handwritten = kv.str("data.train_handwritten", dt.train_handwritten);
  dt.eval_document = kv.str("data.eval_document", dt.eval_document);
  dt.eval_scene = kv.str("data.eval_scene", dt.eval_scene);
  dt.eval_handwritten = kv.str("data.eval_handwritten", dt.eval_handwritten);
  dt.augment = kv.boolean("data.augment", dt.augment);

  auto& s = c.synth;
  s.samples_train = static_cast<int>(kv.integer("synth.samples_train", s.samples_train));
  s.samples_eval = static_cast<int>(kv.integer("synth.samples_eval", s.samples_eval));
  s.prop_document = kv.real("synth.prop_document", s.prop_document);
  s.prop_scene = kv.real("synth.prop_scene", s.prop_scene);
  s.prop_handwritten = kv.real("synth.prop_handwritten", s.prop_handwritten);
  s.words_min = static_cast<int>(kv.integer("synth.words_min", s.words_min));
  s.words_max = static_cast<int>(kv.integer("synth.words_max", s.words_max));
  s.lexicon = static_cast<int>(kv.integer("synth.lexicon", s.lexicon));

  auto& a = c.ablate;
  a.variants = kv.str_list("ablate.variants", a.variants);
  a.seeds = kv.u64_list("ablate.seeds", a.seeds);
  a.decoder = kv.str("ablate.decoder", a.decoder);

  kv.reject_unknown();
  validate(c, origin);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_usage("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse(text, path);
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string RunConfig::echo_string() const {
  std::ostringstream os;
  os << "seed = " << seed << "\n\n";
  os << "encoder.height = " << encoder.height << "\n";
  os << "encoder.channels = " << join_ints(encoder.channels) << "\n";
  os << "encoder.repeats = " << join_ints(encoder.repeats) << "\n";
  os << "encoder.downsample = " << join_ints(encoder.downsample) << "\n";
  os << "encoder.norm_groups = " << encoder.norm_groups << "\n";
  os << "encoder.d = " << encoder.d << "\n";
  os << "encoder.layers = " << encoder.layers << "\n";
  os << "encoder.heads = " << encoder.heads << "\n";
  os << "encoder.ffn = " << encoder.ffn << "\n";
  os << "encoder.dropout = " << fmt_double(encoder.dropout) << "\n\n";
  os << "mafs.enabled = " << (mafs.enabled ? "true" : "false") << "\n";
  os << "mafs.n = " << mafs.n << "\n";
  os << "mafs.p = " << mafs.p << "\n\n";
  os << "decoder.layers = " << decoder.layers << "\n";
  os << "decoder.heads = " << decoder.heads << "\n";
  os << "decoder.ffn = " << decoder.ffn << "\n";
  os << "decoder.dropout = " << fmt_double(decoder.dropout) << "\n";
  os << "decoder.mask_ratio = " << fmt_double(decoder.mask_ratio) << "\n";
  os << "decoder.max_len = " << decoder.max_len << "\n\n";
  os << "train.batch_size = " << train.batch_size << "\n";
  os << "train.clip_norm = " << fmt_double(train.clip_norm) << "\n";
  os << "train.cycle_epochs = " << train.cycle_epochs << "\n";
  os << "train.phase1.epochs = " << train.phase1.epochs << "\n";
  os << "train.phase1.lr_min = " << fmt_double(train.phase1.lr_min) << "\n";
  os << "train.phase1.lr_max = " << fmt_double(train.phase1.lr_max) << "\n";
  os << "train.phase2.epochs = " << train.phase2.epochs << "\n";
  os << "train.phase2.lr_min = " << fmt_double(train.phase2.lr_min) << "\n";
  os << "train.phase2.lr_max = " << fmt_double(train.phase2.lr_max) << "\n\n";
  os << "data.root = " << data.root << "\n";
  os << "data.vocab = " << data.vocab << "\n";
  os << "data.train_document = " << data.train_document << "\n";
  os << "data.train_scene = " << data.train_scene << "\n";
  os << "data.train_handwritten = " << data.train_handwritten << "\n";
  os << "data.eval_document = " << data.eval_document << "\n";
  os << "data.eval_scene = " << data.eval_scene << "\n";
  os << "data.eval_handwritten = " << data.eval_handwritten << "\n";
  os << "data.augment = " << (data.augment ? "true" : "false") << "\n\n";
  os << "synth.samples_train = " << synth.samples_train << "\n";
  os << "synth.samples_eval = " << synth.samples_eval << "\n";
  os << "synth.prop_document = " << fmt_double(synth.prop_document) << "\n";
  os << "synth.prop_scene = " << fmt_double(synth.prop_scene) << "\n";
  os << "synth.prop_handwritten = " << fmt_double(synth.prop_handwritten) << "\n";
  os << "synth.words_min = " << synth.words_min << "\n";
  os << "synth.words_max = " << synth.words_max << "\n";
  os << "synth.lexicon = " << synth.lexicon << "\n\n";
  std::string vars;
  for (size_t i = 0; i < ablate.variants.size(); ++i) {
    if (i) vars += ",";
    vars += ablate.variants[i];
  }
  std::string seeds;
  for (size_t i = 0; i < ablate.seeds.size(); ++i) {
    if (i) seeds += ",";
    seeds += std::to_string(ablate.seeds[i]);
  }
  os << "ablate.variants = " << vars << "\n";
  os << "ablate.seeds = " << seeds << "\n";
  os << "ablate.decoder = " << ablate.decoder << "\n";
  return os.str();
}

}  // namespace uktr
