// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uktr {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrCode : int {
  kUsage = 1,    // bad arguments, malformed config, unknown keys
  kData = 2,     // missing/duplicate/undecodable data files
  kNumeric = 3,  // NaN loss or other numeric failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrCode code() const { return code_; }

 private:
  ErrCode code_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) {
  throw Error(ErrCode::kUsage, msg);
}
[[noreturn]] inline void fail_data(const std::string& msg) {
  throw Error(ErrCode::kData, msg);
}
[[noreturn]] inline void fail_numeric(const std::string& msg) {
  throw Error(ErrCode::kNumeric, msg);
}

}  // namespace uktr
