// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uktr {

// Minimal UTF-8 <-> codepoint conversion. Invalid bytes decode one at a time
// to 0xDC00|byte (surrogate escape), so encode(decode(s)) == s for any input.
std::vector<uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<uint32_t>& cps);
std::string utf8_encode_one(uint32_t cp);

// Number of codepoints in a UTF-8 string.
size_t utf8_length(const std::string& s);

}  // namespace uktr
