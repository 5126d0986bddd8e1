// Copyright 2026 The Longturn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace longturn {

using Tokens = std::vector<std::string>;

// Reserved token placed between utterances when a session is flattened into
// one token stream. The tokenizer never produces it.
inline constexpr std::string_view kSeparatorToken = "[SEP]";

// Unicode NFC, trimmed, with every internal whitespace run collapsed to a
// single ASCII space. Idempotent.
std::string Normalize(std::string_view text);

// Lowercased tokens. Han, Hiragana and Katakana codepoints become
// single-character tokens; maximal runs of other word characters (letters,
// digits, marks, underscore) become word tokens; everything else separates.
Tokens Tokenize(std::string_view text);

// Length of the longest contiguous run of tokens shared by `a` and `b`
// (longest common substring over tokens). 0 if either is empty.
std::size_t LcsLength(std::span<const std::string> a,
                      std::span<const std::string> b);

}  // namespace longturn
