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

#include "longturn/text.hpp"

#include <algorithm>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "longturn/common.hpp"

namespace longturn {
namespace {

bool IsCjk(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  const UScriptCode script = uscript_getScript(c, &status);
  if (U_FAILURE(status)) return false;
  return script == USCRIPT_HAN || script == USCRIPT_HIRAGANA ||
         script == USCRIPT_KATAKANA;
}

bool IsWordChar(UChar32 c) {
  if (c == '_') return true;
  if (u_hasBinaryProperty(c, UCHAR_ALPHABETIC)) return true;
  const auto mask = U_GET_GC_MASK(c);
  return (mask & (U_GC_ND_MASK | U_GC_NL_MASK | U_GC_NO_MASK | U_GC_M_MASK)) !=
         0;
}

void AppendUtf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, c, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::string Normalize(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");

  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString composed = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");

  std::string utf8;
  composed.toUTF8String(utf8);

  std::string out;
  out.reserve(utf8.size());
  bool pending_space = false;
  int32_t i = 0;
  const auto n = static_cast<int32_t>(utf8.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(utf8.data(), i, n, c);
    if (c < 0) c = 0xfffd;
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    AppendUtf8(out, c);
  }
  return out;
}

Tokens Tokenize(std::string_view text) {
  Tokens tokens;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(std::move(word));
      word.clear();
    }
  };
  int32_t i = 0;
  const auto n = static_cast<int32_t>(text.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(text.data(), i, n, c);
    if (c < 0) {
      flush();
      continue;
    }
    if (IsCjk(c)) {
      flush();
      std::string single;
      AppendUtf8(single, c);
      tokens.push_back(std::move(single));
    } else if (IsWordChar(c)) {
      AppendUtf8(word, u_tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::size_t LcsLength(std::span<const std::string> a,
                      std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  if (a.size() < b.size()) std::swap(a, b);
  // run[j] = length of the common run ending at a[i-1], b[j-1]
  std::vector<std::size_t> run(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = run[j];
      run[j] = (a[i - 1] == b[j - 1]) ? diag + 1 : 0;
      best = std::max(best, run[j]);
      diag = up;
    }
  }
  return best;
}

}  // namespace longturn
