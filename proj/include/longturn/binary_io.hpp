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

// Little-endian binary encoding helpers shared by the on-disk formats.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "longturn/common.hpp"

namespace longturn::io {

template <typename T>
void WriteLE(std::ostream& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  static_assert(sizeof(T) == sizeof(U));
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  out.write(buf, sizeof(U));
}

template <typename T>
T ReadLE(std::istream& in) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw Error("unexpected end of binary stream");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(buf[i]) << (8 * i);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

inline void WriteString(std::ostream& out, const std::string& s) {
  WriteLE<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string ReadString(std::istream& in) {
  const auto n = ReadLE<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw Error("corrupt string length in binary stream");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw Error("unexpected end of binary stream");
  }
  return s;
}

inline void WriteMagic(std::ostream& out, const char (&magic)[9]) {
  out.write(magic, 8);
}

inline void ExpectMagic(std::istream& in, const char (&magic)[9],
                        const std::string& what) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw Error("not a " + what + " file (bad magic)");
  }
}

}  // namespace longturn::io
