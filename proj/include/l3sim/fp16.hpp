/* Copyright 2026 the l3sim authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

namespace l3sim {

// IEEE 754 binary16 round-trip through float, round-to-nearest-even.
// Used to emulate fp16 arithmetic: every intermediate op result is squeezed
// through this.
inline std::uint16_t float_to_half_bits(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  std::uint32_t exp = (x >> 23) & 0xffu;
  std::uint32_t frac = x & 0x7fffffu;

  if (exp == 0xff) return static_cast<std::uint16_t>(sign | 0x7c00u | (frac ? 0x200u : 0));
  // Re-bias 127 -> 15.
  std::int32_t e = static_cast<std::int32_t>(exp) - 127 + 15;
  if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow -> inf
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);  // underflow -> zero
    // Subnormal: shift in the implicit bit, round to nearest even.
    frac |= 0x800000u;
    const std::uint32_t shift = static_cast<std::uint32_t>(14 - e);
    std::uint32_t half = frac >> shift;
    const std::uint32_t rem = frac & ((1u << shift) - 1);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half & 1))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (frac >> 13);
  const std::uint32_t rem = frac & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1))) ++half;  // may carry into exponent
  return static_cast<std::uint16_t>(sign | half);
}

inline float half_bits_to_float(std::uint16_t h) {
  const std::uint32_t sign = (std::uint32_t(h) & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t frac = h & 0x3ffu;
  std::uint32_t x;
  if (exp == 0x1f) {
    x = sign | 0x7f800000u | (frac << 13);
  } else if (exp == 0) {
    if (frac == 0) {
      x = sign;
    } else {
      // Normalize the subnormal.
      exp = 127 - 15 + 1;
      while ((frac & 0x400u) == 0) {
        frac <<= 1;
        --exp;
      }
      frac &= 0x3ffu;
      x = sign | (exp << 23) | (frac << 13);
    }
  } else {
    x = sign | ((exp - 15 + 127) << 23) | (frac << 13);
  }
  float f;
  std::memcpy(&f, &x, 4);
  return f;
}

inline double round_fp16(double v) {
  return static_cast<double>(half_bits_to_float(float_to_half_bits(static_cast<float>(v))));
}

}  // namespace l3sim
