/* Copyright 2026 the DMF authors
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

#include "dmf/pi.hpp"

#include <cstdint>
#include <vector>

#include "dmf/error.hpp"

namespace dmf {

namespace {

// Fixed-point decimal, base 10^9 per limb. limbs[0] is the integer part;
// limbs[1..] hold the fraction, most significant first.
constexpr std::uint64_t kBase = 1'000'000'000;

using Fixed = std::vector<std::uint64_t>;

// In-place a /= d. d * kBase must fit in 64 bits, so d < ~1.8e10.
void div_small(Fixed& a, std::uint64_t d) {
  std::uint64_t rem = 0;
  for (auto& limb : a) {
    const std::uint64_t cur = rem * kBase + limb;
    limb = cur / d;
    rem = cur % d;
  }
}

// In-place a += b; a and b must be the same length. pi < 4, no overflow
// out of the integer limb.
void add(Fixed& a, const Fixed& b) {
  std::uint64_t carry = 0;
  for (std::size_t i = a.size(); i-- > 0;) {
    const std::uint64_t sum = a[i] + b[i] + carry;
    a[i] = sum % kBase;
    carry = sum / kBase;
  }
}

// In-place a -= b; requires a >= b.
void sub(Fixed& a, const Fixed& b) {
  std::uint64_t borrow = 0;
  for (std::size_t i = a.size(); i-- > 0;) {
    const std::uint64_t need = b[i] + borrow;
    if (a[i] >= need) {
      a[i] -= need;
      borrow = 0;
    } else {
      a[i] = a[i] + kBase - need;
      borrow = 1;
    }
  }
}

bool is_zero(const Fixed& a) {
  for (const auto limb : a) {
    if (limb != 0) return false;
  }
  return true;
}

// atan(1/x) scaled by `scale`, to `limbs` fixed-point limbs.
Fixed scaled_arctan_inverse(std::uint64_t scale, std::uint64_t x, std::size_t limbs) {
  Fixed sum(limbs, 0);
  Fixed term(limbs, 0);
  Fixed tmp(limbs, 0);
  term[0] = scale;
  div_small(term, x);
  add(sum, term);
  const std::uint64_t x2 = x * x;
  bool negative = true;
  for (std::uint64_t k = 3; !is_zero(term); k += 2, negative = !negative) {
    div_small(term, x2);
    tmp = term;
    div_small(tmp, k);
    if (negative) {
      sub(sum, tmp);
    } else {
      add(sum, tmp);
    }
  }
  return sum;
}

}  // namespace

std::string pi_digits(int n) {
  if (n < 1 || n > 10'000) {
    throw Error(ErrorCode::Invalid,
                "argument error: pi_digits requires 1 <= n <= 10000, got " +
                    std::to_string(n));
  }
  const std::size_t guard_digits = static_cast<std::size_t>(n) + 10;
  const std::size_t limbs = 1 + (guard_digits + 8) / 9;

  Fixed pi = scaled_arctan_inverse(16, 5, limbs);
  const Fixed correction = scaled_arctan_inverse(4, 239, limbs);
  sub(pi, correction);

  std::string digits;
  digits.reserve(limbs * 9);
  for (std::size_t i = 1; i < limbs; ++i) {
    std::string chunk = std::to_string(pi[i]);
    digits.append(9 - chunk.size(), '0');
    digits += chunk;
  }
  return "3." + digits.substr(0, static_cast<std::size_t>(n));
}

}  // namespace dmf
