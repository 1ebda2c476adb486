/* Copyright 2026 The dfx Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DFX_TESTS_TEST_UTIL_HPP_
#define DFX_TESTS_TEST_UTIL_HPP_

#include <cstdint>
#include <random>
#include <vector>

#include "dfx/ops.hpp"
#include "dfx/tensor.hpp"

namespace dfx::testing {

inline FloatTensor random_float(std::mt19937_64& rng, const Shape4& s, float lo = -1.0F,
                                float hi = 1.0F) {
  std::uniform_real_distribution<float> dist(lo, hi);
  FloatTensor t(s);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

inline QuantTensor random_codes(std::mt19937_64& rng, const Shape4& s, int bits,
                                QuantParams qp = QuantParams{}) {
  if (qp.bits != bits) qp = QuantParams::unit(bits);
  const int q = qmax_for_bits(bits);
  std::uniform_int_distribution<int> dist(-q, q);
  std::vector<std::int8_t> codes(static_cast<std::size_t>(s.count()));
  for (auto& c : codes) c = static_cast<std::int8_t>(dist(rng));
  return QuantTensor(s, bits, qp, std::move(codes));
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline OffsetField random_square(std::mt19937_64& rng, std::int64_t n, std::int64_t h,
                                 std::int64_t w, int hi) {
  OffsetField f = OffsetField::zeros(OffsetMode::kSquare, n, h, w, 0, hi);
  for (auto& d : f.ints) d = uniform_int(rng, 0, hi);
  return f;
}

inline OffsetField random_bounded(std::mt19937_64& rng, std::int64_t n, std::int64_t h,
                                  std::int64_t w, int lo, int hi) {
  OffsetField f = OffsetField::zeros(OffsetMode::kBoundedInt, n, h, w, lo, hi);
  for (auto& d : f.ints) d = uniform_int(rng, lo, hi);
  return f;
}

// Random requantization params with factors spread over a few decades.
inline RequantParams random_requant(std::mt19937_64& rng, std::int64_t channels) {
  RequantParams rp;
  rp.multiplier.resize(static_cast<std::size_t>(channels));
  rp.shift.resize(static_cast<std::size_t>(channels));
  rp.bias.resize(static_cast<std::size_t>(channels));
  for (std::int64_t c = 0; c < channels; ++c) {
    const auto i = static_cast<std::size_t>(c);
    rp.multiplier[i] = static_cast<std::int32_t>(
        std::uniform_int_distribution<std::int64_t>(1LL << 30, (1LL << 31) - 1)(rng));
    rp.shift[i] = uniform_int(rng, 31, 44);
    rp.bias[i] = uniform_int(rng, -40, 40);
  }
  return rp;
}

}  // namespace dfx::testing

#endif  // DFX_TESTS_TEST_UTIL_HPP_
