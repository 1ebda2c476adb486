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

#ifndef DFX_QUANT_PARAMS_HPP_
#define DFX_QUANT_PARAMS_HPP_

#include <cstdint>
#include <vector>

namespace dfx {

enum class Granularity : std::uint8_t { kPerLayer = 0, kPerChannel = 1 };

// Largest code of the symmetric k-bit range; the most negative code
// -2^(k-1) is never produced so negation cannot overflow.
constexpr int qmax_for_bits(int bits) { return (1 << (bits - 1)) - 1; }

// Parameters of the symmetric uniform quantizer. One threshold per group:
// a single group for per-layer, one per channel for per-channel.
struct QuantParams {
  int bits = 8;
  Granularity granularity = Granularity::kPerLayer;
  std::vector<double> thresholds{1.0};
  std::vector<double> deltas{1.0 / 127.0};

  // Builds params from thresholds, deriving delta = t / (2^(k-1) - 1).
  // Throws ParamError on an unsupported bit width or non-positive t.
  static QuantParams from_thresholds(int bits, Granularity granularity,
                                     std::vector<double> thresholds);
  static QuantParams per_layer(int bits, double threshold);
  // Unit step (delta = 1), handy for integer-only fixtures.
  static QuantParams unit(int bits);
  // Per-layer params with the given step; threshold = delta * qmax.
  static QuantParams from_delta(int bits, double delta);

  int qmax() const { return qmax_for_bits(bits); }
  std::size_t groups() const { return thresholds.size(); }
  // Delta applying to channel `c` (per-layer params ignore `c`).
  double delta_for(std::int64_t c) const {
    return granularity == Granularity::kPerLayer ? deltas[0]
                                                 : deltas[static_cast<std::size_t>(c)];
  }
  double threshold_for(std::int64_t c) const {
    return granularity == Granularity::kPerLayer ? thresholds[0]
                                                 : thresholds[static_cast<std::size_t>(c)];
  }
  void validate(std::int64_t channels) const;

  bool operator==(const QuantParams&) const = default;
};

}  // namespace dfx

#endif  // DFX_QUANT_PARAMS_HPP_
