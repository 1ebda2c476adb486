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

#ifndef DFX_QUANT_HPP_
#define DFX_QUANT_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dfx/quant_params.hpp"
#include "dfx/tensor.hpp"

namespace dfx {

// Fixed-point rescale of the quantization unit. One entry per output
// channel; a single entry broadcasts over channels. The real factor
// multiplier[c] * 2^-shift[c] maps accumulator units to output codes.
struct RequantParams {
  std::vector<std::int32_t> multiplier{1 << 30};
  std::vector<int> shift{30};
  std::vector<std::int32_t> bias{0};
  // Step of the 8-bit output activation codes.
  double out_delta = 1.0;

  std::size_t channels() const { return multiplier.size(); }
  std::int32_t multiplier_for(std::int64_t c) const {
    return multiplier.size() == 1 ? multiplier[0] : multiplier[static_cast<std::size_t>(c)];
  }
  int shift_for(std::int64_t c) const {
    return shift.size() == 1 ? shift[0] : shift[static_cast<std::size_t>(c)];
  }
  std::int32_t bias_for(std::int64_t c) const {
    return bias.size() == 1 ? bias[0] : bias[static_cast<std::size_t>(c)];
  }
  // Real rescale factor of channel `c`.
  double factor(std::int64_t c) const;
  // Throws ParamError on out-of-range shifts/multipliers or when the
  // per-channel vectors disagree with `channels`.
  void validate(std::int64_t channels) const;

  // Multiplier 2^30, shift 30: a factor of exactly one.
  static RequantParams identity(std::int64_t channels = 1);

  bool operator==(const RequantParams&) const = default;
};

// Round half away from zero (the quantizer's rounding operator).
double round_half_away(double x);

// Elementwise clamp(x, -t, t). `thresholds` has one entry (per-layer) or
// one entry per channel. Throws ParamError on t <= 0 or a group mismatch.
FloatTensor clamp_threshold(const FloatTensor& x, std::span<const double> thresholds);

// Codes round(clamp(x, -t, t) / delta) in the symmetric k-bit range.
QuantTensor quantize(const FloatTensor& x, const QuantParams& qp);

// delta * code, elementwise. Storing the level as float can move it by
// half a float ulp, which may exceed delta/2 for inputs near a rounding
// boundary; dequantize_value keeps the level in double.
FloatTensor dequantize(const QuantTensor& q);
double dequantize_value(std::int32_t code, double delta);

struct CalibrationOptions {
  // Unset: max-abs policy. Set: t is this percentile (0, 100] of |x|.
  std::optional<double> percentile;
};

// Per-group thresholds from calibration samples (channel axis for
// per-channel). A group whose samples are all zero falls back to t = 1.
QuantParams calibrate(std::span<const FloatTensor> samples, int bits,
                      Granularity granularity,
                      const CalibrationOptions& options = {});

// Splits `factor` into multiplier in [2^30, 2^31) and shift in [0, 63].
// Throws ParamError if the factor is not positive or needs a shift
// outside that range.
void quantize_multiplier(double factor, std::int32_t* multiplier, int* shift);

// Rescale from an accumulator of in_delta * w_delta[c] units into codes of
// step out_delta, plus the folded bias round(bias_fp[c] / out_delta).
// `w_deltas` and `bias_fp` have one entry or one per output channel.
RequantParams derive_requant(double in_delta, std::span<const double> w_deltas,
                             double out_delta, std::span<const double> bias_fp);

// round_shift(acc * M, s) with rounding half up in the shifted domain.
std::int64_t round_shift_mul(std::int32_t acc, std::int32_t multiplier, int shift);

struct RequantOptions {
  // max(0, .) after saturation (folded ReLU).
  bool relu = false;
};

// clamp_int8(round_shift(acc * M, s) + bias) with the output activation
// step `rp.out_delta` attached to the result.
QuantTensor requantize(const AccumTensor& acc, const RequantParams& rp,
                       const RequantOptions& options = {});

// Single-value form of `requantize` shared by the kernels.
std::int32_t requantize_value(std::int32_t acc, std::int32_t multiplier, int shift,
                              std::int32_t bias, bool relu);

// Literal "keep the lower 8 bits" behaviour of the hardware quantization
// unit: the scaled value wraps modulo 256 into [-128, 127]. Kept for
// study; the values may include -128 so they do not form a QuantTensor.
Tensor<std::int32_t> requantize_truncate_lower8(const AccumTensor& acc,
                                                const RequantParams& rp);

}  // namespace dfx

#endif  // DFX_QUANT_HPP_
