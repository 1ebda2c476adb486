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

#ifndef DFX_ORACLE_HPP_
#define DFX_ORACLE_HPP_

#include "dfx/ops.hpp"
#include "dfx/quant.hpp"
#include "dfx/tensor.hpp"

// Scalar-loop reference implementations of the integer kernels. They are
// written straight from the arithmetic definitions with 128-bit
// intermediates and share no code with the optimized kernels; golden
// vectors and equivalence tests compare against them.
namespace dfx::oracle {

// clamp(floor((acc * M + 2^(s-1)) / 2^s) + bias, -127, 127), then ReLU.
std::int32_t requantize_value(std::int32_t acc, std::int32_t multiplier, int shift,
                              std::int32_t bias, bool relu);
QuantTensor requantize(const AccumTensor& acc, const RequantParams& rp, bool relu);

QuantTensor conv1x1(const QuantTensor& x, const QuantTensor& w, const RequantParams& rp,
                    bool relu);

// Regular 3x3 depthwise convolution, padding 1.
QuantTensor dw3x3(const QuantTensor& x, const QuantTensor& w, int stride,
                  const RequantParams& rp, bool relu);

// 3x3 depthwise deformable convolution over integer offsets (bounded,
// free-integer or square), padding 1.
QuantTensor deform_dw3x3(const QuantTensor& x, const QuantTensor& w, const OffsetField& off,
                         int stride, const RequantParams& rp, bool relu);

// Square offsets: requantized code times the offset unit, rounded half
// away from zero, clamped into [max(lo, 0), hi].
OffsetField offset_gen_square(const QuantTensor& x, const QuantTensor& w_off,
                              const RequantParams& rp, int lo, int hi);

QuantTensor maxpool2x2(const QuantTensor& x);
QuantTensor upsample2x(const QuantTensor& x);
// Two-group shuffle: output channel 2*j + g takes input channel g*C/2 + j.
QuantTensor shuffle2(const QuantTensor& x);

}  // namespace dfx::oracle

#endif  // DFX_ORACLE_HPP_
