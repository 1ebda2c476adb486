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

#include "dfx/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dfx {

namespace {

void check_bits(int bits) {
  if (bits != 4 && bits != 8) {
    throw ParamError("unsupported bit width " + std::to_string(bits) +
                     " (expected 4 or 8)");
  }
}

std::size_t group_index(std::size_t groups, std::int64_t c) {
  return groups == 1 ? 0 : static_cast<std::size_t>(c);
}

void check_groups(std::size_t groups, std::int64_t channels, const char* what) {
  if (groups != 1 && static_cast<std::int64_t>(groups) != channels) {
    throw ParamError(std::string(what) + ": " + std::to_string(groups) +
                     " groups for " + std::to_string(channels) + " channels");
  }
}

}  // namespace

QuantParams QuantParams::from_thresholds(int bits, Granularity granularity,
                                         std::vector<double> thresholds) {
  check_bits(bits);
  if (thresholds.empty()) throw ParamError("no quantization thresholds");
  if (granularity == Granularity::kPerLayer && thresholds.size() != 1) {
    throw ParamError("per-layer quantization takes exactly one threshold");
  }
  QuantParams qp;
  qp.bits = bits;
  qp.granularity = granularity;
  qp.deltas.resize(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0) || !std::isfinite(thresholds[i])) {
      throw ParamError("threshold must be positive and finite, got " +
                       std::to_string(thresholds[i]));
    }
    qp.deltas[i] = thresholds[i] / qmax_for_bits(bits);
  }
  qp.thresholds = std::move(thresholds);
  return qp;
}

QuantParams QuantParams::per_layer(int bits, double threshold) {
  return from_thresholds(bits, Granularity::kPerLayer, {threshold});
}

QuantParams QuantParams::unit(int bits) {
  return per_layer(bits, static_cast<double>(qmax_for_bits(bits)));
}

QuantParams QuantParams::from_delta(int bits, double delta) {
  check_bits(bits);
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ParamError("delta must be positive");
  QuantParams qp;
  qp.bits = bits;
  qp.granularity = Granularity::kPerLayer;
  qp.thresholds = {delta * qmax_for_bits(bits)};
  qp.deltas = {delta};
  return qp;
}

void QuantParams::validate(std::int64_t channels) const {
  check_bits(bits);
  if (thresholds.size() != deltas.size() || thresholds.empty()) {
    throw ParamError("threshold/delta group counts differ");
  }
  if (granularity == Granularity::kPerLayer && thresholds.size() != 1) {
    throw ParamError("per-layer params must have one group");
  }
  if (granularity == Granularity::kPerChannel &&
      static_cast<std::int64_t>(thresholds.size()) != channels) {
    throw ParamError("per-channel params have " + std::to_string(thresholds.size()) +
                     " groups for " + std::to_string(channels) + " channels");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0) || !(deltas[i] > 0.0)) {
      throw ParamError("thresholds and deltas must be positive");
    }
  }
}

double RequantParams::factor(std::int64_t c) const {
  return std::ldexp(static_cast<double>(multiplier_for(c)), -shift_for(c));
}

void RequantParams::validate(std::int64_t channels) const {
  for (const auto size : {multiplier.size(), shift.size(), bias.size()}) {
    if (size == 0) throw ParamError("empty requantization params");
    check_groups(size, channels, "requant params");
  }
  for (std::int32_t m : multiplier) {
    if (m < 0) throw ParamError("requant multiplier must be non-negative");
  }
  for (int s : shift) {
    if (s < 0 || s > 63) {
      throw ParamError("requant shift " + std::to_string(s) + " outside [0, 63]");
    }
  }
  if (!(out_delta > 0.0)) throw ParamError("output delta must be positive");
}

RequantParams RequantParams::identity(std::int64_t channels) {
  RequantParams rp;
  const auto n = static_cast<std::size_t>(channels);
  rp.multiplier.assign(n, 1 << 30);
  rp.shift.assign(n, 30);
  rp.bias.assign(n, 0);
  return rp;
}

double round_half_away(double x) { return std::round(x); }

FloatTensor clamp_threshold(const FloatTensor& x, std::span<const double> thresholds) {
  if (thresholds.empty()) throw ParamError("no clamp thresholds");
  check_groups(thresholds.size(), x.shape().c, "clamp");
  for (double t : thresholds) {
    if (!(t > 0.0)) throw ParamError("clamp threshold must be positive");
  }
  FloatTensor out = x;
  auto data = out.data();
  const std::int64_t channels = x.shape().c;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double t = thresholds[group_index(thresholds.size(),
                                            static_cast<std::int64_t>(i) % channels)];
    data[i] = static_cast<float>(std::clamp(static_cast<double>(data[i]), -t, t));
  }
  return out;
}

QuantTensor quantize(const FloatTensor& x, const QuantParams& qp) {
  qp.validate(x.shape().c);
  const int q = qp.qmax();
  const std::int64_t channels = x.shape().c;
  auto src = x.data();
  std::vector<std::int8_t> codes(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::int64_t c = static_cast<std::int64_t>(i) % channels;
    const double t = qp.threshold_for(c);
    const double clamped = std::clamp(static_cast<double>(src[i]), -t, t);
    const double code = round_half_away(clamped / qp.delta_for(c));
    codes[i] = static_cast<std::int8_t>(std::clamp(code, -double(q), double(q)));
  }
  return QuantTensor(x.shape(), qp.bits, qp, std::move(codes));
}

FloatTensor dequantize(const QuantTensor& q) {
  const QuantParams& qp = q.qparams();
  const std::int64_t channels = q.shape().c;
  auto codes = q.codes();
  std::vector<float> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::int64_t c = static_cast<std::int64_t>(i) % channels;
    out[i] = static_cast<float>(dequantize_value(codes[i], qp.delta_for(c)));
  }
  return FloatTensor(q.shape(), std::move(out));
}

double dequantize_value(std::int32_t code, double delta) { return delta * code; }

QuantParams calibrate(std::span<const FloatTensor> samples, int bits,
                      Granularity granularity, const CalibrationOptions& options) {
  check_bits(bits);
  if (samples.empty()) throw ParamError("calibration needs at least one sample");
  const std::int64_t channels = samples.front().shape().c;
  const std::size_t groups =
      granularity == Granularity::kPerLayer ? 1 : static_cast<std::size_t>(channels);
  for (const auto& s : samples) {
    if (granularity == Granularity::kPerChannel && s.shape().c != channels) {
      throw ShapeError("calibration samples disagree on channel count");
    }
  }

  std::vector<double> thresholds(groups, 0.0);
  if (!options.percentile) {
    for (const auto& s : samples) {
      auto data = s.data();
      const std::int64_t c_dim = s.shape().c;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t g = group_index(groups, static_cast<std::int64_t>(i) % c_dim);
        thresholds[g] = std::max(thresholds[g], std::fabs(static_cast<double>(data[i])));
      }
    }
  } else {
    const double p = *options.percentile;
    if (!(p > 0.0 && p <= 100.0)) throw ParamError("percentile must be in (0, 100]");
    std::vector<std::vector<double>> mags(groups);
    for (const auto& s : samples) {
      auto data = s.data();
      const std::int64_t c_dim = s.shape().c;
      for (std::size_t i = 0; i < data.size(); ++i) {
        mags[group_index(groups, static_cast<std::int64_t>(i) % c_dim)].push_back(
            std::fabs(static_cast<double>(data[i])));
      }
    }
    for (std::size_t g = 0; g < groups; ++g) {
      auto& m = mags[g];
      if (m.empty()) continue;
      // Nearest-rank percentile.
      auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(m.size())));
      rank = std::clamp<std::size_t>(rank, 1, m.size());
      std::nth_element(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(rank - 1), m.end());
      thresholds[g] = m[rank - 1];
    }
  }
  for (double& t : thresholds) {
    if (!(t > 0.0)) t = 1.0;
  }
  return QuantParams::from_thresholds(bits, granularity, std::move(thresholds));
}

void quantize_multiplier(double factor, std::int32_t* multiplier, int* shift) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ParamError("rescale factor must be positive and finite");
  }
  int exponent = 0;
  const double mantissa = std::frexp(factor, &exponent);  // [0.5, 1)
  auto m = static_cast<std::int64_t>(std::llround(std::ldexp(mantissa, 31)));
  int s = 31 - exponent;
  if (m == (std::int64_t{1} << 31)) {
    m >>= 1;
    --s;
  }
  if (s < 0) throw ParamError("rescale factor too large for a 32-bit multiplier");
  if (s > 63) throw ParamError("rescale factor underflows the multiplier");
  *multiplier = static_cast<std::int32_t>(m);
  *shift = s;
}

RequantParams derive_requant(double in_delta, std::span<const double> w_deltas,
                             double out_delta, std::span<const double> bias_fp) {
  if (!(in_delta > 0.0) || !(out_delta > 0.0)) {
    throw ParamError("activation deltas must be positive");
  }
  if (w_deltas.empty()) throw ParamError("no weight deltas");
  const std::size_t channels = std::max(w_deltas.size(), bias_fp.size());
  if ((w_deltas.size() != 1 && w_deltas.size() != channels) ||
      (!bias_fp.empty() && bias_fp.size() != 1 && bias_fp.size() != channels)) {
    throw ParamError("weight deltas and biases disagree on channel count");
  }
  RequantParams rp;
  rp.out_delta = out_delta;
  rp.multiplier.resize(channels);
  rp.shift.resize(channels);
  rp.bias.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double wd = w_deltas[w_deltas.size() == 1 ? 0 : c];
    if (!(wd > 0.0)) throw ParamError("weight delta must be positive");
    quantize_multiplier(in_delta * wd / out_delta, &rp.multiplier[c], &rp.shift[c]);
    const double b = bias_fp.empty() ? 0.0 : bias_fp[bias_fp.size() == 1 ? 0 : c];
    const double q = round_half_away(b / out_delta);
    rp.bias[c] = static_cast<std::int32_t>(
        std::clamp(q, double(std::numeric_limits<std::int32_t>::min()),
                   double(std::numeric_limits<std::int32_t>::max())));
  }
  return rp;
}

std::int64_t round_shift_mul(std::int32_t acc, std::int32_t multiplier, int shift) {
  const std::int64_t prod = static_cast<std::int64_t>(acc) * multiplier;
  if (shift == 0) return prod;
  // Arithmetic right shift: floor((prod + 2^(s-1)) / 2^s).
  return (prod + (std::int64_t{1} << (shift - 1))) >> shift;
}

std::int32_t requantize_value(std::int32_t acc, std::int32_t multiplier, int shift,
                              std::int32_t bias, bool relu) {
  std::int64_t v = round_shift_mul(acc, multiplier, shift) + bias;
  v = std::clamp<std::int64_t>(v, -127, 127);
  if (relu && v < 0) v = 0;
  return static_cast<std::int32_t>(v);
}

QuantTensor requantize(const AccumTensor& acc, const RequantParams& rp,
                       const RequantOptions& options) {
  const std::int64_t channels = acc.shape().c;
  rp.validate(channels);
  auto src = acc.data();
  std::vector<std::int8_t> codes(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::int64_t c = static_cast<std::int64_t>(i) % channels;
    codes[i] = static_cast<std::int8_t>(requantize_value(
        src[i], rp.multiplier_for(c), rp.shift_for(c), rp.bias_for(c), options.relu));
  }
  return QuantTensor(acc.shape(), 8, QuantParams::from_delta(8, rp.out_delta),
                     std::move(codes));
}

Tensor<std::int32_t> requantize_truncate_lower8(const AccumTensor& acc,
                                                const RequantParams& rp) {
  const std::int64_t channels = acc.shape().c;
  rp.validate(channels);
  auto src = acc.data();
  std::vector<std::int32_t> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::int64_t c = static_cast<std::int64_t>(i) % channels;
    const std::int64_t v = round_shift_mul(src[i], rp.multiplier_for(c), rp.shift_for(c)) +
                           rp.bias_for(c);
    out[i] = static_cast<std::int8_t>(static_cast<std::uint8_t>(v & 0xFF));
  }
  return Tensor<std::int32_t>(acc.shape(), std::move(out));
}

}  // namespace dfx
