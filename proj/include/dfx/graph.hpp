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

#ifndef DFX_GRAPH_HPP_
#define DFX_GRAPH_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfx/ops.hpp"
#include "dfx/quant.hpp"
#include "dfx/tensor.hpp"

namespace dfx {

// The complete operator set of the network. ReLU is folded into the
// requantization of the producing convolution.
enum class LayerKind : std::uint8_t {
  kConv1x1,
  kDw3x3,
  kDw3x3Deform,
  kFull3x3First,
  kMaxpool2x2,
  kUpsample2xNearest,
  kSplitHalf,
  kConcat,
  kShuffle,
};

const char* to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view name);

// Output `port` of node `node`; node -1 is the graph input.
struct ValueRef {
  int node = -1;
  int port = 0;
  bool operator==(const ValueRef&) const = default;
};

struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::kConv1x1;
  std::vector<ValueRef> inputs;
  ConvSpec spec;
  Shape4 in_shape;
  Shape4 out_shape;  // per port; both halves of a split share it
  bool relu = false;

  // Float master weights (HWIO) and biases.
  FloatTensor weights;
  std::vector<float> bias;
  // Deformable nodes only: the 1x1 square-offset generator (ic -> 1).
  FloatTensor offset_weights;
  std::vector<float> offset_bias;

  // Filled by quantize_graph.
  QuantTensor qweights;
  RequantParams requant;
  QuantTensor qoffset_weights;
  RequantParams offset_requant;

  bool has_weights() const;
  int ports() const { return kind == LayerKind::kSplitHalf ? 2 : 1; }
  std::int64_t in_channels() const { return in_shape.c; }
  std::int64_t out_channels() const { return out_shape.c; }
};

enum class Downsample : std::uint8_t { kStride4, kStride2MaxPool };

struct NetConfig {
  char id = 'c';
  std::int64_t resolution = 512;
  Downsample downsample = Downsample::kStride4;
  int width_mult = 1;
};

// Throws ParamError for ids outside a..e.
NetConfig config_for(char id);

struct NetworkGraph {
  NetConfig config;
  int classes = 20;
  int output_stride = 4;  // R
  int head_dim = 64;      // D
  int offset_hi = 7;      // square displacement range [0, offset_hi]
  std::vector<LayerNode> nodes;
  // Heatmap, size and offset head outputs.
  std::array<ValueRef, 3> heads{};
  Shape4 input_shape{1, 1, 1, 3};
  // Step of the 8-bit input image codes.
  double input_delta = 1.0 / 128.0;
  bool quantized = false;

  int find(std::string_view name) const;  // -1 if absent
  const Shape4& shape_of(ValueRef v) const;
};

// Incremental construction with seeded random weights. Weights are
// uniform with a fan-in scaled range; biases are small.
class GraphBuilder {
 public:
  GraphBuilder(const Shape4& input_shape, std::uint64_t seed);

  ValueRef input() const { return {}; }
  ValueRef full3x3_first(ValueRef x, std::int64_t oc, int stride);
  ValueRef conv1x1(ValueRef x, std::int64_t oc, bool relu);
  ValueRef dw3x3(ValueRef x, int stride);
  ValueRef dw3x3_deform(ValueRef x, bool relu);
  ValueRef maxpool2x2(ValueRef x);
  ValueRef upsample2x(ValueRef x);
  std::array<ValueRef, 2> split_half(ValueRef x);
  ValueRef concat(ValueRef a, ValueRef b);
  ValueRef shuffle(ValueRef x);

  // Validates with lint() and hands over the graph.
  NetworkGraph finish(std::array<ValueRef, 3> heads, int classes);

  NetworkGraph& graph() { return g_; }

 private:
  LayerNode& add(LayerKind kind, std::vector<ValueRef> inputs, const Shape4& out);
  FloatTensor random_weights(const Shape4& shape, std::int64_t fan_in, double gain);
  std::vector<float> random_bias(std::int64_t n, double center, double spread);

  NetworkGraph g_;
  std::mt19937_64 rng_;
  int counter_ = 0;
};

// Full network for config a..e with `classes` heatmap channels.
NetworkGraph build_codenet(char config, int classes = 20, std::uint64_t seed = 1);

// Structural checks: operator set, topological order, shape bookkeeping,
// channel rules and head widths. Throws FormatError naming the node.
void lint(const NetworkGraph& g);

struct FloatHeads {
  FloatTensor heatmap;  // sigmoid applied
  FloatTensor size;
  FloatTensor offset;
};

struct FloatRunOptions {
  // Use dequantized 4-bit weights (requires a quantized graph).
  bool dequantized_weights = false;
  // Record every node output (needed for calibration).
  bool keep_activations = false;
};

struct FloatRun {
  FloatHeads heads;
  // activations[node][port], when kept.
  std::vector<std::vector<FloatTensor>> activations;
  // Real offset-generator output of each deformable node (empty elsewhere).
  std::vector<FloatTensor> offsets;
};

// Real-valued execution of the graph; `image` is (1, H, W, 3).
FloatRun run_float(const NetworkGraph& g, const FloatTensor& image,
                   const FloatRunOptions& options = {});

// 4-bit per-channel weights and 8-bit per-layer activation steps
// calibrated on `images`. Tensors joined by concatenation or layout ops
// share a step.
void quantize_graph(NetworkGraph& g, std::span<const FloatTensor> images,
                    const CalibrationOptions& options = {});

struct Heads {
  FloatTensor heatmap;  // values in [0, 1] via the sigmoid table
  FloatTensor size;
  FloatTensor offset;
  std::array<QuantTensor, 3> codes;
};

// Integer execution; only the first layer runs in floating point.
Heads run_inference(const NetworkGraph& g, const QuantTensor& image);

// 256-entry sigmoid table over the 8-bit code domain (index code + 128).
std::array<float, 256> sigmoid_table(double delta);

// Host-side first layer: 3x3 conv with bias and ReLU at `stride`,
// optional 2x2 max pool, then 8-bit quantization with step `out_delta`.
QuantTensor first_layer_host(const FloatTensor& image, const FloatTensor& weights,
                             std::span<const float> bias, int stride, bool maxpool,
                             double out_delta);

// u8 pixels to codes p - 128 (clamped to -127) with step 1/128.
QuantTensor image_from_u8(std::span<const std::uint8_t> pixels, const Shape4& shape);

enum class Precision : std::uint8_t { kFp32, kW4A8 };

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::kConv1x1;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double bytes = 0;
};

struct CostReport {
  Precision precision = Precision::kFp32;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double bytes = 0;
  std::vector<LayerCost> layers;
};

// Parameters are weights plus biases. fp32: 4 bytes each. w4a8: half a
// byte each plus a 4-byte step per output channel and per activation.
CostReport count_cost(const NetworkGraph& g, Precision precision);

}  // namespace dfx

#endif  // DFX_GRAPH_HPP_
