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

#include "dfx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfx/error.hpp"
#include "dfx/rng.hpp"

namespace dfx {

namespace {

constexpr std::array<const char*, 9> kKindNames = {
    "conv1x1",  "dw3x3",      "dw3x3_deform", "full3x3_first", "maxpool2x2",
    "upsample2x_nearest", "split_half", "concat", "shuffle"};

bool is_conv(LayerKind k) {
  return k == LayerKind::kConv1x1 || k == LayerKind::kDw3x3 || k == LayerKind::kDw3x3Deform ||
         k == LayerKind::kFull3x3First;
}

void add_bias_relu(FloatTensor& t, std::span<const float> bias, bool relu) {
  const std::int64_t c = t.shape().c;
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    float v = d[i] + (bias.empty() ? 0.0F : bias[i % static_cast<std::size_t>(c)]);
    d[i] = relu ? std::max(v, 0.0F) : v;
  }
}

FloatTensor sigmoid(const FloatTensor& t) {
  FloatTensor out(t.shape());
  for (std::size_t i = 0; i < t.data().size(); ++i) {
    out.data()[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(t.data()[i]))));
  }
  return out;
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

// Square field from real offset-generator outputs.
OffsetField square_from_real(const FloatTensor& v, int hi) {
  const Shape4& s = v.shape();
  OffsetField f = OffsetField::zeros(OffsetMode::kSquare, s.n, s.h, s.w, 0, hi);
  for (std::size_t i = 0; i < f.ints.size(); ++i) {
    f.ints[i] = static_cast<std::int32_t>(
        std::clamp(round_half_away(v.data()[i]), 0.0, static_cast<double>(hi)));
  }
  return f;
}

[[noreturn]] void fail(const LayerNode& node, const std::string& what) {
  throw FormatError("node " + node.name + ": " + what);
}

}  // namespace

const char* to_string(LayerKind kind) { return kKindNames.at(static_cast<std::size_t>(kind)); }

std::optional<LayerKind> layer_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (name == kKindNames[i]) return static_cast<LayerKind>(i);
  }
  return std::nullopt;
}

bool LayerNode::has_weights() const { return is_conv(kind); }

NetConfig config_for(char id) {
  switch (id) {
    case 'a': return {'a', 256, Downsample::kStride4, 1};
    case 'b': return {'b', 256, Downsample::kStride2MaxPool, 1};
    case 'c': return {'c', 512, Downsample::kStride4, 1};
    case 'd': return {'d', 512, Downsample::kStride4, 2};
    case 'e': return {'e', 512, Downsample::kStride2MaxPool, 2};
    default: throw ParamError(std::string("unknown config '") + id + "' (expected a..e)");
  }
}

int NetworkGraph::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const Shape4& NetworkGraph::shape_of(ValueRef v) const {
  if (v.node < 0) return input_shape;
  return nodes.at(static_cast<std::size_t>(v.node)).out_shape;
}

GraphBuilder::GraphBuilder(const Shape4& input_shape, std::uint64_t seed) : rng_(seed) {
  input_shape.validate();
  g_.input_shape = input_shape;
}

LayerNode& GraphBuilder::add(LayerKind kind, std::vector<ValueRef> inputs, const Shape4& out) {
  LayerNode node;
  node.kind = kind;
  node.name = std::string(to_string(kind)) + "_" + std::to_string(counter_++);
  node.in_shape = g_.shape_of(inputs.at(0));
  node.inputs = std::move(inputs);
  out.validate();
  node.out_shape = out;
  g_.nodes.push_back(std::move(node));
  return g_.nodes.back();
}

FloatTensor GraphBuilder::random_weights(const Shape4& shape, std::int64_t fan_in, double gain) {
  const double a = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  FloatTensor w(shape);
  for (float& v : w.data()) v = static_cast<float>(draw_real(rng_, -a, a));
  return w;
}

std::vector<float> GraphBuilder::random_bias(std::int64_t n, double center, double spread) {
  std::vector<float> b(static_cast<std::size_t>(n));
  for (float& v : b) v = static_cast<float>(draw_real(rng_, center - spread, center + spread));
  return b;
}

ValueRef GraphBuilder::full3x3_first(ValueRef x, std::int64_t oc, int stride) {
  const ConvSpec spec = ConvSpec::full3x3(stride);
  const Shape4 in = g_.shape_of(x);
  FloatTensor w = random_weights(spec.weight_shape(in.c, oc), 9 * in.c, std::sqrt(2.0));
  std::vector<float> b = random_bias(oc, 0.0, 0.1);
  LayerNode& n = add(LayerKind::kFull3x3First, {x}, spec.out_shape(in, oc));
  n.spec = spec;
  n.relu = true;
  n.weights = std::move(w);
  n.bias = std::move(b);
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

ValueRef GraphBuilder::conv1x1(ValueRef x, std::int64_t oc, bool relu) {
  const ConvSpec spec = ConvSpec::conv1x1();
  const Shape4 in = g_.shape_of(x);
  FloatTensor w = random_weights(spec.weight_shape(in.c, oc), in.c, relu ? std::sqrt(2.0) : 1.0);
  std::vector<float> b = random_bias(oc, 0.0, 0.1);
  LayerNode& n = add(LayerKind::kConv1x1, {x}, spec.out_shape(in, oc));
  n.spec = spec;
  n.relu = relu;
  n.weights = std::move(w);
  n.bias = std::move(b);
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

ValueRef GraphBuilder::dw3x3(ValueRef x, int stride) {
  const ConvSpec spec = ConvSpec::dw3x3(stride);
  const Shape4 in = g_.shape_of(x);
  FloatTensor w = random_weights(spec.weight_shape(in.c, in.c), 9, 1.0);
  std::vector<float> b = random_bias(in.c, 0.0, 0.1);
  LayerNode& n = add(LayerKind::kDw3x3, {x}, spec.out_shape(in, in.c));
  n.spec = spec;
  n.weights = std::move(w);
  n.bias = std::move(b);
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

ValueRef GraphBuilder::dw3x3_deform(ValueRef x, bool relu) {
  const ConvSpec spec = ConvSpec::dw3x3(1);
  const Shape4 in = g_.shape_of(x);
  FloatTensor w = random_weights(spec.weight_shape(in.c, in.c), 9, relu ? std::sqrt(2.0) : 1.0);
  std::vector<float> b = random_bias(in.c, 0.0, 0.1);
  // Offsets centred in the legal half-width range.
  FloatTensor ow = random_weights(Shape4{1, 1, in.c, 1}, in.c, 1.5);
  std::vector<float> ob = random_bias(1, g_.offset_hi / 2.0, 0.5);
  LayerNode& n = add(LayerKind::kDw3x3Deform, {x}, spec.out_shape(in, in.c));
  n.spec = spec;
  n.relu = relu;
  n.weights = std::move(w);
  n.bias = std::move(b);
  n.offset_weights = std::move(ow);
  n.offset_bias = std::move(ob);
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

ValueRef GraphBuilder::maxpool2x2(ValueRef x) {
  const Shape4 in = g_.shape_of(x);
  add(LayerKind::kMaxpool2x2, {x}, Shape4{in.n, in.h / 2, in.w / 2, in.c});
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

ValueRef GraphBuilder::upsample2x(ValueRef x) {
  const Shape4 in = g_.shape_of(x);
  add(LayerKind::kUpsample2xNearest, {x}, Shape4{in.n, in.h * 2, in.w * 2, in.c});
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

std::array<ValueRef, 2> GraphBuilder::split_half(ValueRef x) {
  const Shape4 in = g_.shape_of(x);
  if (in.c % 2 != 0) throw ShapeError("split_half needs an even channel count, got " + in.str());
  add(LayerKind::kSplitHalf, {x}, Shape4{in.n, in.h, in.w, in.c / 2});
  const int id = static_cast<int>(g_.nodes.size()) - 1;
  return {ValueRef{id, 0}, ValueRef{id, 1}};
}

ValueRef GraphBuilder::concat(ValueRef a, ValueRef b) {
  const Shape4 sa = g_.shape_of(a);
  const Shape4 sb = g_.shape_of(b);
  add(LayerKind::kConcat, {a, b}, Shape4{sa.n, sa.h, sa.w, sa.c + sb.c});
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

ValueRef GraphBuilder::shuffle(ValueRef x) {
  add(LayerKind::kShuffle, {x}, g_.shape_of(x));
  return {static_cast<int>(g_.nodes.size()) - 1, 0};
}

NetworkGraph GraphBuilder::finish(std::array<ValueRef, 3> heads, int classes) {
  g_.heads = heads;
  g_.classes = classes;
  lint(g_);
  return std::move(g_);
}

NetworkGraph build_codenet(char config, int classes, std::uint64_t seed) {
  const NetConfig cfg = config_for(config);
  if (classes < 1) throw ParamError("classes must be >= 1");
  const bool wide = cfg.width_mult == 2;
  const std::array<std::int64_t, 3> stage_widths =
      wide ? std::array<std::int64_t, 3>{244, 488, 976} : std::array<std::int64_t, 3>{116, 232, 464};
  const std::array<int, 3> repeats = {4, 8, 4};
  const std::int64_t conv5 = wide ? 2048 : 1024;
  const std::array<std::int64_t, 3> decoder = {256, 128, 64};

  GraphBuilder b(Shape4{1, cfg.resolution, cfg.resolution, 3}, seed);
  ValueRef x;
  if (cfg.downsample == Downsample::kStride4) {
    x = b.full3x3_first(b.input(), 24, 4);
  } else {
    x = b.maxpool2x2(b.full3x3_first(b.input(), 24, 2));
  }
  for (std::size_t s = 0; s < stage_widths.size(); ++s) {
    const std::int64_t half = stage_widths[s] / 2;
    // Block (a): both branches downsample.
    const ValueRef left = b.conv1x1(b.dw3x3(x, 2), half, true);
    const ValueRef right = b.conv1x1(b.dw3x3(b.conv1x1(x, half, true), 2), half, true);
    x = b.shuffle(b.concat(left, right));
    // Block (b): channel split, one transformed half.
    for (int r = 1; r < repeats[s]; ++r) {
      const auto halves = b.split_half(x);
      const ValueRef t = b.conv1x1(b.dw3x3(b.conv1x1(halves[1], half, true), 1), half, true);
      x = b.shuffle(b.concat(halves[0], t));
    }
  }
  x = b.conv1x1(x, conv5, true);
  // Block (c): 1x1, square deformable 3x3, nearest 2x upsample; the ReLU
  // commutes with the upsample and is folded into the deformable conv.
  for (std::int64_t width : decoder) {
    x = b.upsample2x(b.dw3x3_deform(b.conv1x1(x, width, true), true));
  }
  const std::int64_t d = 64;
  const ValueRef hm = b.conv1x1(b.conv1x1(x, d, true), classes, false);
  const ValueRef sz = b.conv1x1(b.conv1x1(x, d, true), 2, false);
  const ValueRef of = b.conv1x1(b.conv1x1(x, d, true), 2, false);
  b.graph().config = cfg;
  b.graph().head_dim = static_cast<int>(d);
  // Heatmap logits start near a low prior.
  for (float& v : b.graph().nodes[static_cast<std::size_t>(hm.node)].bias) v -= 2.0F;
  return b.finish({hm, sz, of}, classes);
}

void lint(const NetworkGraph& g) {
  g.input_shape.validate();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    if (static_cast<std::size_t>(n.kind) >= kKindNames.size()) fail(n, "unknown operator kind");
    const std::size_t want_inputs = n.kind == LayerKind::kConcat ? 2 : 1;
    if (n.inputs.size() != want_inputs) fail(n, "wrong number of inputs");
    for (const ValueRef& v : n.inputs) {
      if (v.node < -1 || v.node >= static_cast<int>(i)) fail(n, "input is not an earlier node");
      if (v.node >= 0 && (v.port < 0 || v.port >= g.nodes[static_cast<std::size_t>(v.node)].ports())) {
        fail(n, "input port out of range");
      }
    }
    const Shape4& in = g.shape_of(n.inputs[0]);
    if (!(n.in_shape == in)) fail(n, "recorded input shape " + n.in_shape.str() + " != " + in.str());
    Shape4 want;
    switch (n.kind) {
      case LayerKind::kFull3x3First:
        if (n.inputs[0].node != -1) fail(n, "first layer must read the graph input");
        if (n.spec.depthwise || n.spec.kernel != 3) fail(n, "first layer must be a full 3x3");
        n.spec.validate();
        want = n.spec.out_shape(in, n.out_shape.c);
        if (!(n.weights.shape() == n.spec.weight_shape(in.c, want.c))) fail(n, "weight shape");
        break;
      case LayerKind::kConv1x1:
        if (!(n.spec == ConvSpec::conv1x1())) fail(n, "spec is not 1x1");
        want = n.spec.out_shape(in, n.out_shape.c);
        if (!(n.weights.shape() == n.spec.weight_shape(in.c, want.c))) fail(n, "weight shape");
        break;
      case LayerKind::kDw3x3:
      case LayerKind::kDw3x3Deform:
        if (!n.spec.depthwise || n.spec.kernel != 3) fail(n, "spec is not depthwise 3x3");
        n.spec.validate();
        want = n.spec.out_shape(in, in.c);
        if (n.out_shape.c != in.c) fail(n, "depthwise ic != oc");
        if (!(n.weights.shape() == n.spec.weight_shape(in.c, in.c))) fail(n, "weight shape");
        if (n.kind == LayerKind::kDw3x3Deform) {
          if (n.spec.stride != 1) fail(n, "deformable conv must have stride 1");
          if (!(n.offset_weights.shape() == Shape4{1, 1, in.c, 1})) fail(n, "offset weight shape");
        }
        break;
      case LayerKind::kMaxpool2x2: want = {in.n, in.h / 2, in.w / 2, in.c}; break;
      case LayerKind::kUpsample2xNearest: want = {in.n, in.h * 2, in.w * 2, in.c}; break;
      case LayerKind::kSplitHalf:
        if (in.c % 2 != 0) fail(n, "split of odd channel count");
        want = {in.n, in.h, in.w, in.c / 2};
        break;
      case LayerKind::kConcat: {
        const Shape4& b = g.shape_of(n.inputs[1]);
        if (b.n != in.n || b.h != in.h || b.w != in.w) fail(n, "concat spatial mismatch");
        want = {in.n, in.h, in.w, in.c + b.c};
        break;
      }
      case LayerKind::kShuffle:
        if (in.c % 2 != 0) fail(n, "shuffle of odd channel count");
        want = in;
        break;
    }
    if (!(n.out_shape == want)) fail(n, "output shape " + n.out_shape.str() + " != " + want.str());
    if (n.has_weights() && n.bias.size() != static_cast<std::size_t>(want.c)) fail(n, "bias length");
    if (g.quantized && n.has_weights() && n.kind != LayerKind::kFull3x3First) {
      n.requant.validate(want.c);
    }
  }
  const std::array<std::int64_t, 3> head_c = {g.classes, 2, 2};
  for (std::size_t k = 0; k < 3; ++k) {
    if (g.heads[k].node < 0 || g.heads[k].node >= static_cast<int>(g.nodes.size())) {
      throw FormatError("head " + std::to_string(k) + " does not name a node");
    }
    const Shape4& s = g.shape_of(g.heads[k]);
    if (s.c != head_c[k]) throw FormatError("head " + std::to_string(k) + " has wrong channel count");
    if (s.h * g.output_stride != g.input_shape.h || s.w * g.output_stride != g.input_shape.w) {
      throw FormatError("head " + std::to_string(k) + " is not at input/R resolution");
    }
  }
}

FloatRun run_float(const NetworkGraph& g, const FloatTensor& image, const FloatRunOptions& options) {
  if (!(image.shape() == g.input_shape)) {
    throw ShapeError("image shape " + image.shape().str() + " != graph input " + g.input_shape.str());
  }
  if (options.dequantized_weights && !g.quantized) {
    throw ParamError("dequantized weights requested from an unquantized graph");
  }
  std::vector<std::vector<FloatTensor>> acts(g.nodes.size());
  std::vector<FloatTensor> offsets(g.nodes.size());
  auto value = [&](ValueRef v) -> const FloatTensor& {
    return v.node < 0 ? image : acts[static_cast<std::size_t>(v.node)][static_cast<std::size_t>(v.port)];
  };
  // Last consumer of every node, so intermediates can be released.
  std::vector<std::size_t> last_use(g.nodes.size(), 0);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const ValueRef& v : g.nodes[i].inputs) {
      if (v.node >= 0) last_use[static_cast<std::size_t>(v.node)] = i;
    }
  }
  for (const ValueRef& h : g.heads) last_use[static_cast<std::size_t>(h.node)] = g.nodes.size();

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    const FloatTensor& x = value(n.inputs[0]);
    const FloatTensor w = options.dequantized_weights && n.has_weights() ? dequantize(n.qweights) : n.weights;
    std::vector<FloatTensor> out;
    switch (n.kind) {
      case LayerKind::kFull3x3First:
      case LayerKind::kConv1x1:
      case LayerKind::kDw3x3: {
        FloatTensor y = conv_ref(x, w, n.spec);
        add_bias_relu(y, n.bias, n.relu);
        out.push_back(std::move(y));
        break;
      }
      case LayerKind::kDw3x3Deform: {
        const FloatTensor ow = options.dequantized_weights ? dequantize(n.qoffset_weights) : n.offset_weights;
        FloatTensor v = conv_ref(x, ow, ConvSpec::conv1x1());
        add_bias_relu(v, n.offset_bias, false);
        const OffsetField off = square_from_real(v, g.offset_hi);
        offsets[i] = std::move(v);
        FloatTensor y = deform_conv_ref(x, w, off.as_fractional(), n.spec);
        add_bias_relu(y, n.bias, n.relu);
        out.push_back(std::move(y));
        break;
      }
      case LayerKind::kMaxpool2x2: out.push_back(maxpool2x2(x)); break;
      case LayerKind::kUpsample2xNearest: out.push_back(upsample2x_nearest(x)); break;
      case LayerKind::kSplitHalf: {
        auto halves = split_half(x);
        out.push_back(std::move(halves[0]));
        out.push_back(std::move(halves[1]));
        break;
      }
      case LayerKind::kConcat: out.push_back(concat_channels(x, value(n.inputs[1]))); break;
      case LayerKind::kShuffle: out.push_back(channel_shuffle(x)); break;
    }
    acts[i] = std::move(out);
    if (!options.keep_activations) {
      for (const ValueRef& v : n.inputs) {
        if (v.node >= 0 && last_use[static_cast<std::size_t>(v.node)] == i) {
          acts[static_cast<std::size_t>(v.node)].clear();
        }
      }
    }
  }
  FloatRun run;
  run.heads.heatmap = sigmoid(value(g.heads[0]));
  run.heads.size = value(g.heads[1]);
  run.heads.offset = value(g.heads[2]);
  run.offsets = std::move(offsets);
  if (options.keep_activations) run.activations = std::move(acts);
  return run;
}

namespace {

// Union-find over graph values; id 0 is the graph input.
class ValueGroups {
 public:
  explicit ValueGroups(const NetworkGraph& g) : base_(g.nodes.size() + 1) {
    std::size_t next = 1;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      base_[i + 1] = next;
      next += static_cast<std::size_t>(g.nodes[i].ports());
    }
    parent_.resize(next);
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::size_t id(ValueRef v) const {
    return v.node < 0 ? 0 : base_[static_cast<std::size_t>(v.node) + 1] + static_cast<std::size_t>(v.port);
  }
  std::size_t root(std::size_t a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void join(std::size_t a, std::size_t b) {
    a = root(a);
    b = root(b);
    if (a == b) return;
    // The input's group keeps the input as root.
    if (a == 0) parent_[b] = a; else parent_[a] = b;
  }
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> base_;
  std::vector<std::size_t> parent_;
};

}  // namespace

void quantize_graph(NetworkGraph& g, std::span<const FloatTensor> images,
                    const CalibrationOptions& options) {
  if (images.empty()) throw ParamError("quantize_graph needs at least one calibration image");
  ValueGroups groups(g);
  std::vector<std::vector<FloatTensor>> samples(groups.size());
  std::vector<std::vector<FloatTensor>> offset_samples(g.nodes.size());
  for (const FloatTensor& img : images) {
    FloatRunOptions ro;
    ro.keep_activations = true;
    FloatRun run = run_float(g, img, ro);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (!g.nodes[i].has_weights()) continue;
      samples[groups.id({static_cast<int>(i), 0})].push_back(std::move(run.activations[i][0]));
      if (g.nodes[i].kind == LayerKind::kDw3x3Deform) {
        offset_samples[i].push_back(std::move(run.offsets[i]));
      }
    }
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    const std::size_t out = groups.id({static_cast<int>(i), 0});
    switch (n.kind) {
      case LayerKind::kMaxpool2x2:
      case LayerKind::kUpsample2xNearest:
      case LayerKind::kShuffle:
        groups.join(out, groups.id(n.inputs[0]));
        break;
      case LayerKind::kSplitHalf:
        groups.join(out, groups.id(n.inputs[0]));
        groups.join(out + 1, groups.id(n.inputs[0]));
        break;
      case LayerKind::kConcat:
        groups.join(out, groups.id(n.inputs[0]));
        groups.join(out, groups.id(n.inputs[1]));
        break;
      default: break;
    }
  }
  // Threshold of each group: calibrated over all member conv outputs.
  std::vector<std::vector<FloatTensor>> pooled(groups.size());
  for (std::size_t v = 1; v < groups.size(); ++v) {
    auto& dst = pooled[groups.root(v)];
    for (auto& t : samples[v]) dst.push_back(std::move(t));
  }
  std::vector<double> delta(groups.size(), 0.0);
  for (std::size_t v = 0; v < groups.size(); ++v) {
    const std::size_t r = groups.root(v);
    if (r == 0) {
      delta[v] = g.input_delta;
    } else {
      if (delta[r] == 0.0) {
        delta[r] = calibrate(pooled[r], 8, Granularity::kPerLayer, options).deltas[0];
      }
      delta[v] = delta[r];
    }
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    LayerNode& n = g.nodes[i];
    if (!n.has_weights()) continue;
    const QuantParams wq = calibrate(std::span<const FloatTensor>(&n.weights, 1), 4, Granularity::kPerChannel);
    n.qweights = quantize(n.weights, wq);
    const double in_delta = delta[groups.id(n.inputs[0])];
    const double out_delta = delta[groups.id({static_cast<int>(i), 0})];
    if (n.kind == LayerKind::kFull3x3First) {
      n.requant = RequantParams::identity();
      n.requant.out_delta = out_delta;
    } else {
      const std::vector<double> b = to_double(n.bias);
      n.requant = derive_requant(in_delta, wq.deltas, out_delta, b);
    }
    if (n.kind == LayerKind::kDw3x3Deform) {
      const QuantParams oq = calibrate(std::span<const FloatTensor>(&n.offset_weights, 1), 4, Granularity::kPerChannel);
      n.qoffset_weights = quantize(n.offset_weights, oq);
      const double od = calibrate(offset_samples[i], 8, Granularity::kPerLayer, options).deltas[0];
      const std::vector<double> ob = to_double(n.offset_bias);
      n.offset_requant = derive_requant(in_delta, oq.deltas, od, ob);
    }
  }
  g.quantized = true;
}

std::array<float, 256> sigmoid_table(double delta) {
  std::array<float, 256> t{};
  for (int i = 0; i < 256; ++i) {
    t[static_cast<std::size_t>(i)] = static_cast<float>(1.0 / (1.0 + std::exp(-(i - 128) * delta)));
  }
  return t;
}

QuantTensor first_layer_host(const FloatTensor& image, const FloatTensor& weights,
                             std::span<const float> bias, int stride, bool maxpool,
                             double out_delta) {
  FloatTensor y = conv_ref(image, weights, ConvSpec::full3x3(stride));
  add_bias_relu(y, bias, true);
  if (maxpool) y = maxpool2x2(y);
  return quantize(y, QuantParams::from_delta(8, out_delta));
}

QuantTensor image_from_u8(std::span<const std::uint8_t> pixels, const Shape4& shape) {
  shape.validate();
  if (static_cast<std::int64_t>(pixels.size()) != shape.count()) {
    throw ShapeError("image has " + std::to_string(pixels.size()) + " bytes, shape " + shape.str() +
                     " needs " + std::to_string(shape.count()));
  }
  std::vector<std::int8_t> codes(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    codes[i] = static_cast<std::int8_t>(std::max(static_cast<int>(pixels[i]) - 128, -127));
  }
  return QuantTensor(shape, 8, QuantParams::from_delta(8, 1.0 / 128.0), std::move(codes));
}

Heads run_inference(const NetworkGraph& g, const QuantTensor& image) {
  if (!g.quantized) throw ParamError("run_inference needs a quantized graph");
  if (!(image.shape() == g.input_shape)) {
    throw ShapeError("image shape " + image.shape().str() + " != graph input " + g.input_shape.str());
  }
  std::vector<std::vector<QuantTensor>> acts(g.nodes.size());
  std::vector<std::size_t> last_use(g.nodes.size(), 0);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const ValueRef& v : g.nodes[i].inputs) {
      if (v.node >= 0) last_use[static_cast<std::size_t>(v.node)] = i;
    }
  }
  for (const ValueRef& h : g.heads) last_use[static_cast<std::size_t>(h.node)] = g.nodes.size();
  auto value = [&](ValueRef v) -> const QuantTensor& {
    return v.node < 0 ? image : acts[static_cast<std::size_t>(v.node)][static_cast<std::size_t>(v.port)];
  };

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    std::vector<QuantTensor> out;
    try {
      const QuantTensor& x = value(n.inputs[0]);
      const RequantOptions ro{n.relu};
      switch (n.kind) {
        case LayerKind::kFull3x3First:
          out.push_back(first_layer_host(dequantize(x), dequantize(n.qweights), n.bias,
                                         n.spec.stride, false, n.requant.out_delta));
          break;
        case LayerKind::kConv1x1: out.push_back(conv1x1_q(x, n.qweights, n.requant, ro)); break;
        case LayerKind::kDw3x3: out.push_back(dwconv3x3_q(x, n.qweights, n.spec, n.requant, ro)); break;
        case LayerKind::kDw3x3Deform: {
          OffsetGenOptions oo;
          oo.mode = OffsetMode::kSquare;
          oo.lo = 0;
          oo.hi = g.offset_hi;
          const OffsetField off = offset_gen(x, n.qoffset_weights, n.offset_requant, oo);
          out.push_back(deform_conv_q(x, n.qweights, off, n.spec, n.requant, ro));
          break;
        }
        case LayerKind::kMaxpool2x2: out.push_back(maxpool2x2(x)); break;
        case LayerKind::kUpsample2xNearest: out.push_back(upsample2x_nearest(x)); break;
        case LayerKind::kSplitHalf: {
          auto halves = split_half(x);
          out.push_back(std::move(halves[0]));
          out.push_back(std::move(halves[1]));
          break;
        }
        case LayerKind::kConcat: out.push_back(concat_channels(x, value(n.inputs[1]))); break;
        case LayerKind::kShuffle: out.push_back(channel_shuffle(x)); break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("node " + n.name + ": " + e.what());
    }
    acts[i] = std::move(out);
    for (const ValueRef& v : n.inputs) {
      if (v.node >= 0 && last_use[static_cast<std::size_t>(v.node)] == i) {
        acts[static_cast<std::size_t>(v.node)].clear();
      }
    }
  }
  Heads h;
  h.codes = {value(g.heads[0]), value(g.heads[1]), value(g.heads[2])};
  const auto lut = sigmoid_table(h.codes[0].qparams().delta_for(0));
  h.heatmap = FloatTensor(h.codes[0].shape());
  for (std::size_t i = 0; i < h.heatmap.data().size(); ++i) {
    h.heatmap.data()[i] = lut[static_cast<std::size_t>(h.codes[0].codes()[i] + 128)];
  }
  h.size = dequantize(h.codes[1]);
  h.offset = dequantize(h.codes[2]);
  return h;
}

CostReport count_cost(const NetworkGraph& g, Precision precision) {
  CostReport r;
  r.precision = precision;
  for (const LayerNode& n : g.nodes) {
    LayerCost lc;
    lc.name = n.name;
    lc.kind = n.kind;
    if (n.has_weights()) {
      const std::int64_t oc = n.out_channels();
      const std::int64_t conv_h = n.spec.out_dim(n.in_shape.h);
      const std::int64_t conv_w = n.spec.out_dim(n.in_shape.w);
      lc.params = n.weights.size() + oc;
      lc.macs = conv_h * conv_w * n.spec.macs_per_position(n.in_channels(), oc);
      std::int64_t scales = oc + 1;
      if (n.kind == LayerKind::kDw3x3Deform) {
        lc.params += n.offset_weights.size() + 1;
        lc.macs += n.in_shape.h * n.in_shape.w * n.in_channels();
        scales += 2;
      }
      lc.bytes = precision == Precision::kFp32 ? 4.0 * static_cast<double>(lc.params)
                                               : 0.5 * static_cast<double>(lc.params) + 4.0 * static_cast<double>(scales);
    }
    r.params += lc.params;
    r.macs += lc.macs;
    r.bytes += lc.bytes;
    r.layers.push_back(std::move(lc));
  }
  return r;
}

}  // namespace dfx
