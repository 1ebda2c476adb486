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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

namespace dfx {
namespace {

int count_kind(const NetworkGraph& g, LayerKind kind) {
  int n = 0;
  for (const auto& node : g.nodes) n += node.kind == kind ? 1 : 0;
  return n;
}

FloatTensor random_image(std::mt19937_64& rng, const Shape4& shape) {
  std::uniform_int_distribution<int> px(0, 255);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(shape.count()));
  for (auto& b : bytes) b = static_cast<std::uint8_t>(px(rng));
  return dequantize(image_from_u8(bytes, shape));
}

TEST(BuildCodenetTest, ConfigA) {
  const NetworkGraph g = build_codenet('a');
  EXPECT_EQ(g.input_shape, (Shape4{1, 256, 256, 3}));
  EXPECT_EQ(g.nodes[0].kind, LayerKind::kFull3x3First);
  EXPECT_EQ(g.nodes[0].spec.stride, 4);
  EXPECT_EQ(count_kind(g, LayerKind::kMaxpool2x2), 0);
  EXPECT_EQ(g.shape_of(g.heads[0]), (Shape4{1, 64, 64, 20}));
  EXPECT_EQ(g.shape_of(g.heads[1]), (Shape4{1, 64, 64, 2}));
  EXPECT_EQ(g.shape_of(g.heads[2]), (Shape4{1, 64, 64, 2}));
}

TEST(BuildCodenetTest, ConfigE) {
  const NetworkGraph g = build_codenet('e', 80);
  EXPECT_EQ(g.input_shape, (Shape4{1, 512, 512, 3}));
  EXPECT_EQ(g.nodes[0].spec.stride, 2);
  EXPECT_EQ(g.nodes[1].kind, LayerKind::kMaxpool2x2);
  EXPECT_EQ(g.nodes[1].out_shape.h, 128);
  EXPECT_EQ(g.config.width_mult, 2);
  EXPECT_EQ(g.shape_of(g.heads[0]).c, 80);
}

TEST(BuildCodenetTest, ThreeUpsampleBlocksEveryConfig) {
  for (char c : {'a', 'b', 'c', 'd', 'e'}) {
    const NetworkGraph g = build_codenet(c);
    EXPECT_EQ(count_kind(g, LayerKind::kUpsample2xNearest), 3) << c;
    EXPECT_EQ(count_kind(g, LayerKind::kDw3x3Deform), 3) << c;
    EXPECT_EQ(g.shape_of(g.heads[0]).h * 4, g.input_shape.h) << c;
    EXPECT_NO_THROW(lint(g));
  }
}

TEST(BuildCodenetTest, InvalidConfig) {
  EXPECT_THROW(build_codenet('f'), ParamError);
  EXPECT_THROW(build_codenet('c', 0), ParamError);
}

TEST(BuildCodenetTest, SeedDeterminesWeights) {
  const NetworkGraph a = build_codenet('a', 20, 7);
  const NetworkGraph b = build_codenet('a', 20, 7);
  const NetworkGraph c = build_codenet('a', 20, 8);
  EXPECT_EQ(a.nodes[5].weights, b.nodes[5].weights);
  EXPECT_NE(a.nodes[5].weights, c.nodes[5].weights);
}

TEST(LintTest, RejectsBrokenBookkeeping) {
  const NetworkGraph base = build_codenet('a');
  const int concat = [&] {
    for (std::size_t i = 0; i < base.nodes.size(); ++i)
      if (base.nodes[i].kind == LayerKind::kConcat) return static_cast<int>(i);
    return -1;
  }();
  ASSERT_GE(concat, 0);
  NetworkGraph g = base;
  g.nodes[static_cast<std::size_t>(concat)].out_shape.c += 1;
  EXPECT_THROW(lint(g), FormatError);

  g = base;
  g.nodes[3].kind = static_cast<LayerKind>(42);
  EXPECT_THROW(lint(g), FormatError);

  g = base;
  g.nodes[2].inputs[0] = {5, 0};  // forward reference
  EXPECT_THROW(lint(g), FormatError);

  g = base;
  g.heads[1] = g.heads[0];
  EXPECT_THROW(lint(g), FormatError);

  try {
    g = base;
    g.nodes[4].weights = FloatTensor(Shape4{1, 1, 1, 1});
    lint(g);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(base.nodes[4].name), std::string::npos);
  }
}

TEST(LayerKindTest, NamesRoundTrip) {
  for (int k = 0; k < 9; ++k) {
    const auto kind = static_cast<LayerKind>(k);
    EXPECT_EQ(layer_kind_from_string(to_string(kind)), kind);
  }
  EXPECT_FALSE(layer_kind_from_string("relu").has_value());
}

TEST(RunInferenceTest, ZeroImageZeroWeightsGivesHalf) {
  NetworkGraph g = build_codenet('a', 4);
  for (auto& n : g.nodes) {
    for (float& v : n.weights.data()) v = 0.0F;
    for (float& v : n.bias) v = 0.0F;
    for (float& v : n.offset_weights.data()) v = 0.0F;
    for (float& v : n.offset_bias) v = 0.0F;
  }
  const FloatTensor zero(g.input_shape, 0.0F);
  quantize_graph(g, std::span<const FloatTensor>(&zero, 1));
  const std::vector<std::uint8_t> grey(static_cast<std::size_t>(g.input_shape.count()), 128);
  const Heads h = run_inference(g, image_from_u8(grey, g.input_shape));
  EXPECT_EQ(h.heatmap.shape(), (Shape4{1, 64, 64, 4}));
  for (float v : h.heatmap.data()) ASSERT_EQ(v, 0.5F);
  for (float v : h.size.data()) ASSERT_EQ(v, 0.0F);
}

TEST(RunInferenceTest, DeterministicAndShapeChecked) {
  std::mt19937_64 rng(21);
  NetworkGraph g = build_codenet('a', 20, 3);
  const FloatTensor img = random_image(rng, g.input_shape);
  quantize_graph(g, std::span<const FloatTensor>(&img, 1));
  const QuantTensor q = quantize(img, QuantParams::from_delta(8, g.input_delta));
  const Heads a = run_inference(g, q);
  const Heads b = run_inference(g, q);
  EXPECT_EQ(a.codes, b.codes);
  for (float v : a.heatmap.data()) {
    ASSERT_GE(v, 0.0F);
    ASSERT_LE(v, 1.0F);
  }
  EXPECT_THROW(run_inference(g, QuantTensor(Shape4{1, 128, 128, 3}, 8, QuantParams::unit(8))),
               ShapeError);
  std::size_t conv = 1;
  while (g.nodes[conv].kind != LayerKind::kConv1x1) ++conv;
  NetworkGraph bad = g;
  bad.nodes[conv].qweights = QuantTensor(Shape4{1, 1, 3, 3}, 4, QuantParams::unit(4));
  try {
    run_inference(bad, q);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find(g.nodes[conv].name), std::string::npos);
  }
}

TEST(RunInferenceTest, UnquantizedGraphRejected) {
  const NetworkGraph g = build_codenet('a');
  EXPECT_THROW(run_inference(g, QuantTensor(g.input_shape, 8, QuantParams::unit(8))), ParamError);
}

// Worst-case |integer - real| per node for a chain of convolutions on the
// same weights: the input error is amplified by the largest per-output
// L1 weight norm, then requantization adds half a step for the product
// and half a step for the folded bias.
double chain_bound(const NetworkGraph& g, std::vector<double>& err) {
  err.assign(g.nodes.size(), 0.0);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    const double e_in = n.inputs[0].node < 0 ? 0.0 : err[static_cast<std::size_t>(n.inputs[0].node)];
    const FloatTensor w = dequantize(n.qweights);
    const Shape4& ws = w.shape();
    double l1_max = 0;
    for (std::int64_t oc = 0; oc < ws.c; ++oc) {
      double l1 = 0;
      for (std::int64_t a = 0; a < ws.n; ++a)
        for (std::int64_t b = 0; b < ws.h; ++b)
          for (std::int64_t ic = 0; ic < ws.w; ++ic) l1 += std::fabs(w(a, b, ic, oc));
      l1_max = std::max(l1_max, l1);
    }
    err[i] = l1_max * e_in + n.requant.out_delta * (1.0 + 1e-6);
  }
  return 0;
}

TEST(RunInferenceTest, TinyGraphWithinAccumulatedBound) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    GraphBuilder b(Shape4{1, 8, 8, 16}, 100 + static_cast<std::uint64_t>(trial));
    ValueRef x = b.conv1x1(b.input(), 16, true);
    x = b.dw3x3(x, 1);
    x = b.conv1x1(x, 8, true);
    const ValueRef hm = b.conv1x1(x, 3, false);
    const ValueRef sz = b.conv1x1(x, 2, false);
    const ValueRef of = b.conv1x1(x, 2, false);
    b.graph().output_stride = 1;
    NetworkGraph g = b.finish({hm, sz, of}, 3);

    FloatTensor img(g.input_shape);
    std::uniform_int_distribution<int> code(-127, 127);
    for (float& v : img.data()) v = static_cast<float>(code(rng) / 128.0);
    quantize_graph(g, std::span<const FloatTensor>(&img, 1));
    const Heads q = run_inference(g, quantize(img, QuantParams::from_delta(8, g.input_delta)));
    FloatRunOptions opt;
    opt.dequantized_weights = true;
    const FloatRun f = run_float(g, img, opt);

    std::vector<double> err;
    chain_bound(g, err);
    const std::array<const FloatTensor*, 3> real = {&f.heads.heatmap, &f.heads.size, &f.heads.offset};
    const std::array<const FloatTensor*, 3> got = {&q.heatmap, &q.size, &q.offset};
    for (std::size_t k = 0; k < 3; ++k) {
      // The sigmoid is 1/4-Lipschitz.
      const double bound = err[static_cast<std::size_t>(g.heads[k].node)] * (k == 0 ? 0.25 : 1.0) + 1e-6;
      for (std::size_t i = 0; i < real[k]->data().size(); ++i) {
        ASSERT_LE(std::fabs(real[k]->data()[i] - got[k]->data()[i]), bound) << "head " << k;
      }
    }
  }
}

TEST(RunInferenceTest, FullNetworkTracksFloatPath) {
  std::mt19937_64 rng(23);
  NetworkGraph g = build_codenet('a', 20, 5);
  const FloatTensor img = random_image(rng, g.input_shape);
  quantize_graph(g, std::span<const FloatTensor>(&img, 1));
  const Heads q = run_inference(g, quantize(img, QuantParams::from_delta(8, g.input_delta)));
  FloatRunOptions opt;
  opt.dequantized_weights = true;
  const FloatRun f = run_float(g, img, opt);
  double sum = 0;
  for (std::size_t i = 0; i < q.heatmap.data().size(); ++i) {
    sum += std::fabs(q.heatmap.data()[i] - f.heads.heatmap.data()[i]);
  }
  EXPECT_LT(sum / static_cast<double>(q.heatmap.data().size()), 0.02);
}

TEST(SigmoidTableTest, Values) {
  const auto t = sigmoid_table(0.05);
  EXPECT_FLOAT_EQ(t[128], 0.5F);
  EXPECT_FLOAT_EQ(t[128 + 20], static_cast<float>(1.0 / (1.0 + std::exp(-1.0))));
  for (int i = 1; i < 256; ++i) EXPECT_GE(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(i - 1)]);
}

TEST(FirstLayerHostTest, OutputSizes) {
  const FloatTensor img(Shape4{1, 512, 512, 3}, 0.25F);
  const FloatTensor w(Shape4{3, 3, 3, 4}, 0.1F);
  const std::vector<float> bias(4, 0.0F);
  EXPECT_EQ(first_layer_host(img, w, bias, 4, false, 0.01).shape(), (Shape4{1, 128, 128, 4}));
  EXPECT_EQ(first_layer_host(img, w, bias, 2, true, 0.01).shape(), (Shape4{1, 128, 128, 4}));
}

TEST(FirstLayerHostTest, ImpulseMatchesLoopOracle) {
  std::mt19937_64 rng(24);
  for (int stride : {2, 4}) {
    FloatTensor img(Shape4{1, 16, 16, 3}, 0.0F);
    img.at(0, 5, 6, 1) = 0.75F;
    const FloatTensor w = testing::random_float(rng, Shape4{3, 3, 3, 5});
    const std::vector<float> bias = {0.01F, -0.02F, 0.0F, 0.05F, -0.3F};
    const double delta = 0.004;
    const QuantTensor out = first_layer_host(img, w, bias, stride, false, delta);
    const std::int64_t od = (16 + 2 - 3) / stride + 1;
    ASSERT_EQ(out.shape(), (Shape4{1, od, od, 5}));
    for (std::int64_t oy = 0; oy < od; ++oy)
      for (std::int64_t ox = 0; ox < od; ++ox)
        for (std::int64_t oc = 0; oc < 5; ++oc) {
          const std::int64_t ky = 5 - (oy * stride - 1);
          const std::int64_t kx = 6 - (ox * stride - 1);
          double v = bias[static_cast<std::size_t>(oc)];
          if (ky >= 0 && ky < 3 && kx >= 0 && kx < 3) v += 0.75 * w(ky, kx, 1, oc);
          v = std::max(v, 0.0);
          const double want = std::min(std::floor(v / delta + 0.5), 127.0);
          ASSERT_EQ(out(0, oy, ox, oc), want) << oy << "," << ox << "," << oc;
        }
  }
}

TEST(ImageTest, FromU8) {
  const std::vector<std::uint8_t> px = {0, 1, 128, 255};
  const QuantTensor q = image_from_u8(px, Shape4{1, 1, 1, 4});
  EXPECT_EQ(q.codes()[0], -127);
  EXPECT_EQ(q.codes()[1], -127);
  EXPECT_EQ(q.codes()[2], 0);
  EXPECT_EQ(q.codes()[3], 127);
  EXPECT_THROW(image_from_u8(px, Shape4{1, 1, 1, 3}), ShapeError);
}

TEST(CountCostTest, TotalsAndDefinitions) {
  const NetworkGraph g = build_codenet('c');
  const CostReport fp = count_cost(g, Precision::kFp32);
  const CostReport q = count_cost(g, Precision::kW4A8);
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double bytes = 0;
  for (const auto& l : fp.layers) {
    params += l.params;
    macs += l.macs;
    bytes += l.bytes;
  }
  EXPECT_EQ(params, fp.params);
  EXPECT_EQ(macs, fp.macs);
  EXPECT_DOUBLE_EQ(bytes, fp.bytes);
  EXPECT_DOUBLE_EQ(fp.bytes, 4.0 * static_cast<double>(fp.params));
  EXPECT_EQ(q.macs, fp.macs);
  EXPECT_GT(q.bytes, 0.5 * static_cast<double>(q.params));
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    if (n.kind != LayerKind::kConv1x1) continue;
    EXPECT_EQ(fp.layers[i].macs, n.out_shape.h * n.out_shape.w * n.in_shape.c * n.out_shape.c);
    EXPECT_EQ(fp.layers[i].params, n.in_shape.c * n.out_shape.c + n.out_shape.c);
  }
}

TEST(CountCostTest, LowResolutionIsAboutAQuarter) {
  const double a = static_cast<double>(count_cost(build_codenet('a'), Precision::kFp32).macs);
  const double c = static_cast<double>(count_cost(build_codenet('c'), Precision::kFp32).macs);
  EXPECT_NEAR(a / c, 0.25, 0.01);
}

TEST(CountCostTest, ReferenceTargetsWithinTenPercent) {
  const CostReport c32 = count_cost(build_codenet('c'), Precision::kFp32);
  const CostReport c4 = count_cost(build_codenet('c'), Precision::kW4A8);
  const CostReport d32 = count_cost(build_codenet('d'), Precision::kFp32);
  const CostReport d4 = count_cost(build_codenet('d'), Precision::kW4A8);
  EXPECT_NEAR(static_cast<double>(c32.macs) / 1.14e9, 1.0, 0.10);
  EXPECT_NEAR(c32.bytes / 6.06e6, 1.0, 0.10);
  EXPECT_NEAR(c4.bytes / 0.76e6, 1.0, 0.10);
  EXPECT_NEAR(static_cast<double>(d32.macs) / 3.54e9, 1.0, 0.10);
  EXPECT_NEAR(d32.bytes / 23.2e6, 1.0, 0.10);
  EXPECT_NEAR(d4.bytes / 2.90e6, 1.0, 0.10);
}

}  // namespace
}  // namespace dfx
