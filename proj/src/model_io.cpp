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

#include "dfx/model_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "dfx/error.hpp"

namespace dfx {

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw FormatError("bad real '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw FormatError("bad integer '" + s + "'");
  return v;
}

std::string shape_text(const Shape4& s) {
  return std::to_string(s.n) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + "," +
         std::to_string(s.c);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

Shape4 parse_shape(const std::string& s) {
  const auto p = split(s, ',');
  if (p.size() != 4) throw FormatError("bad shape '" + s + "'");
  return {parse_int(p[0]), parse_int(p[1]), parse_int(p[2]), parse_int(p[3])};
}

std::string ref_text(ValueRef v) { return std::to_string(v.node) + ":" + std::to_string(v.port); }

ValueRef parse_ref(const std::string& s) {
  const auto p = split(s, ':');
  if (p.size() != 2) throw FormatError("bad value ref '" + s + "'");
  return {static_cast<int>(parse_int(p[0])), static_cast<int>(parse_int(p[1]))};
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<double> thresholds_of(const QuantTensor& q) { return q.qparams().thresholds; }

QuantParams weight_params(const Container& c, const std::string& key) {
  const auto& t = c.quant_values(key).values;
  try {
    return QuantParams::from_thresholds(4, Granularity::kPerChannel, t);
  } catch (const Error& e) {
    throw FormatError(key + ": " + e.what());
  }
}

std::vector<float> vector_of(const TensorRecord& t) {
  if (t.dtype != DType::kF32 || t.dims.size() != 1) throw FormatError("tensor " + t.name + " must be 1-D f32");
  return t.f32;
}

// Activation step entering each node's first input, tracked through the
// layout ops which pass steps through unchanged.
std::vector<double> input_steps(const NetworkGraph& g) {
  std::vector<double> out(g.nodes.size(), 0.0);
  std::vector<double> produced(g.nodes.size(), 0.0);
  auto step_of = [&](ValueRef v) { return v.node < 0 ? g.input_delta : produced[static_cast<std::size_t>(v.node)]; };
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    out[i] = step_of(n.inputs.at(0));
    produced[i] = n.has_weights() ? n.requant.out_delta : out[i];
  }
  return out;
}

}  // namespace

std::string describe_graph(const NetworkGraph& g) {
  std::ostringstream o;
  o << "codenet-graph 1\n";
  o << "precision " << (g.quantized ? "w4a8" : "fp32") << "\n";
  o << "config " << g.config.id << " " << g.config.resolution << " "
    << (g.config.downsample == Downsample::kStride4 ? "stride4" : "stride2_maxpool") << " "
    << g.config.width_mult << "\n";
  o << "classes " << g.classes << "\n";
  o << "output_stride " << g.output_stride << "\n";
  o << "head_dim " << g.head_dim << "\n";
  o << "offset_hi " << g.offset_hi << "\n";
  o << "input " << shape_text(g.input_shape) << "\n";
  o << "input_delta " << hex(g.input_delta) << "\n";
  o << "heads " << ref_text(g.heads[0]) << " " << ref_text(g.heads[1]) << " " << ref_text(g.heads[2]) << "\n";
  for (const LayerNode& n : g.nodes) {
    o << "node " << n.name << " " << to_string(n.kind) << " inputs=";
    for (std::size_t i = 0; i < n.inputs.size(); ++i) o << (i ? "," : "") << ref_text(n.inputs[i]);
    o << " kernel=" << n.spec.kernel << " stride=" << n.spec.stride << " dw=" << n.spec.depthwise
      << " pad=" << n.spec.padding << " relu=" << n.relu << " in=" << shape_text(n.in_shape)
      << " out=" << shape_text(n.out_shape) << "\n";
  }
  return o.str();
}

Container graph_to_container(const NetworkGraph& g) {
  Container c;
  c.descriptor = describe_graph(g);
  const std::vector<double> in_steps = g.quantized ? input_steps(g) : std::vector<double>{};
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    if (!n.has_weights()) continue;
    const bool deform = n.kind == LayerKind::kDw3x3Deform;
    if (!g.quantized) {
      c.tensors.push_back(TensorRecord::from(n.name + "/weights", n.weights));
      c.tensors.push_back(TensorRecord::from_f32(n.name + "/bias", n.bias));
      if (deform) {
        c.tensors.push_back(TensorRecord::from(n.name + "/offset_weights", n.offset_weights));
        c.tensors.push_back(TensorRecord::from_f32(n.name + "/offset_bias", n.offset_bias));
      }
      continue;
    }
    c.tensors.push_back(TensorRecord::from(n.name + "/weights", n.qweights));
    c.tensors.push_back(TensorRecord::from_f32(n.name + "/bias", n.bias));
    c.quant.push_back({n.name + "/weights", thresholds_of(n.qweights)});
    c.quant.push_back({n.name + "/act", {in_steps[i], n.requant.out_delta}});
    if (deform) {
      c.tensors.push_back(TensorRecord::from(n.name + "/offset_weights", n.qoffset_weights));
      c.tensors.push_back(TensorRecord::from_f32(n.name + "/offset_bias", n.offset_bias));
      c.quant.push_back({n.name + "/offset_weights", thresholds_of(n.qoffset_weights)});
      c.quant.push_back({n.name + "/offset_act", {n.offset_requant.out_delta}});
    }
  }
  return c;
}

std::string container_precision(const Container& c) {
  std::istringstream in(c.descriptor);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("precision ", 0) == 0) return line.substr(10);
  }
  throw FormatError("descriptor has no precision line");
}

NetworkGraph graph_from_container(const Container& c) {
  NetworkGraph g;
  std::istringstream in(c.descriptor);
  std::string line;
  int line_no = 0;
  bool header = false;
  std::string precision;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty()) continue;
      const std::string& key = tok[0];
      auto need = [&](std::size_t k) {
        if (tok.size() != k) throw FormatError("expected " + std::to_string(k - 1) + " values");
      };
      if (!header) {
        if (line != "codenet-graph 1") throw FormatError("unknown descriptor header '" + line + "'");
        header = true;
      } else if (key == "precision") {
        need(2);
        precision = tok[1];
        if (precision != "fp32" && precision != "w4a8") throw FormatError("unknown precision " + precision);
      } else if (key == "config") {
        need(5);
        if (tok[1].size() != 1) throw FormatError("bad config id");
        g.config.id = tok[1][0];
        g.config.resolution = parse_int(tok[2]);
        if (tok[3] == "stride4") g.config.downsample = Downsample::kStride4;
        else if (tok[3] == "stride2_maxpool") g.config.downsample = Downsample::kStride2MaxPool;
        else throw FormatError("bad downsample " + tok[3]);
        g.config.width_mult = static_cast<int>(parse_int(tok[4]));
      } else if (key == "classes") {
        need(2);
        g.classes = static_cast<int>(parse_int(tok[1]));
      } else if (key == "output_stride") {
        need(2);
        g.output_stride = static_cast<int>(parse_int(tok[1]));
      } else if (key == "head_dim") {
        need(2);
        g.head_dim = static_cast<int>(parse_int(tok[1]));
      } else if (key == "offset_hi") {
        need(2);
        g.offset_hi = static_cast<int>(parse_int(tok[1]));
      } else if (key == "input") {
        need(2);
        g.input_shape = parse_shape(tok[1]);
      } else if (key == "input_delta") {
        need(2);
        g.input_delta = parse_real(tok[1]);
      } else if (key == "heads") {
        need(4);
        for (int h = 0; h < 3; ++h) g.heads[static_cast<std::size_t>(h)] = parse_ref(tok[static_cast<std::size_t>(h) + 1]);
      } else if (key == "node") {
        need(11);
        LayerNode n;
        n.name = tok[1];
        if (seen.count(n.name)) throw FormatError("duplicate node name " + n.name);
        seen[n.name] = static_cast<int>(g.nodes.size());
        const auto kind = layer_kind_from_string(tok[2]);
        if (!kind) throw FormatError("unknown layer kind " + tok[2]);
        n.kind = *kind;
        std::map<std::string, std::string> kv;
        for (std::size_t k = 3; k < tok.size(); ++k) {
          const auto eq = tok[k].find('=');
          if (eq == std::string::npos) throw FormatError("expected key=value, got " + tok[k]);
          kv[tok[k].substr(0, eq)] = tok[k].substr(eq + 1);
        }
        auto field = [&](const char* name) -> const std::string& {
          auto it = kv.find(name);
          if (it == kv.end()) throw FormatError(std::string("node field ") + name + " missing");
          return it->second;
        };
        for (const auto& r : split(field("inputs"), ',')) n.inputs.push_back(parse_ref(r));
        n.spec.kernel = static_cast<int>(parse_int(field("kernel")));
        n.spec.stride = static_cast<int>(parse_int(field("stride")));
        n.spec.depthwise = parse_int(field("dw")) != 0;
        n.spec.padding = static_cast<int>(parse_int(field("pad")));
        n.relu = parse_int(field("relu")) != 0;
        n.in_shape = parse_shape(field("in"));
        n.out_shape = parse_shape(field("out"));
        g.nodes.push_back(std::move(n));
      } else {
        throw FormatError("unknown key " + key);
      }
    } catch (const FormatError& e) {
      throw FormatError("descriptor line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header || precision.empty()) throw FormatError("descriptor is missing its header or precision");
  g.quantized = precision == "w4a8";

  // Tensors and quant params, in node order.
  std::vector<double> in_steps(g.nodes.size(), 0.0);
  for (LayerNode& n : g.nodes) {
    if (!n.has_weights()) continue;
    const bool deform = n.kind == LayerKind::kDw3x3Deform;
    n.bias = vector_of(c.tensor(n.name + "/bias"));
    if (!g.quantized) {
      n.weights = c.tensor(n.name + "/weights").to_float();
      if (deform) {
        n.offset_weights = c.tensor(n.name + "/offset_weights").to_float();
        n.offset_bias = vector_of(c.tensor(n.name + "/offset_bias"));
      }
      continue;
    }
    const QuantParams wq = weight_params(c, n.name + "/weights");
    n.qweights = c.tensor(n.name + "/weights").to_quant(wq);
    n.weights = dequantize(n.qweights);
    const auto& act = c.quant_values(n.name + "/act").values;
    if (act.size() != 2 || !(act[0] > 0.0) || !(act[1] > 0.0)) {
      throw FormatError(n.name + "/act: need two positive steps");
    }
    try {
      if (n.kind == LayerKind::kFull3x3First) {
        n.requant = RequantParams::identity();
        n.requant.out_delta = act[1];
      } else {
        n.requant = derive_requant(act[0], wq.deltas, act[1], to_double(n.bias));
      }
      if (deform) {
        const QuantParams oq = weight_params(c, n.name + "/offset_weights");
        n.qoffset_weights = c.tensor(n.name + "/offset_weights").to_quant(oq);
        n.offset_weights = dequantize(n.qoffset_weights);
        n.offset_bias = vector_of(c.tensor(n.name + "/offset_bias"));
        const auto& od = c.quant_values(n.name + "/offset_act").values;
        if (od.size() != 1 || !(od[0] > 0.0)) throw FormatError(n.name + "/offset_act: need one positive step");
        n.offset_requant = derive_requant(act[0], oq.deltas, od[0], to_double(n.offset_bias));
      }
    } catch (const ParamError& e) {
      throw FormatError("node " + n.name + ": " + e.what());
    } catch (const ShapeError& e) {
      throw FormatError("node " + n.name + ": " + e.what());
    }
  }
  lint(g);
  if (g.quantized) {
    // The stored input step must agree with the producer chain.
    const std::vector<double> steps = input_steps(g);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const LayerNode& n = g.nodes[i];
      if (!n.has_weights()) continue;
      if (c.quant_values(n.name + "/act").values[0] != steps[i]) {
        throw FormatError("node " + n.name + ": stored input step disagrees with its producer");
      }
    }
  }
  return g;
}

}  // namespace dfx
