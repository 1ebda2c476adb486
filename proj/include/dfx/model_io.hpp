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

#ifndef DFX_MODEL_IO_HPP_
#define DFX_MODEL_IO_HPP_

#include <string>

#include "dfx/container.hpp"
#include "dfx/graph.hpp"

namespace dfx {

// Text descriptor: one "key value" line per graph attribute, then one
// "node" line per layer with key=value fields. Reals are written as
// hexadecimal floats so they read back exactly.
std::string describe_graph(const NetworkGraph& g);

// A float graph becomes an fp32 container (f32 weights and biases). A
// quantized graph becomes a w4a8 container: i4 weights, f32 biases,
// per-channel weight thresholds and the layer's input/output activation
// steps. Requantization params are re-derived on load, so they are not
// stored.
Container graph_to_container(const NetworkGraph& g);

// Rebuilds and lints the graph. Throws FormatError on any inconsistency.
NetworkGraph graph_from_container(const Container& c);

// "fp32" or "w4a8" per the descriptor's precision line.
std::string container_precision(const Container& c);

}  // namespace dfx

#endif  // DFX_MODEL_IO_HPP_
