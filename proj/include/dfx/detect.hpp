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

#ifndef DFX_DETECT_HPP_
#define DFX_DETECT_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "dfx/tensor.hpp"

namespace dfx {

struct Box {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;
  double area() const;
  bool valid() const { return x1 <= x2 && y1 <= y2; }
  bool operator==(const Box&) const = default;
};

struct Detection {
  int cls = 0;
  double confidence = 0;
  Box box;
  bool operator==(const Detection&) const = default;
};

struct GroundTruth {
  int cls = 0;
  Box box;
};

struct Peak {
  int cls = 0;
  int x = 0;
  int y = 0;
  float score = 0;
  bool operator==(const Peak&) const = default;
};

// Local maxima of a (1, H, W, C) heatmap: values >= all eight neighbours
// (outside counts as -inf). The `top_k` highest are kept; equal scores
// are ordered by (class, y, x).
std::vector<Peak> find_peaks(const FloatTensor& heatmap, int top_k = 100);

// Boxes (x + dx -/+ w/2, y + dy -/+ h/2) scaled by the output stride.
// Offset channels are (dx, dy); size channels are (w, h), negative sizes
// read as zero.
std::vector<Detection> decode(const std::vector<Peak>& peaks, const FloatTensor& offset,
                              const FloatTensor& size, int output_stride = 4);

double iou(const Box& a, const Box& b);

enum class ApInterpolation { kAllPoint, kElevenPoint };

// Single-class average precision at an IoU threshold. Detections are
// ranked by confidence (stable) and each claims the unmatched ground
// truth it overlaps most.
double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         int cls, double iou_threshold = 0.5,
                         ApInterpolation interp = ApInterpolation::kAllPoint);

// Mean of average_precision over the classes present in `gts`. Throws
// ParamError when `gts` is empty.
double ap50(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
            ApInterpolation interp = ApInterpolation::kAllPoint);

// One "class x1 y1 x2 y2 confidence" line per detection.
std::string format_detections(const std::vector<Detection>& dets);
// Throws FormatError on malformed lines.
std::vector<Detection> parse_detections(std::string_view text);

}  // namespace dfx

#endif  // DFX_DETECT_HPP_
