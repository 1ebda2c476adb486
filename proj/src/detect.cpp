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

#include "dfx/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "dfx/error.hpp"

namespace dfx {

double Box::area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }

std::vector<Peak> find_peaks(const FloatTensor& heatmap, int top_k) {
  const Shape4& s = heatmap.shape();
  if (s.n != 1) throw ShapeError("find_peaks expects a single heatmap, got " + s.str());
  std::vector<Peak> peaks;
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t x = 0; x < s.w; ++x) {
        const float v = heatmap(0, y, x, c);
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const std::int64_t ny = y + dy;
            const std::int64_t nx = x + dx;
            if ((dy == 0 && dx == 0) || ny < 0 || nx < 0 || ny >= s.h || nx >= s.w) continue;
            if (heatmap(0, ny, nx, c) > v) {
              peak = false;
              break;
            }
          }
        }
        if (peak) peaks.push_back({static_cast<int>(c), static_cast<int>(x), static_cast<int>(y), v});
      }
    }
  }
  // Candidates were produced in (class, y, x) order already.
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (top_k >= 0 && peaks.size() > static_cast<std::size_t>(top_k)) {
    peaks.resize(static_cast<std::size_t>(top_k));
  }
  return peaks;
}

std::vector<Detection> decode(const std::vector<Peak>& peaks, const FloatTensor& offset,
                              const FloatTensor& size, int output_stride) {
  if (offset.shape().c != 2 || size.shape().c != 2 || !(offset.shape() == size.shape())) {
    throw ShapeError("offset/size heads must be (1, H, W, 2), got " + offset.shape().str() +
                     " and " + size.shape().str());
  }
  std::vector<Detection> out;
  out.reserve(peaks.size());
  const double r = output_stride;
  for (const Peak& p : peaks) {
    const double cx = p.x + static_cast<double>(offset.at(0, p.y, p.x, 0));
    const double cy = p.y + static_cast<double>(offset.at(0, p.y, p.x, 1));
    const double hw = std::max(0.0, static_cast<double>(size.at(0, p.y, p.x, 0))) / 2.0;
    const double hh = std::max(0.0, static_cast<double>(size.at(0, p.y, p.x, 1))) / 2.0;
    Detection d;
    d.cls = p.cls;
    d.confidence = p.score;
    d.box = {(cx - hw) * r, (cy - hh) * r, (cx + hw) * r, (cy + hh) * r};
    out.push_back(d);
  }
  return out;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = iw > 0 && ih > 0 ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         int cls, double iou_threshold, ApInterpolation interp) {
  std::vector<const GroundTruth*> truth;
  for (const auto& g : gts) {
    if (g.cls == cls) truth.push_back(&g);
  }
  if (truth.empty()) throw ParamError("no ground truth for class " + std::to_string(cls));
  std::vector<const Detection*> ranked;
  for (const auto& d : dets) {
    if (d.cls == cls) ranked.push_back(&d);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Detection* a, const Detection* b) { return a->confidence > b->confidence; });
  std::vector<bool> matched(truth.size(), false);
  std::vector<double> precision;
  std::vector<double> recall;
  int tp = 0;
  int fp = 0;
  for (const Detection* d : ranked) {
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (matched[i]) continue;
      const double v = iou(d->box, truth[i]->box);
      if (v >= best_iou) {
        best_iou = v;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      matched[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(truth.size()));
  }
  if (interp == ApInterpolation::kElevenPoint) {
    double ap = 0;
    for (int k = 0; k <= 10; ++k) {
      double p = 0;
      for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] >= k / 10.0 - 1e-12) p = std::max(p, precision[i]);
      }
      ap += p / 11.0;
    }
    return ap;
  }
  // Precision envelope, then the area under the recall steps.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0;
  double prev_r = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

double ap50(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
            ApInterpolation interp) {
  if (gts.empty()) throw ParamError("AP50 is undefined without ground truth");
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.cls);
  double sum = 0;
  for (int c : classes) sum += average_precision(dets, gts, c, 0.5, interp);
  return sum / static_cast<double>(classes.size());
}

std::string format_detections(const std::vector<Detection>& dets) {
  std::string out;
  char line[160];
  for (const auto& d : dets) {
    std::snprintf(line, sizeof line, "%d %.4f %.4f %.4f %.4f %.6f\n", d.cls, d.box.x1, d.box.y1,
                  d.box.x2, d.box.y2, d.confidence);
    out += line;
  }
  return out;
}

std::vector<Detection> parse_detections(std::string_view text) {
  std::vector<Detection> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Detection d;
    std::string extra;
    if (!(fields >> d.cls >> d.box.x1 >> d.box.y1 >> d.box.x2 >> d.box.y2 >> d.confidence) ||
        (fields >> extra)) {
      throw FormatError("detection line " + std::to_string(lineno) + ": expected 6 fields");
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace dfx
