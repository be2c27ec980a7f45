// Copyright 2026 The streamperc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "streamperc/core.hpp"

namespace streamperc {

/// Intersection over union. Returns 0 when the union is empty, so zero-area
/// boxes never match anything.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) {
    return 0.0;
  }
  return std::clamp(inter / uni, 0.0, 1.0);
}

struct MatchedPair {
  std::size_t detection = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

/// Partial matching between a score-sorted detection list and ground truth.
///
/// Every detection index lands in exactly one of `pairs`,
/// `ignored_detections` or `unmatched_detections`. `unmatched_ground_truth`
/// lists the non-ignore objects nobody claimed.
struct MatchResult {
  std::vector<MatchedPair> pairs;
  /// Detections whose only qualifying partners were ignore objects.
  std::vector<std::size_t> ignored_detections;
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_ground_truth;
};

/// Greedy COCO-protocol assignment.
///
/// Walks `dets` in order (they must be sorted by non-increasing score) and
/// gives each detection the still-free non-ignore ground truth with the
/// highest IoU >= `iou_threshold`, breaking IoU ties toward the lower index.
/// When only ignore objects qualify the detection is set aside as ignored.
/// Ignore objects are never consumed, so several detections may land on the
/// same one.
///
/// Throws OrderError if scores increase anywhere, ValidationError if the
/// threshold is outside (0, 1].
inline MatchResult greedy_match(std::span<const Detection> dets,
                                std::span<const GroundTruthObject> gts,
                                double iou_threshold, bool same_category_only = true) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("iou_threshold must lie in (0, 1]");
  }
  for (std::size_t i = 1; i < dets.size(); ++i) {
    if (dets[i].score() > dets[i - 1].score()) {
      throw OrderError("detections must be sorted by non-increasing score");
    }
  }

  MatchResult result;
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    const Detection& det = dets[d];
    std::size_t best = gts.size();
    double best_iou = -1.0;
    bool hits_ignore = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const GroundTruthObject& gt = gts[g];
      if (same_category_only && gt.category != det.category()) {
        continue;
      }
      if (!gt.ignore && taken[g]) {
        continue;
      }
      const double overlap = iou(det.box(), gt.box);
      if (overlap < iou_threshold) {
        continue;
      }
      if (gt.ignore) {
        hits_ignore = true;
      } else if (overlap > best_iou) {
        best_iou = overlap;
        best = g;
      }
    }
    if (best != gts.size()) {
      taken[best] = true;
      result.pairs.push_back({d, best, best_iou});
    } else if (hits_ignore) {
      result.ignored_detections.push_back(d);
    } else {
      result.unmatched_detections.push_back(d);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!gts[g].ignore && !taken[g]) {
      result.unmatched_ground_truth.push_back(g);
    }
  }
  return result;
}

}  // namespace streamperc
