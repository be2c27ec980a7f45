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

// COCO-protocol average precision over a set of frames.
//
// For each (category, IoU threshold, area range) slice, detections are
// truncated per frame, matched per frame with greedy_match, pooled across
// frames and sorted by descending score. The cumulative precision/recall
// curve is made monotone by a running maximum from the right and sampled at
// evenly spaced recall points; the slice AP is the mean of those samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "streamperc/core.hpp"
#include "streamperc/matching.hpp"

namespace streamperc {

/// Half-open area interval [min_area, max_area) in pixels^2.
struct AreaRange {
  std::string label;
  double min_area = 0.0;
  double max_area = std::numeric_limits<double>::infinity();

  bool contains(double area) const noexcept { return area >= min_area && area < max_area; }
};

/// 0.50, 0.55, ..., 0.95.
inline std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) {
    t.push_back(static_cast<double>(50 + 5 * k) / 100.0);
  }
  return t;
}

inline std::vector<AreaRange> default_area_ranges() {
  const double inf = std::numeric_limits<double>::infinity();
  return {{"small", 0.0, 32.0 * 32.0}, {"medium", 32.0 * 32.0, 96.0 * 96.0}, {"large", 96.0 * 96.0, inf}};
}

struct EvalConfig {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  int recall_points = 101;
  int max_detections_per_frame = 100;
  /// Must be disjoint, sorted, and cover [0, inf).
  std::vector<AreaRange> area_ranges = default_area_ranges();

  void validate() const {
    if (iou_thresholds.empty()) {
      throw ValidationError("iou_thresholds must not be empty");
    }
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
      const double t = iou_thresholds[i];
      if (!(t > 0.0 && t <= 1.0)) {
        throw ValidationError("iou thresholds must lie in (0, 1]");
      }
      if (i > 0 && !(t > iou_thresholds[i - 1])) {
        throw ValidationError("iou thresholds must be strictly increasing");
      }
    }
    if (recall_points < 2) {
      throw ValidationError("recall_points must be at least 2");
    }
    if (max_detections_per_frame < 1) {
      throw ValidationError("max_detections_per_frame must be at least 1");
    }
    if (area_ranges.empty()) {
      throw ValidationError("area_ranges must not be empty");
    }
    if (area_ranges.front().min_area != 0.0 ||
        area_ranges.back().max_area != std::numeric_limits<double>::infinity()) {
      throw ValidationError("area ranges must cover [0, inf)");
    }
    for (std::size_t i = 0; i < area_ranges.size(); ++i) {
      if (!(area_ranges[i].max_area > area_ranges[i].min_area)) {
        throw ValidationError("area range '" + area_ranges[i].label + "' is empty");
      }
      if (i > 0 && area_ranges[i].min_area != area_ranges[i - 1].max_area) {
        throw ValidationError("area ranges must be contiguous and disjoint");
      }
    }
  }
};

/// Cumulative PR data for one slice plus its sampled, interpolated form.
struct PrecisionRecallCurve {
  /// Raw cumulative recall/precision, one entry per scored detection.
  std::vector<double> recalls;
  std::vector<double> precisions;
  /// The sampling grid: k / (recall_points - 1).
  std::vector<double> recall_thresholds;
  /// Right-running-max precision sampled at each recall threshold; 0 where
  /// the threshold is never reached.
  std::vector<double> interpolated_precisions;
  std::size_t num_positives = 0;
  /// Mean of interpolated_precisions, or kNoGroundTruth when num_positives == 0.
  double average_precision = kNoGroundTruth;
};

namespace detail {

/// One detection's fate within a slice after per-frame matching.
struct ScoredOutcome {
  double score;
  bool true_positive;
};

struct FrameView {
  const FrameRecord* frame;
  const std::vector<Detection>* detections;  // may be null
};

/// Frames in input order paired with their predictions. Validates ids.
inline std::vector<FrameView> index_frames(std::span<const FrameRecord> frames,
                                           const PredictionMap& predictions) {
  std::unordered_set<std::int64_t> ids;
  ids.reserve(frames.size());
  std::vector<FrameView> views;
  views.reserve(frames.size());
  for (const FrameRecord& f : frames) {
    validate_frame(f);
    if (!ids.insert(f.frame_id).second) {
      throw ValidationError("duplicate frame id " + std::to_string(f.frame_id));
    }
    auto it = predictions.find(f.frame_id);
    views.push_back({&f, it == predictions.end() ? nullptr : &it->second});
  }
  for (const auto& [frame_id, dets] : predictions) {
    if (!ids.contains(frame_id)) {
      throw UnknownFrameError("predictions reference unknown frame " + std::to_string(frame_id));
    }
  }
  return views;
}

/// Per-frame detections of one category: sorted by descending score with a
/// stable tie order, then truncated to `max_dets`.
inline std::vector<Detection> top_detections(const std::vector<Detection>* dets, CategoryId category,
                                             int max_dets) {
  std::vector<Detection> out;
  if (dets == nullptr) {
    return out;
  }
  for (const Detection& d : *dets) {
    if (d.category() == category) {
      out.push_back(d);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score() > b.score(); });
  if (out.size() > static_cast<std::size_t>(max_dets)) {
    out.erase(out.begin() + max_dets, out.end());
  }
  return out;
}

struct SliceTally {
  std::vector<ScoredOutcome> outcomes;  // globally sorted by descending score
  std::size_t num_positives = 0;
};

/// Matches every frame for one (category, threshold, area) slice.
/// `frame_dets[i]` holds the prepared detections of frame i for `category`.
inline SliceTally tally_slice(std::span<const FrameView> frames,
                              std::span<const std::vector<Detection>> frame_dets, CategoryId category,
                              double iou_threshold, const AreaRange& area) {
  SliceTally tally;
  std::vector<GroundTruthObject> gts;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    gts.clear();
    for (const GroundTruthObject& gt : frames[i].frame->ground_truth) {
      if (gt.category != category) {
        continue;
      }
      GroundTruthObject sliced = gt;
      sliced.ignore = gt.ignore || !area.contains(gt.box.area());
      if (!sliced.ignore) {
        ++tally.num_positives;
      }
      gts.push_back(sliced);
    }
    const std::vector<Detection>& dets = frame_dets[i];
    if (dets.empty()) {
      continue;
    }
    const MatchResult m = greedy_match(dets, gts, iou_threshold, true);
    // Outcome per detection in rank order; ignored ones are dropped.
    std::vector<signed char> fate(dets.size(), 0);  // 1 TP, -1 FP, 0 ignored
    for (const MatchedPair& p : m.pairs) {
      fate[p.detection] = 1;
    }
    for (std::size_t d : m.unmatched_detections) {
      // Unmatched detections outside the area range are not charged.
      fate[d] = area.contains(dets[d].box().area()) ? -1 : 0;
    }
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (fate[d] != 0) {
        tally.outcomes.push_back({dets[d].score(), fate[d] > 0});
      }
    }
  }
  std::stable_sort(tally.outcomes.begin(), tally.outcomes.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  return tally;
}

inline PrecisionRecallCurve curve_from_tally(const SliceTally& tally, int recall_points) {
  PrecisionRecallCurve curve;
  curve.num_positives = tally.num_positives;
  curve.recall_thresholds.resize(static_cast<std::size_t>(recall_points));
  for (int k = 0; k < recall_points; ++k) {
    curve.recall_thresholds[static_cast<std::size_t>(k)] =
        static_cast<double>(k) / static_cast<double>(recall_points - 1);
  }
  curve.interpolated_precisions.assign(static_cast<std::size_t>(recall_points), 0.0);
  if (tally.num_positives == 0) {
    return curve;
  }

  const double npos = static_cast<double>(tally.num_positives);
  std::size_t tp = 0;
  std::size_t fp = 0;
  curve.recalls.reserve(tally.outcomes.size());
  curve.precisions.reserve(tally.outcomes.size());
  for (const ScoredOutcome& o : tally.outcomes) {
    (o.true_positive ? tp : fp) += 1;
    curve.recalls.push_back(static_cast<double>(tp) / npos);
    curve.precisions.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }

  std::vector<double> envelope = curve.precisions;
  for (std::size_t i = envelope.size(); i-- > 1;) {
    envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < curve.recall_thresholds.size(); ++k) {
    auto it = std::lower_bound(curve.recalls.begin(), curve.recalls.end(),
                               curve.recall_thresholds[k]);
    if (it == curve.recalls.end()) {
      break;  // recall never reaches this threshold, nor any larger one
    }
    const double p = envelope[static_cast<std::size_t>(it - curve.recalls.begin())];
    curve.interpolated_precisions[k] = p;
    sum += p;
  }
  curve.average_precision = sum / static_cast<double>(recall_points);
  return curve;
}

inline const AreaRange* find_area(const EvalConfig& config, const std::string& label) {
  for (const AreaRange& a : config.area_ranges) {
    if (a.label == label) {
      return &a;
    }
  }
  return nullptr;
}

inline std::optional<std::size_t> find_threshold(const EvalConfig& config, double value) {
  for (std::size_t i = 0; i < config.iou_thresholds.size(); ++i) {
    if (std::abs(config.iou_thresholds[i] - value) < 1e-12) {
      return i;
    }
  }
  return std::nullopt;
}

/// Mean over the non-sentinel entries, or the sentinel if there are none.
inline double mean_present(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (v > kNoGroundTruth) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? kNoGroundTruth : sum / static_cast<double>(n);
}

}  // namespace detail

/// COCO-style six-metric evaluation.
///
/// Frames without an entry in `predictions` are scored against no
/// detections. Per-frame truncation to `max_detections_per_frame` happens per
/// category, after sorting by score. Categories that only appear in
/// detections are reported with the sentinel and excluded from every mean.
///
/// Throws UnknownFrameError for predictions on a frame not in `frames`,
/// EmptyDatasetError when no frame has a non-ignore ground-truth object.
inline EvalResult evaluate_offline(std::span<const FrameRecord> frames, const PredictionMap& predictions,
                                   const EvalConfig& config = {}) {
  config.validate();
  const std::vector<detail::FrameView> views = detail::index_frames(frames, predictions);

  std::set<CategoryId> categories;
  bool any_positive = false;
  for (const FrameRecord& f : frames) {
    for (const GroundTruthObject& gt : f.ground_truth) {
      categories.insert(gt.category);
      any_positive = any_positive || !gt.ignore;
    }
  }
  if (!any_positive) {
    throw EmptyDatasetError("no frame carries a non-ignore ground-truth object");
  }
  for (const auto& [frame_id, dets] : predictions) {
    for (const Detection& d : dets) {
      categories.insert(d.category());
    }
  }

  const AreaRange all_area{"all", 0.0, std::numeric_limits<double>::infinity()};
  std::vector<const AreaRange*> areas{&all_area};
  for (const AreaRange& a : config.area_ranges) {
    areas.push_back(&a);
  }

  const std::size_t num_t = config.iou_thresholds.size();
  // slice_ap[area][category][threshold], flattened per area.
  std::vector<std::vector<double>> slice_ap(areas.size());
  std::vector<std::vector<Detection>> frame_dets(views.size());
  EvalResult result;

  std::vector<double> per_threshold_50;
  std::vector<double> per_threshold_75;
  const auto t50 = detail::find_threshold(config, 0.50);
  const auto t75 = detail::find_threshold(config, 0.75);

  for (CategoryId category : categories) {
    for (std::size_t i = 0; i < views.size(); ++i) {
      frame_dets[i] = detail::top_detections(views[i].detections, category,
                                             config.max_detections_per_frame);
    }
    for (std::size_t a = 0; a < areas.size(); ++a) {
      for (std::size_t t = 0; t < num_t; ++t) {
        const detail::SliceTally tally = detail::tally_slice(views, frame_dets, category,
                                                             config.iou_thresholds[t], *areas[a]);
        const double ap = detail::curve_from_tally(tally, config.recall_points).average_precision;
        slice_ap[a].push_back(ap);
        if (a == 0 && t50 && t == *t50) {
          per_threshold_50.push_back(ap);
        }
        if (a == 0 && t75 && t == *t75) {
          per_threshold_75.push_back(ap);
        }
      }
    }
    const std::span<const double> cat_all(slice_ap[0].end() - static_cast<std::ptrdiff_t>(num_t),
                                          slice_ap[0].end());
    result.per_category_ap[category] = detail::mean_present(cat_all);
  }

  result.ap = detail::mean_present(slice_ap[0]);
  result.ap50 = detail::mean_present(per_threshold_50);
  result.ap75 = detail::mean_present(per_threshold_75);
  const auto area_metric = [&](const char* label) {
    for (std::size_t a = 1; a < areas.size(); ++a) {
      if (areas[a]->label == label) {
        return detail::mean_present(slice_ap[a]);
      }
    }
    return kNoGroundTruth;
  };
  result.ap_small = area_metric("small");
  result.ap_medium = area_metric("medium");
  result.ap_large = area_metric("large");
  return result;
}

/// Precision/recall curve for one category at one IoU threshold, restricted
/// to the area range labelled `area_label` ("all" for no restriction).
inline PrecisionRecallCurve pr_curve(std::span<const FrameRecord> frames, const PredictionMap& predictions,
                                     double iou_threshold, CategoryId category,
                                     const EvalConfig& config = {},
                                     const std::string& area_label = "all") {
  config.validate();
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("iou_threshold must lie in (0, 1]");
  }
  AreaRange area{"all", 0.0, std::numeric_limits<double>::infinity()};
  if (area_label != "all") {
    const AreaRange* found = detail::find_area(config, area_label);
    if (found == nullptr) {
      throw ValidationError("unknown area range '" + area_label + "'");
    }
    area = *found;
  }
  const std::vector<detail::FrameView> views = detail::index_frames(frames, predictions);
  std::vector<std::vector<Detection>> frame_dets(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    frame_dets[i] = detail::top_detections(views[i].detections, category,
                                           config.max_detections_per_frame);
  }
  const detail::SliceTally tally = detail::tally_slice(views, frame_dets, category, iou_threshold, area);
  return detail::curve_from_tally(tally, config.recall_points);
}

}  // namespace streamperc
