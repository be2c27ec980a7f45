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

// Shared value types: boxes, detections, frames, prediction events and the
// six-metric evaluation block. All types are immutable-by-convention values
// and safe to share across threads.

#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "streamperc/errors.hpp"

namespace streamperc {

/// Integer microseconds. Every timestamp and latency in the toolkit uses it.
using TimeUs = std::int64_t;

inline constexpr TimeUs kMicrosPerSecond = 1'000'000;

/// Capture time of the k-th frame of a stream running at `fps`, rounded to
/// the nearest microsecond. Each timestamp is computed from k directly, so
/// rounding error never accumulates (|error| <= 0.5 us at any k).
inline TimeUs frame_time_us(std::int64_t k, double fps) {
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw ValidationError("fps must be positive and finite");
  }
  return static_cast<TimeUs>(
      std::llround(static_cast<double>(k) * static_cast<double>(kMicrosPerSecond) / fps));
}

/// Index into the active CategoryTable.
struct CategoryId {
  std::uint32_t value = 0;

  constexpr CategoryId() = default;
  constexpr explicit CategoryId(std::uint32_t v) : value(v) {}

  friend constexpr auto operator<=>(CategoryId, CategoryId) = default;
};

/// Axis-aligned rectangle in pixels, corner form.
///
/// Construction validates: all coordinates finite, x_max >= x_min and
/// y_max >= y_min. Zero-area boxes are legal.
class BoundingBox {
 public:
  /// Throws NonFiniteError on NaN/inf, ExtentError on inverted extent.
  static BoundingBox make(double x_min, double y_min, double x_max, double y_max) {
    if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
        !std::isfinite(y_max)) {
      throw NonFiniteError("box coordinates must be finite");
    }
    if (x_max < x_min || y_max < y_min) {
      throw ExtentError("box has negative extent");
    }
    return BoundingBox(x_min, y_min, x_max, y_max);
  }

  /// From (x, y, width, height).
  static BoundingBox from_xywh(double x, double y, double w, double h) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
      throw NonFiniteError("box coordinates must be finite");
    }
    if (w < 0.0 || h < 0.0) {
      throw ExtentError("box has negative width or height");
    }
    return make(x, y, x + w, y + h);
  }

  /// From center and size, as produced by grid decoding.
  static BoundingBox from_center(double cx, double cy, double w, double h) {
    if (!std::isfinite(w) || !std::isfinite(h)) {
      throw NonFiniteError("box size must be finite");
    }
    if (w < 0.0 || h < 0.0) {
      throw ExtentError("box has negative width or height");
    }
    return make(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
  }

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  BoundingBox(double x_min, double y_min, double x_max, double y_max)
      : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {}

  double x_min_;
  double y_min_;
  double x_max_;
  double y_max_;
};

inline BoundingBox make_box(double x_min, double y_min, double x_max, double y_max) {
  return BoundingBox::make(x_min, y_min, x_max, y_max);
}

inline double box_area(const BoundingBox& b) noexcept { return b.area(); }

/// One scored, labeled box. Score must lie in [0, 1].
class Detection {
 public:
  Detection(BoundingBox box, CategoryId category, double score)
      : box_(box), category_(category), score_(score) {
    if (!std::isfinite(score)) {
      throw NonFiniteError("detection score must be finite");
    }
    if (score < 0.0 || score > 1.0) {
      throw ValidationError("detection score must lie in [0, 1]");
    }
  }

  const BoundingBox& box() const noexcept { return box_; }
  CategoryId category() const noexcept { return category_; }
  double score() const noexcept { return score_; }

  friend bool operator==(const Detection&, const Detection&) = default;

 private:
  BoundingBox box_;
  CategoryId category_;
  double score_;
};

/// Ground-truth annotation. `ignore` objects neither reward a match nor count
/// as a miss.
struct GroundTruthObject {
  BoundingBox box;
  CategoryId category;
  bool ignore = false;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

/// One video frame's metadata and annotations.
struct FrameRecord {
  std::int64_t frame_id = 0;
  std::int64_t sequence_id = 0;
  TimeUs capture_time_us = 0;
  int width = 0;
  int height = 0;
  std::vector<GroundTruthObject> ground_truth;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Throws ValidationError unless width and height are positive.
inline void validate_frame(const FrameRecord& frame) {
  if (frame.width <= 0 || frame.height <= 0) {
    throw ValidationError("frame " + std::to_string(frame.frame_id) +
                          " has non-positive image size");
  }
}

/// Detector output for one source frame, stamped with the time it became
/// available.
struct PredictionEvent {
  std::int64_t source_frame_id = 0;
  TimeUs emit_time_us = 0;
  std::vector<Detection> detections;

  friend bool operator==(const PredictionEvent&, const PredictionEvent&) = default;
};

/// Detections keyed by frame id. A missing key means "no detections".
using PredictionMap = std::map<std::int64_t, std::vector<Detection>>;

/// Sentinel for a metric slice with no ground truth.
inline constexpr double kNoGroundTruth = -1.0;

struct EvalResult {
  double ap = kNoGroundTruth;
  double ap50 = kNoGroundTruth;
  double ap75 = kNoGroundTruth;
  double ap_small = kNoGroundTruth;
  double ap_medium = kNoGroundTruth;
  double ap_large = kNoGroundTruth;
  std::map<CategoryId, double> per_category_ap;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

}  // namespace streamperc
