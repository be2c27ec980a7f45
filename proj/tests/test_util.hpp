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

// Random instance generators and filesystem helpers shared by the test
// binaries.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "oracle/reference.hpp"
#include "streamperc/core.hpp"
#include "streamperc/offline_eval.hpp"

namespace streamperc::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Boxes on a coarse grid so that exact IoU ties and threshold hits happen.
inline BoundingBox random_box(Rng& rng, double extent = 100.0, bool allow_degenerate = false) {
  const auto coord = [&] { return std::floor(uniform(rng, 0.0, extent)); };
  double x0 = coord();
  double y0 = coord();
  double w = std::floor(uniform(rng, allow_degenerate ? 0.0 : 1.0, 60.0));
  double h = std::floor(uniform(rng, allow_degenerate ? 0.0 : 1.0, 60.0));
  return make_box(x0, y0, x0 + w, y0 + h);
}

/// A box near `b`: jittered corners, so IoU spans the interesting range.
inline BoundingBox near_box(Rng& rng, const BoundingBox& b) {
  const double s = std::max(1.0, 0.25 * std::max(b.width(), b.height()));
  const double x0 = b.x_min() + std::round(uniform(rng, -s, s));
  const double y0 = b.y_min() + std::round(uniform(rng, -s, s));
  const double x1 = std::max(x0, b.x_max() + std::round(uniform(rng, -s, s)));
  const double y1 = std::max(y0, b.y_max() + std::round(uniform(rng, -s, s)));
  return make_box(x0, y0, x1, y1);
}

/// Scores from a small set so ties occur, unless `distinct`.
inline double random_score(Rng& rng, bool distinct) {
  if (distinct) {
    return uniform(rng, 0.0, 1.0);
  }
  return uniform_int(rng, 0, 10) / 10.0;
}

struct Instance {
  std::vector<FrameRecord> frames;
  PredictionMap predictions;
};

struct InstanceShape {
  int max_frames = 3;
  int max_gts = 10;
  int max_dets = 20;
  int max_categories = 3;
  bool distinct_scores = false;
  /// Box scale; larger values exercise the medium/large area ranges.
  double extent = 100.0;
};

/// Random multi-frame instance with totals capped by `shape`. Ground truth
/// is guaranteed to contain at least one non-ignore object.
inline Instance random_instance(Rng& rng, const InstanceShape& shape = {}) {
  Instance inst;
  const int n_frames = uniform_int(rng, 1, shape.max_frames);
  const int n_cats = uniform_int(rng, 1, shape.max_categories);
  const int n_gts = uniform_int(rng, 1, shape.max_gts);
  const int n_dets = uniform_int(rng, 0, shape.max_dets);
  const double scale = shape.extent / 100.0;
  for (int f = 0; f < n_frames; ++f) {
    FrameRecord fr;
    fr.frame_id = 100 + f;
    fr.capture_time_us = f * 33333;
    fr.width = static_cast<int>(200 * scale);
    fr.height = static_cast<int>(200 * scale);
    inst.frames.push_back(fr);
  }
  const auto scaled = [&](const BoundingBox& b) {
    return make_box(b.x_min() * scale, b.y_min() * scale, b.x_max() * scale, b.y_max() * scale);
  };
  for (int g = 0; g < n_gts; ++g) {
    FrameRecord& fr = inst.frames[static_cast<std::size_t>(uniform_int(rng, 0, n_frames - 1))];
    const bool ignore = g > 0 && uniform_int(rng, 0, 9) == 0;
    fr.ground_truth.push_back({scaled(random_box(rng, 100.0, true)),
                               CategoryId{static_cast<std::uint32_t>(uniform_int(rng, 0, n_cats - 1))}, ignore});
  }
  for (int d = 0; d < n_dets; ++d) {
    const FrameRecord& fr = inst.frames[static_cast<std::size_t>(uniform_int(rng, 0, n_frames - 1))];
    BoundingBox box = scaled(random_box(rng));
    CategoryId cat{static_cast<std::uint32_t>(uniform_int(rng, 0, n_cats - 1))};
    // Mostly place detections near some ground truth so matches happen.
    if (!fr.ground_truth.empty() && uniform_int(rng, 0, 3) != 0) {
      const GroundTruthObject& gt =
          fr.ground_truth[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(fr.ground_truth.size()) - 1))];
      box = near_box(rng, gt.box);
      if (uniform_int(rng, 0, 4) != 0) {
        cat = gt.category;
      }
    }
    inst.predictions[fr.frame_id].emplace_back(box, cat, random_score(rng, shape.distinct_scores));
  }
  return inst;
}

/// Total number of non-ignore ground-truth objects.
inline std::size_t positives(const std::vector<FrameRecord>& frames) {
  std::size_t n = 0;
  for (const FrameRecord& f : frames) {
    for (const GroundTruthObject& g : f.ground_truth) {
      n += g.ignore ? 0 : 1;
    }
  }
  return n;
}

/// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("streamperc_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    const std::string p = file(name);
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace streamperc::testing
