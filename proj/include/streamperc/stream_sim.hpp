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

// Discrete-event simulation of a single real-time detector consuming a frame
// stream. Latency comes from a resolution table; the simulator emits the
// timestamped prediction stream that streaming evaluation scores.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "streamperc/core.hpp"
#include "streamperc/offline_eval.hpp"
#include "streamperc/postprocess.hpp"
#include "streamperc/streaming_eval.hpp"

namespace streamperc {

struct LatencyEntry {
  int width = 0;
  int height = 0;
  /// End-to-end latency (pre-processing, forward pass and post-processing).
  TimeUs latency_us = 0;

  std::int64_t pixels() const noexcept { return std::int64_t{width} * height; }

  friend bool operator==(const LatencyEntry&, const LatencyEntry&) = default;
};

enum class Interpolation { nearest, linear_in_pixels };

/// Multiplicative lognormal noise, exp(N(0, sigma^2)).
struct Jitter {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Resolution -> latency table. Entries are kept sorted by pixel count.
class LatencyModel {
 public:
  explicit LatencyModel(std::vector<LatencyEntry> entries,
                        Interpolation interpolation = Interpolation::nearest,
                        std::optional<Jitter> jitter = std::nullopt)
      : entries_(std::move(entries)), interpolation_(interpolation), jitter_(jitter) {
    if (entries_.empty()) {
      throw ValidationError("latency table must not be empty");
    }
    for (const LatencyEntry& e : entries_) {
      if (e.width <= 0 || e.height <= 0) {
        throw ValidationError("latency table resolutions must be positive");
      }
      if (e.latency_us < 0) {
        throw ValidationError("latency table entries must not be negative");
      }
    }
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const LatencyEntry& a, const LatencyEntry& b) { return a.pixels() < b.pixels(); });
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (entries_[i].pixels() == entries_[i - 1].pixels()) {
        throw ValidationError("latency table has two entries with the same pixel count");
      }
    }
    if (jitter_ && (!(jitter_->sigma >= 0.0) || !std::isfinite(jitter_->sigma))) {
      throw ValidationError("jitter sigma must be a non-negative finite number");
    }
  }

  /// Single-entry model, mostly for tests and idealized detectors.
  static LatencyModel constant(TimeUs latency_us, Size resolution = {1, 1}) {
    return LatencyModel({{resolution.width, resolution.height, latency_us}});
  }

  const std::vector<LatencyEntry>& entries() const noexcept { return entries_; }
  Interpolation interpolation() const noexcept { return interpolation_; }
  const std::optional<Jitter>& jitter() const noexcept { return jitter_; }

 private:
  std::vector<LatencyEntry> entries_;
  Interpolation interpolation_;
  std::optional<Jitter> jitter_;
};

/// The five measured operating points of the reference detector (TensorRT,
/// fused pre/post-processing), widest first.
inline std::vector<LatencyEntry> reference_latency_entries() {
  return {{1440, 2304, 28100}, {1280, 2048, 21400}, {1200, 1920, 20500}, {1120, 1792, 19700}, {960, 1536, 16000}};
}

/// Deterministic latency for a resolution; ignores jitter.
///
/// Exact table hits return the entry. Otherwise nearest mode picks the
/// closest pixel count (the smaller entry on ties) and linear mode
/// interpolates on pixel count, rounding half away from zero. Linear mode
/// throws ExtrapolationError outside the table's pixel span.
inline TimeUs latency_for(const LatencyModel& model, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw ValidationError("resolution must be positive");
  }
  const std::int64_t p = std::int64_t{width} * height;
  const auto& e = model.entries();
  for (const LatencyEntry& entry : e) {
    if (entry.pixels() == p) {
      return entry.latency_us;
    }
  }
  if (model.interpolation() == Interpolation::nearest) {
    const LatencyEntry* best = &e.front();
    for (const LatencyEntry& entry : e) {
      const std::int64_t d = std::llabs(entry.pixels() - p);
      if (d < std::llabs(best->pixels() - p)) {
        best = &entry;
      }
    }
    return best->latency_us;
  }
  if (p < e.front().pixels() || p > e.back().pixels()) {
    throw ExtrapolationError("resolution " + std::to_string(width) + "x" + std::to_string(height) +
                             " lies outside the latency table span");
  }
  auto hi = std::upper_bound(e.begin(), e.end(), p,
                             [](std::int64_t v, const LatencyEntry& x) { return v < x.pixels(); });
  auto lo = std::prev(hi);
  const std::int64_t num = (hi->latency_us - lo->latency_us) * (p - lo->pixels());
  const std::int64_t den = hi->pixels() - lo->pixels();
  // Integer division rounding half away from zero.
  const std::int64_t q = (2 * std::llabs(num) + den) / (2 * den);
  return lo->latency_us + (num < 0 ? -q : q);
}

/// Draws per-invocation latencies, applying the model's jitter if any.
/// Two samplers built from the same model produce the same sequence.
class LatencySampler {
 public:
  explicit LatencySampler(const LatencyModel& model)
      : model_(model), rng_(model.jitter() ? model.jitter()->seed : 0) {
    if (model.jitter()) {
      noise_ = std::lognormal_distribution<double>(0.0, model.jitter()->sigma);
    }
  }

  TimeUs next(Size resolution) {
    const TimeUs base = latency_for(model_, resolution.width, resolution.height);
    if (!model_.jitter() || model_.jitter()->sigma == 0.0) {
      return base;
    }
    return static_cast<TimeUs>(std::llround(static_cast<double>(base) * noise_(rng_)));
  }

 private:
  const LatencyModel& model_;
  std::mt19937_64 rng_;
  std::lognormal_distribution<double> noise_;
};

/// Parses `width height latency_us` lines. `#` starts a comment.
inline std::vector<LatencyEntry> parse_latency_table(std::istream& in) {
  std::vector<LatencyEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) {
      continue;
    }
    fields.clear();
    fields.str(line);
    long long w = 0;
    long long h = 0;
    long long lat = 0;
    std::string extra;
    if (!(fields >> w >> h >> lat) || (fields >> extra)) {
      throw ParseError("latency table line " + std::to_string(line_no) +
                       ": expected 'width height latency_us'");
    }
    if (w <= 0 || h <= 0 || w > 1'000'000 || h > 1'000'000) {
      throw ParseError("latency table line " + std::to_string(line_no) + ": resolution out of range");
    }
    if (lat < 0) {
      throw ParseError("latency table line " + std::to_string(line_no) + ": negative latency");
    }
    entries.push_back({static_cast<int>(w), static_cast<int>(h), static_cast<TimeUs>(lat)});
  }
  return entries;
}

inline LatencyModel load_latency_model(const std::string& path,
                                       Interpolation interpolation = Interpolation::nearest,
                                       std::optional<Jitter> jitter = std::nullopt) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open latency table '" + path + "'");
  }
  return LatencyModel(parse_latency_table(in), interpolation, jitter);
}

struct SchedulePolicy {
  enum class Kind { blocking_latest, fixed_stride };

  Kind kind = Kind::blocking_latest;
  int stride = 1;

  static SchedulePolicy blocking_latest() { return {}; }

  static SchedulePolicy fixed_stride(int k) {
    if (k < 1) {
      throw ValidationError("fixed_stride requires k >= 1");
    }
    return {Kind::fixed_stride, k};
  }

  /// "blocking_latest" or "fixed_stride:<k>".
  static SchedulePolicy parse(const std::string& text) {
    if (text == "blocking_latest") {
      return blocking_latest();
    }
    const std::string prefix = "fixed_stride:";
    if (text.rfind(prefix, 0) == 0) {
      const std::string digits = text.substr(prefix.size());
      if (digits.empty() || digits.size() > 9 ||
          !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ValidationError("bad fixed_stride value in '" + text + "'");
      }
      return fixed_stride(std::stoi(digits));
    }
    throw ValidationError("unknown schedule policy '" + text + "'");
  }
};

struct BusyInterval {
  std::int64_t sequence_id = 0;
  TimeUs start_us = 0;
  TimeUs end_us = 0;
  /// Index of the processed frame in the simulate() input.
  std::size_t frame_index = 0;

  friend bool operator==(const BusyInterval&, const BusyInterval&) = default;
};

struct SimTrace {
  /// Sorted by emit time; ties keep ascending sequence order.
  std::vector<PredictionEvent> events;
  /// Indices into the input frames, ascending.
  std::vector<std::size_t> processed_frames;
  std::vector<std::size_t> dropped_frames;
  /// Sorted by (sequence_id, start_us); non-overlapping within a sequence.
  std::vector<BusyInterval> busy_intervals;

  friend bool operator==(const SimTrace&, const SimTrace&) = default;
};

using Detector = std::function<std::vector<Detection>(const FrameRecord&)>;

/// Emits every non-ignore ground-truth box of the frame with score 1.
inline Detector oracle_detector() {
  return [](const FrameRecord& frame) {
    std::vector<Detection> out;
    for (const GroundTruthObject& gt : frame.ground_truth) {
      if (!gt.ignore) {
        out.emplace_back(gt.box, gt.category, 1.0);
      }
    }
    return out;
  };
}

/// Replays precomputed per-frame detections.
inline Detector replay_detector(PredictionMap predictions) {
  return [preds = std::move(predictions)](const FrameRecord& frame) {
    auto it = preds.find(frame.frame_id);
    return it == preds.end() ? std::vector<Detection>{} : it->second;
  };
}

/// Runs the detector over `frames` under `policy`.
///
/// Each sequence is simulated independently; its clock starts at its first
/// capture time with the detector idle. The detector's output is fixed when
/// a frame is selected and the event is emitted when processing ends.
///
/// blocking_latest: whenever idle, start on the newest captured frame not
/// yet considered; frames passed over are dropped. fixed_stride(k): process
/// every k-th frame of each sequence in order, each starting at
/// max(previous emission, capture time).
///
/// Throws OrderError if capture times are not strictly increasing within a
/// sequence; latency errors propagate.
inline SimTrace simulate(std::span<const FrameRecord> frames, const Detector& detector,
                         const LatencyModel& model, SchedulePolicy policy, Size resolution) {
  if (policy.kind == SchedulePolicy::Kind::fixed_stride && policy.stride < 1) {
    throw ValidationError("fixed_stride requires k >= 1");
  }
  std::map<std::int64_t, std::vector<std::size_t>> by_sequence;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    validate_frame(frames[i]);
    auto& seq = by_sequence[frames[i].sequence_id];
    if (!seq.empty() && frames[i].capture_time_us <= frames[seq.back()].capture_time_us) {
      throw OrderError("capture times must strictly increase within sequence " +
                       std::to_string(frames[i].sequence_id));
    }
    seq.push_back(i);
  }

  LatencySampler sampler(model);
  SimTrace trace;
  std::vector<bool> processed(frames.size(), false);

  const auto run = [&](std::int64_t seq_id, std::size_t frame_index, TimeUs start) {
    const TimeUs end = start + sampler.next(resolution);
    trace.busy_intervals.push_back({seq_id, start, end, frame_index});
    trace.events.push_back({frames[frame_index].frame_id, end, detector(frames[frame_index])});
    processed[frame_index] = true;
    return end;
  };

  for (const auto& [seq_id, idx] : by_sequence) {
    if (policy.kind == SchedulePolicy::Kind::blocking_latest) {
      TimeUs now = frames[idx.front()].capture_time_us;
      std::size_t next = 0;
      while (next < idx.size()) {
        now = std::max(now, frames[idx[next]].capture_time_us);
        std::size_t newest = next;
        while (newest + 1 < idx.size() && frames[idx[newest + 1]].capture_time_us <= now) {
          ++newest;
        }
        now = run(seq_id, idx[newest], now);
        next = newest + 1;
      }
    } else {
      TimeUs last_emit = frames[idx.front()].capture_time_us;
      for (std::size_t k = 0; k < idx.size(); k += static_cast<std::size_t>(policy.stride)) {
        last_emit = run(seq_id, idx[k], std::max(last_emit, frames[idx[k]].capture_time_us));
      }
    }
  }

  for (std::size_t i = 0; i < frames.size(); ++i) {
    (processed[i] ? trace.processed_frames : trace.dropped_frames).push_back(i);
  }
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const PredictionEvent& a, const PredictionEvent& b) {
                     return a.emit_time_us < b.emit_time_us;
                   });
  return trace;
}

inline double drop_rate(const SimTrace& trace) {
  const std::size_t total = trace.processed_frames.size() + trace.dropped_frames.size();
  return total == 0 ? 0.0 : static_cast<double>(trace.dropped_frames.size()) / static_cast<double>(total);
}

struct SweepRow {
  Size resolution;
  /// Base (jitter-free) latency at this resolution.
  TimeUs latency_us = 0;
  EvalResult streaming;
  double drop_rate = 0.0;
};

/// simulate + evaluate_streaming at each resolution, in input order.
inline std::vector<SweepRow> sweep(std::span<const FrameRecord> frames, const Detector& detector,
                                   const LatencyModel& model, SchedulePolicy policy,
                                   std::span<const Size> resolutions, const EvalConfig& config = {}) {
  std::vector<SweepRow> rows;
  rows.reserve(resolutions.size());
  for (const Size& r : resolutions) {
    const SimTrace trace = simulate(frames, detector, model, policy, r);
    rows.push_back({r, latency_for(model, r.width, r.height), evaluate_streaming(frames, trace.events, config),
                    drop_rate(trace)});
  }
  return rows;
}

/// Constant-velocity scene: `num_objects` square boxes sliding right at a
/// fixed speed, one object per row band, frames at exact 1/fps spacing.
struct SyntheticScene {
  int num_frames = 300;
  double fps = 30.0;
  Size image{1920, 1200};
  int num_objects = 1;
  double box_size = 50.0;
  double velocity_px_per_frame = 5.0;
  double start_x = 100.0;
  std::int64_t sequence_id = 0;
  std::int64_t first_frame_id = 0;
  CategoryId category{0};
};

inline std::vector<FrameRecord> synthetic_frames(const SyntheticScene& scene) {
  if (scene.num_frames < 0 || scene.num_objects < 0) {
    throw ValidationError("synthetic scene counts must not be negative");
  }
  const double band = scene.box_size * 2.0;
  if (scene.num_objects * band > scene.image.height) {
    throw ValidationError("synthetic scene: objects do not fit vertically");
  }
  std::vector<FrameRecord> frames;
  frames.reserve(static_cast<std::size_t>(scene.num_frames));
  for (int k = 0; k < scene.num_frames; ++k) {
    FrameRecord f;
    f.frame_id = scene.first_frame_id + k;
    f.sequence_id = scene.sequence_id;
    f.capture_time_us = frame_time_us(k, scene.fps);
    f.width = scene.image.width;
    f.height = scene.image.height;
    const double x = scene.start_x + scene.velocity_px_per_frame * k;
    for (int o = 0; o < scene.num_objects; ++o) {
      const double y = band * o + scene.box_size / 2.0;
      const BoundingBox b = make_box(x, y, x + scene.box_size, y + scene.box_size);
      if (b.x_min() < 0.0 || b.x_max() > scene.image.width) {
        throw ValidationError("synthetic scene: object leaves the image at frame " + std::to_string(k));
      }
      f.ground_truth.push_back({b, scene.category, false});
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace streamperc
