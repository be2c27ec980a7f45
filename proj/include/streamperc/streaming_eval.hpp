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

// Latency-aware evaluation. Every ground-truth frame is scored against the
// newest prediction that had been emitted by its capture time (inclusive),
// within the same sequence. Frames that precede every emission are scored
// against nothing.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "streamperc/core.hpp"
#include "streamperc/offline_eval.hpp"

namespace streamperc {

struct FrameAssociation {
  std::int64_t frame_id = 0;
  /// Index into the stream passed to associate(); empty when nothing had
  /// been emitted yet.
  std::optional<std::size_t> event_index;
  /// capture_time - emit_time of the used event; 0 when unpaired.
  TimeUs staleness_us = 0;

  friend bool operator==(const FrameAssociation&, const FrameAssociation&) = default;
};

/// One entry per input frame, in input order.
struct StreamAssociation {
  std::vector<FrameAssociation> frames;
};

struct StalenessSummary {
  std::size_t paired_frames = 0;
  std::size_t unpaired_frames = 0;
  double mean_us = 0.0;
  TimeUs max_us = 0;
};

namespace detail {

struct FrameSlot {
  std::int64_t sequence_id;
  TimeUs capture_time_us;
};

/// frame_id -> (sequence, capture time). Checks id uniqueness and strict
/// capture-time ordering within each sequence.
inline std::unordered_map<std::int64_t, FrameSlot> index_frame_times(std::span<const FrameRecord> frames) {
  std::unordered_map<std::int64_t, FrameSlot> slots;
  slots.reserve(frames.size());
  std::map<std::int64_t, TimeUs> last_time;
  for (const FrameRecord& f : frames) {
    if (!slots.emplace(f.frame_id, FrameSlot{f.sequence_id, f.capture_time_us}).second) {
      throw ValidationError("duplicate frame id " + std::to_string(f.frame_id));
    }
    auto [it, fresh] = last_time.emplace(f.sequence_id, f.capture_time_us);
    if (!fresh) {
      if (f.capture_time_us <= it->second) {
        throw OrderError("capture times must strictly increase within sequence " +
                         std::to_string(f.sequence_id) + " (frame " + std::to_string(f.frame_id) + ")");
      }
      it->second = f.capture_time_us;
    }
  }
  return slots;
}

}  // namespace detail

/// Pairs each frame with the newest event of its own sequence whose
/// emit_time_us <= capture_time_us. Equal emit times resolve to the event
/// that appears later in `stream`.
///
/// Throws OrderError when capture times are not strictly increasing or emit
/// times decrease within a sequence, UnknownFrameError when an event names a
/// frame not in `frames`, and ValidationError when an event was emitted
/// before its source frame was captured.
inline StreamAssociation associate(std::span<const FrameRecord> frames,
                                   std::span<const PredictionEvent> stream) {
  const auto slots = detail::index_frame_times(frames);

  // Events per sequence, in stream order.
  std::map<std::int64_t, std::vector<std::size_t>> events_by_seq;
  for (std::size_t e = 0; e < stream.size(); ++e) {
    const PredictionEvent& ev = stream[e];
    auto it = slots.find(ev.source_frame_id);
    if (it == slots.end()) {
      throw UnknownFrameError("prediction event references unknown frame " +
                              std::to_string(ev.source_frame_id));
    }
    if (ev.emit_time_us < it->second.capture_time_us) {
      throw ValidationError("prediction for frame " + std::to_string(ev.source_frame_id) +
                            " emitted before the frame was captured");
    }
    auto& seq_events = events_by_seq[it->second.sequence_id];
    if (!seq_events.empty() && ev.emit_time_us < stream[seq_events.back()].emit_time_us) {
      throw OrderError("prediction emit times must not decrease within a sequence");
    }
    seq_events.push_back(e);
  }

  StreamAssociation out;
  out.frames.reserve(frames.size());
  // Frames of each sequence are already time-ordered, so one cursor per
  // sequence walks its events forward.
  std::map<std::int64_t, std::size_t> cursor;
  for (const FrameRecord& f : frames) {
    FrameAssociation fa;
    fa.frame_id = f.frame_id;
    auto seq_it = events_by_seq.find(f.sequence_id);
    if (seq_it != events_by_seq.end()) {
      const std::vector<std::size_t>& seq_events = seq_it->second;
      std::size_t& pos = cursor[f.sequence_id];
      while (pos < seq_events.size() && stream[seq_events[pos]].emit_time_us <= f.capture_time_us) {
        ++pos;
      }
      if (pos > 0) {
        const std::size_t e = seq_events[pos - 1];
        fa.event_index = e;
        fa.staleness_us = f.capture_time_us - stream[e].emit_time_us;
      }
    }
    out.frames.push_back(fa);
  }
  return out;
}

/// The per-frame prediction map induced by an association. Every frame gets
/// an entry, empty when unpaired.
inline PredictionMap associated_predictions(std::span<const PredictionEvent> stream,
                                            const StreamAssociation& association) {
  PredictionMap map;
  for (const FrameAssociation& fa : association.frames) {
    auto& dets = map[fa.frame_id];
    if (fa.event_index) {
      dets = stream[*fa.event_index].detections;
    }
  }
  return map;
}

inline StalenessSummary summarize_staleness(const StreamAssociation& association) {
  StalenessSummary s;
  double sum = 0.0;
  for (const FrameAssociation& fa : association.frames) {
    if (!fa.event_index) {
      ++s.unpaired_frames;
      continue;
    }
    ++s.paired_frames;
    sum += static_cast<double>(fa.staleness_us);
    s.max_us = std::max(s.max_us, fa.staleness_us);
  }
  if (s.paired_frames > 0) {
    s.mean_us = sum / static_cast<double>(s.paired_frames);
  }
  return s;
}

/// Streaming AP: associate, then score with evaluate_offline.
inline EvalResult evaluate_streaming(std::span<const FrameRecord> frames,
                                     std::span<const PredictionEvent> stream,
                                     const EvalConfig& config = {}) {
  const StreamAssociation association = associate(frames, stream);
  return evaluate_offline(frames, associated_predictions(stream, association), config);
}

/// Zero-latency stream: each frame's detections emitted at its own capture
/// time. Frames are visited in input order; frames absent from `predictions`
/// get an empty event.
inline std::vector<PredictionEvent> identity_stream(std::span<const FrameRecord> frames,
                                                    const PredictionMap& predictions) {
  std::vector<const FrameRecord*> order;
  for (const FrameRecord& f : frames) {
    order.push_back(&f);
  }
  std::stable_sort(order.begin(), order.end(), [](const FrameRecord* a, const FrameRecord* b) {
    return a->capture_time_us < b->capture_time_us;
  });
  std::vector<PredictionEvent> stream;
  stream.reserve(order.size());
  for (const FrameRecord* f : order) {
    PredictionEvent ev{f->frame_id, f->capture_time_us, {}};
    if (auto it = predictions.find(f->frame_id); it != predictions.end()) {
      ev.detections = it->second;
    }
    stream.push_back(std::move(ev));
  }
  return stream;
}

}  // namespace streamperc
