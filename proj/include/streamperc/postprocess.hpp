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

// Detector post-processing: anchor-free grid decode, class-aware NMS and the
// letterbox inverse, composed by fused_pipeline into one call.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "streamperc/core.hpp"
#include "streamperc/matching.hpp"

namespace streamperc {

/// Output strides of a four-level (P3..P6) feature pyramid.
inline constexpr std::array<int, 4> kPyramidStrides{8, 16, 32, 64};

struct Size {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size&, const Size&) = default;
};

/// Raw head output for one pyramid level.
///
/// Layout is row-major (row, col, channel) with 5 + num_classes channels per
/// cell: dx, dy, dw, dh, objectness, class scores. Objectness and class
/// scores are probabilities already.
class GridOutput {
 public:
  GridOutput(int stride, int rows, int cols, int num_classes, std::vector<float> values)
      : stride_(stride), rows_(rows), cols_(cols), num_classes_(num_classes), values_(std::move(values)) {
    if (std::find(kPyramidStrides.begin(), kPyramidStrides.end(), stride) == kPyramidStrides.end()) {
      throw StrideSetError("grid stride " + std::to_string(stride) + " is not one of 8, 16, 32, 64");
    }
    if (rows <= 0 || cols <= 0 || num_classes <= 0) {
      throw ShapeError("grid rows, cols and classes must be positive");
    }
    const std::size_t expected = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) *
                                 static_cast<std::size_t>(channels());
    if (values_.size() != expected) {
      throw ShapeError("grid payload has " + std::to_string(values_.size()) + " values, expected " +
                       std::to_string(expected) + " (" + std::to_string(rows) + "x" +
                       std::to_string(cols) + "x" + std::to_string(channels()) + ")");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const float v = values_[i];
      if (!std::isfinite(v)) {
        throw NonFiniteError("grid payload contains a non-finite value");
      }
      if (i % static_cast<std::size_t>(channels()) >= 4 && (v < 0.0F || v > 1.0F)) {
        throw ValidationError("objectness and class scores must lie in [0, 1]");
      }
    }
  }

  int stride() const noexcept { return stride_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int num_classes() const noexcept { return num_classes_; }
  int channels() const noexcept { return 5 + num_classes_; }
  std::span<const float> values() const noexcept { return values_; }

  std::span<const float> cell(int row, int col) const {
    const auto c = static_cast<std::size_t>(channels());
    const auto offset = (static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) +
                         static_cast<std::size_t>(col)) * c;
    return std::span<const float>(values_).subspan(offset, c);
  }

  friend bool operator==(const GridOutput&, const GridOutput&) = default;

 private:
  int stride_;
  int rows_;
  int cols_;
  int num_classes_;
  std::vector<float> values_;
};

struct NmsConfig {
  double iou_threshold = 0.65;
  double score_threshold = 0.01;
  bool class_aware = true;

  void validate() const {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
      throw ValidationError("nms iou_threshold must lie in (0, 1)");
    }
    if (!(score_threshold > 0.0 && score_threshold < 1.0)) {
      throw ValidationError("nms score_threshold must lie in (0, 1)");
    }
  }
};

/// Decodes every (cell, class) entry whose score objectness * class_score is
/// at least `score_threshold`. Output order is row-major, then class index.
///
///   center = ((col + dx) * stride, (row + dy) * stride)
///   size   = (exp(dw) * stride, exp(dh) * stride), exp in single precision
inline std::vector<Detection> decode_grid(const GridOutput& grid, double score_threshold = 0.01) {
  std::vector<Detection> out;
  const double stride = grid.stride();
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      const std::span<const float> ch = grid.cell(r, c);
      const double objectness = ch[4];
      for (int k = 0; k < grid.num_classes(); ++k) {
        const double score = objectness * static_cast<double>(ch[5 + static_cast<std::size_t>(k)]);
        if (score < score_threshold) {
          continue;
        }
        const double cx = (c + static_cast<double>(ch[0])) * stride;
        const double cy = (r + static_cast<double>(ch[1])) * stride;
        const double w = static_cast<double>(std::exp(ch[2])) * stride;
        const double h = static_cast<double>(std::exp(ch[3])) * stride;
        out.emplace_back(BoundingBox::from_center(cx, cy, w, h),
                         CategoryId{static_cast<std::uint32_t>(k)}, score);
      }
    }
  }
  return out;
}

/// Greedy non-maximum suppression.
///
/// Sorts by descending score (stable on ties) and keeps each detection whose
/// IoU with every already-kept detection (of the same category when
/// class_aware) is below the threshold. Output is in kept order.
inline std::vector<Detection> nms(std::span<const Detection> dets, const NmsConfig& cfg = {}) {
  cfg.validate();
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score() > dets[b].score(); });

  std::vector<Detection> kept;
  for (std::size_t i : order) {
    const Detection& cand = dets[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return (!cfg.class_aware || k.category() == cand.category()) &&
             iou(k.box(), cand.box()) >= cfg.iou_threshold;
    });
    if (!suppressed) {
      kept.push_back(cand);
    }
  }
  return kept;
}

/// Aspect-preserving resize plus padding from image space into network
/// space. Only the coordinate transform is modeled.
class LetterboxTransform {
 public:
  /// Scale to fit and center the padding.
  static LetterboxTransform fit(Size input, Size network) {
    check_size(input, "input");
    check_size(network, "network");
    const double scale = std::min(static_cast<double>(network.width) / input.width,
                                  static_cast<double>(network.height) / input.height);
    const double pad_x = (network.width - input.width * scale) / 2.0;
    const double pad_y = (network.height - input.height * scale) / 2.0;
    return LetterboxTransform(scale, pad_x, pad_y, input, network);
  }

  static LetterboxTransform identity(Size size) { return LetterboxTransform(1.0, 0.0, 0.0, size, size); }

  LetterboxTransform(double scale, double pad_x, double pad_y, Size input, Size network)
      : scale_(scale), pad_x_(pad_x), pad_y_(pad_y), input_(input), network_(network) {
    check_size(input, "input");
    check_size(network, "network");
    if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(pad_x) || !std::isfinite(pad_y)) {
      throw ValidationError("letterbox scale must be positive and pads finite");
    }
  }

  double scale() const noexcept { return scale_; }
  double pad_x() const noexcept { return pad_x_; }
  double pad_y() const noexcept { return pad_y_; }
  Size input_size() const noexcept { return input_; }
  Size network_size() const noexcept { return network_; }

  BoundingBox to_network(const BoundingBox& b) const {
    return make_box(b.x_min() * scale_ + pad_x_, b.y_min() * scale_ + pad_y_,
                    b.x_max() * scale_ + pad_x_, b.y_max() * scale_ + pad_y_);
  }

  /// Inverse transform, clamped to the image bounds.
  BoundingBox to_image(const BoundingBox& b) const {
    const auto fx = [&](double x) { return std::clamp((x - pad_x_) / scale_, 0.0, double(input_.width)); };
    const auto fy = [&](double y) { return std::clamp((y - pad_y_) / scale_, 0.0, double(input_.height)); };
    return make_box(fx(b.x_min()), fy(b.y_min()), fx(b.x_max()), fy(b.y_max()));
  }

 private:
  static void check_size(Size s, const char* what) {
    if (s.width <= 0 || s.height <= 0) {
      throw ValidationError(std::string(what) + " size must be positive");
    }
  }

  double scale_;
  double pad_x_;
  double pad_y_;
  Size input_;
  Size network_;
};

/// Decode all pyramid levels, NMS, and map back to image coordinates.
///
/// `grids` must hold exactly one grid per stride in {8, 16, 32, 64}, each
/// tiling the letterbox network size. Concatenation order is ascending
/// stride, then row-major, then class, regardless of input order.
inline std::vector<Detection> fused_pipeline(std::span<const GridOutput> grids, const LetterboxTransform& lt,
                                             const NmsConfig& cfg = {}) {
  cfg.validate();
  std::vector<const GridOutput*> ordered;
  for (const GridOutput& g : grids) {
    ordered.push_back(&g);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const GridOutput* a, const GridOutput* b) { return a->stride() < b->stride(); });
  if (ordered.size() != kPyramidStrides.size()) {
    throw StrideSetError("expected " + std::to_string(kPyramidStrides.size()) + " grids, got " +
                         std::to_string(ordered.size()));
  }
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (ordered[i]->stride() != kPyramidStrides[i]) {
      throw StrideSetError("grid strides must be exactly {8, 16, 32, 64} without duplicates");
    }
  }
  const Size net = lt.network_size();
  const int classes = ordered.front()->num_classes();
  for (const GridOutput* g : ordered) {
    if (g->rows() * g->stride() != net.height || g->cols() * g->stride() != net.width) {
      throw ShapeError("stride-" + std::to_string(g->stride()) + " grid does not tile the " +
                       std::to_string(net.width) + "x" + std::to_string(net.height) + " network input");
    }
    if (g->num_classes() != classes) {
      throw ShapeError("grids disagree on the number of classes");
    }
  }

  std::vector<Detection> all;
  for (const GridOutput* g : ordered) {
    std::vector<Detection> level = decode_grid(*g, cfg.score_threshold);
    all.insert(all.end(), level.begin(), level.end());
  }
  std::vector<Detection> kept = nms(all, cfg);
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (const Detection& d : kept) {
    out.emplace_back(lt.to_image(d.box()), d.category(), d.score());
  }
  return out;
}

// Binary grid dumps: five little-endian uint32 (stride, rows, cols, classes,
// reserved = 0) followed by rows * cols * (5 + classes) little-endian float32
// values in (row, col, channel) order.

namespace detail {

inline std::uint32_t read_le_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<std::uint32_t>(bytes[offset]) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
}

inline void append_le_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFFU));
  }
}

}  // namespace detail

inline constexpr std::size_t kGridHeaderBytes = 5 * sizeof(std::uint32_t);

inline GridOutput parse_grid_dump(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGridHeaderBytes) {
    throw ParseError("grid dump truncated: " + std::to_string(bytes.size()) + " bytes, header needs 20");
  }
  const std::uint32_t stride = detail::read_le_u32(bytes, 0);
  const std::uint32_t rows = detail::read_le_u32(bytes, 4);
  const std::uint32_t cols = detail::read_le_u32(bytes, 8);
  const std::uint32_t classes = detail::read_le_u32(bytes, 12);
  const std::uint32_t reserved = detail::read_le_u32(bytes, 16);
  if (reserved != 0) {
    throw ParseError("grid dump header: reserved field must be 0");
  }
  constexpr std::uint32_t kMaxDim = 1U << 16;
  if (rows == 0 || cols == 0 || classes == 0 || rows > kMaxDim || cols > kMaxDim || classes > kMaxDim) {
    throw ShapeError("grid dump header: rows/cols/classes out of range");
  }
  const std::uint64_t count = std::uint64_t{rows} * cols * (std::uint64_t{classes} + 5);
  const std::uint64_t payload = bytes.size() - kGridHeaderBytes;
  if (payload != count * sizeof(float)) {
    throw ShapeError("grid dump payload is " + std::to_string(payload) + " bytes, header implies " +
                     std::to_string(count * sizeof(float)));
  }
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(detail::read_le_u32(bytes, kGridHeaderBytes + 4 * i));
  }
  return GridOutput(static_cast<int>(stride), static_cast<int>(rows), static_cast<int>(cols),
                    static_cast<int>(classes), std::move(values));
}

inline std::vector<std::uint8_t> serialize_grid_dump(const GridOutput& grid) {
  std::vector<std::uint8_t> out;
  out.reserve(kGridHeaderBytes + grid.values().size() * sizeof(float));
  detail::append_le_u32(out, static_cast<std::uint32_t>(grid.stride()));
  detail::append_le_u32(out, static_cast<std::uint32_t>(grid.rows()));
  detail::append_le_u32(out, static_cast<std::uint32_t>(grid.cols()));
  detail::append_le_u32(out, static_cast<std::uint32_t>(grid.num_classes()));
  detail::append_le_u32(out, 0);
  for (float v : grid.values()) {
    detail::append_le_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline GridOutput read_grid_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open grid dump '" + path + "'");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_grid_dump(bytes);
}

inline void write_grid_dump(const std::string& path, const GridOutput& grid) {
  const std::vector<std::uint8_t> bytes = serialize_grid_dump(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write grid dump '" + path + "'");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace streamperc
