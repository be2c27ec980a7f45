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

// Ingest and export: COCO annotation subset, line-delimited prediction logs,
// category tables and class-map TSV files, plus taxonomy remapping.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "streamperc/core.hpp"

namespace streamperc {

/// Category names indexed by CategoryId. Names are unique and non-empty.
class CategoryTable {
 public:
  CategoryTable() = default;

  explicit CategoryTable(std::vector<std::string> names) : names_(std::move(names)) {
    std::unordered_set<std::string> seen;
    for (const std::string& n : names_) {
      if (n.empty()) {
        throw ValidationError("category names must not be empty");
      }
      if (!seen.insert(n).second) {
        throw ValidationError("duplicate category name '" + n + "'");
      }
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool contains(CategoryId id) const noexcept { return id.value < names_.size(); }

  const std::string& name(CategoryId id) const {
    if (!contains(id)) {
      throw ValidationError("category id " + std::to_string(id.value) + " is not in the table");
    }
    return names_[id.value];
  }

  std::optional<CategoryId> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) {
        return CategoryId{static_cast<std::uint32_t>(i)};
      }
    }
    return std::nullopt;
  }

  friend bool operator==(const CategoryTable&, const CategoryTable&) = default;

 private:
  std::vector<std::string> names_;
};

/// The eight Argoverse-HD detection classes.
inline CategoryTable argoverse_hd_categories() {
  return CategoryTable({"person", "bicycle", "car", "motorcycle", "bus", "truck", "traffic_light", "stop_sign"});
}

struct DatasetBundle {
  CategoryTable category_table;
  /// Frames of each sequence in capture order.
  std::map<std::int64_t, std::vector<FrameRecord>> sequences;
  double fps = 30.0;
  /// Image file names by frame id, carried through for export.
  std::map<std::int64_t, std::string> file_names;

  /// All frames, ascending sequence id then capture order.
  std::vector<FrameRecord> frames() const {
    std::vector<FrameRecord> out;
    for (const auto& [id, seq] : sequences) {
      out.insert(out.end(), seq.begin(), seq.end());
    }
    return out;
  }

  std::size_t frame_count() const {
    std::size_t n = 0;
    for (const auto& [id, seq] : sequences) {
      n += seq.size();
    }
    return n;
  }

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

/// Re-checks every frame and box invariant. Throws ValidationError.
inline void validate_bundle(const DatasetBundle& bundle) {
  if (bundle.category_table.empty()) {
    throw ValidationError("bundle has an empty category table");
  }
  std::unordered_set<std::int64_t> ids;
  for (const auto& [seq_id, frames] : bundle.sequences) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const FrameRecord& f = frames[i];
      validate_frame(f);
      if (f.sequence_id != seq_id) {
        throw ValidationError("frame " + std::to_string(f.frame_id) + " filed under the wrong sequence");
      }
      if (!ids.insert(f.frame_id).second) {
        throw ValidationError("duplicate frame id " + std::to_string(f.frame_id));
      }
      if (i > 0 && f.capture_time_us <= frames[i - 1].capture_time_us) {
        throw ValidationError("capture times must strictly increase within sequence " + std::to_string(seq_id));
      }
      for (const GroundTruthObject& gt : f.ground_truth) {
        if (!bundle.category_table.contains(gt.category)) {
          throw ValidationError("frame " + std::to_string(f.frame_id) + " has an unknown category id");
        }
        const BoundingBox& b = gt.box;
        (void)make_box(b.x_min(), b.y_min(), b.x_max(), b.y_max());
      }
    }
  }
}

namespace detail {

using json = nlohmann::json;

inline std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError(std::string("cannot open ") + what + " '" + path + "'");
  }
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::string& path, std::string_view text, const char* what) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError(std::string("cannot write ") + what + " '" + path + "'");
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline const json& require_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) {
    throw SchemaError(where + ": expected an object");
  }
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(where + ": missing required field '" + key + "'");
  }
  return *it;
}

inline const json* optional_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return (it == obj.end() || it->is_null()) ? nullptr : &*it;
}

inline std::int64_t as_int(const json& v, const std::string& where) {
  if (v.is_number_integer() && !v.is_number_unsigned()) {
    return v.get<std::int64_t>();
  }
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw SchemaError(where + ": integer out of range");
    }
    return static_cast<std::int64_t>(u);
  }
  throw SchemaError(where + ": expected an integer");
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) {
    throw SchemaError(where + ": expected a number");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw NonFiniteError(where + ": number is not finite");
  }
  return d;
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) {
    throw SchemaError(where + ": expected a string");
  }
  return v.get<std::string>();
}

inline const json& require_array(const json& obj, const char* key, const std::string& where) {
  const json& v = require_field(obj, key, where);
  if (!v.is_array()) {
    throw SchemaError(where + "." + key + ": expected an array");
  }
  return v;
}

inline bool as_flag(const json& v, const std::string& where) {
  if (v.is_boolean()) {
    return v.get<bool>();
  }
  const std::int64_t i = as_int(v, where);
  if (i != 0 && i != 1) {
    throw SchemaError(where + ": expected 0 or 1");
  }
  return i == 1;
}

inline int as_dimension(const json& v, const std::string& where) {
  const std::int64_t i = as_int(v, where);
  if (i <= 0 || i > (1 << 20)) {
    throw ValidationError(where + ": image dimension must lie in [1, 2^20]");
  }
  return static_cast<int>(i);
}

struct CocoImage {
  std::int64_t id;
  int width;
  int height;
  std::string file_name;
  std::int64_t sequence_id;
  std::optional<std::int64_t> fid;
  std::optional<double> timestamp_s;
};

}  // namespace detail

/// Parses the COCO annotation subset:
///   images[{id, width, height, file_name, sid?, fid?, timestamp?}]
///   annotations[{id, image_id, category_id, bbox: [x, y, w, h], iscrowd?, ignore?}]
///   categories[{id, name}]
///
/// Categories are indexed in ascending COCO id order. Images group into
/// sequences by `sid` (sequence 0 when absent) and order by `fid`, else by
/// image id. `timestamp` is in seconds; without it capture times are
/// synthesized at 1/fps spacing from 0 within each sequence. `iscrowd` or
/// `ignore` set to 1 marks the object as ignore.
///
/// Throws ParseError (with line:column) on malformed JSON, SchemaError on
/// missing fields or dangling references, ValidationError on invariant
/// failures.
inline DatasetBundle parse_coco_annotations(std::string_view text, double fps = 30.0) {
  using detail::json;
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw ValidationError("fps must be positive and finite");
  }
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("annotation JSON, line " + std::to_string(line) + " column " + std::to_string(col) +
                     ": " + e.what());
  } catch (const json::exception& e) {
    throw ParseError(std::string("annotation JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw SchemaError("annotation file: top level must be an object");
  }

  const json& jcats = detail::require_array(doc, "categories", "annotation file");
  std::map<std::int64_t, std::string> coco_categories;
  for (std::size_t i = 0; i < jcats.size(); ++i) {
    const std::string where = "categories[" + std::to_string(i) + "]";
    const std::int64_t id = detail::as_int(detail::require_field(jcats[i], "id", where), where + ".id");
    std::string name = detail::as_string(detail::require_field(jcats[i], "name", where), where + ".name");
    if (!coco_categories.emplace(id, std::move(name)).second) {
      throw SchemaError(where + ": duplicate category id " + std::to_string(id));
    }
  }
  if (coco_categories.empty()) {
    throw SchemaError("annotation file: categories must not be empty");
  }
  std::vector<std::string> names;
  std::unordered_map<std::int64_t, CategoryId> category_index;
  for (const auto& [id, name] : coco_categories) {
    category_index.emplace(id, CategoryId{static_cast<std::uint32_t>(names.size())});
    names.push_back(name);
  }

  DatasetBundle bundle;
  bundle.fps = fps;
  bundle.category_table = CategoryTable(std::move(names));

  const json& jimages = detail::require_array(doc, "images", "annotation file");
  std::vector<detail::CocoImage> images;
  std::unordered_map<std::int64_t, std::size_t> image_index;
  for (std::size_t i = 0; i < jimages.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const json& ji = jimages[i];
    detail::CocoImage img{};
    img.id = detail::as_int(detail::require_field(ji, "id", where), where + ".id");
    img.width = detail::as_dimension(detail::require_field(ji, "width", where), where + ".width");
    img.height = detail::as_dimension(detail::require_field(ji, "height", where), where + ".height");
    img.file_name = detail::as_string(detail::require_field(ji, "file_name", where), where + ".file_name");
    img.sequence_id = 0;
    if (const json* sid = detail::optional_field(ji, "sid")) {
      img.sequence_id = detail::as_int(*sid, where + ".sid");
    }
    if (const json* fid = detail::optional_field(ji, "fid")) {
      img.fid = detail::as_int(*fid, where + ".fid");
    }
    if (const json* ts = detail::optional_field(ji, "timestamp")) {
      img.timestamp_s = detail::as_number(*ts, where + ".timestamp");
      if (std::abs(*img.timestamp_s) > 9.0e9) {
        throw ValidationError(where + ".timestamp: out of range");
      }
    }
    if (!image_index.emplace(img.id, images.size()).second) {
      throw SchemaError(where + ": duplicate image id " + std::to_string(img.id));
    }
    images.push_back(std::move(img));
  }

  std::vector<std::vector<GroundTruthObject>> objects(images.size());
  const json& janns = detail::require_array(doc, "annotations", "annotation file");
  std::unordered_set<std::int64_t> annotation_ids;
  for (std::size_t i = 0; i < janns.size(); ++i) {
    const std::string where = "annotations[" + std::to_string(i) + "]";
    const json& ja = janns[i];
    const std::int64_t id = detail::as_int(detail::require_field(ja, "id", where), where + ".id");
    if (!annotation_ids.insert(id).second) {
      throw SchemaError(where + ": duplicate annotation id " + std::to_string(id));
    }
    const std::int64_t image_id =
        detail::as_int(detail::require_field(ja, "image_id", where), where + ".image_id");
    auto img_it = image_index.find(image_id);
    if (img_it == image_index.end()) {
      throw SchemaError(where + ": image_id " + std::to_string(image_id) + " does not exist");
    }
    const std::int64_t cat_id =
        detail::as_int(detail::require_field(ja, "category_id", where), where + ".category_id");
    auto cat_it = category_index.find(cat_id);
    if (cat_it == category_index.end()) {
      throw SchemaError(where + ": category_id " + std::to_string(cat_id) + " does not exist");
    }
    const json& jbox = detail::require_field(ja, "bbox", where);
    if (!jbox.is_array() || jbox.size() != 4) {
      throw SchemaError(where + ".bbox: expected [x, y, w, h]");
    }
    double v[4];
    for (std::size_t k = 0; k < 4; ++k) {
      v[k] = detail::as_number(jbox[k], where + ".bbox[" + std::to_string(k) + "]");
    }
    bool ignore = false;
    if (const json* crowd = detail::optional_field(ja, "iscrowd")) {
      ignore = detail::as_flag(*crowd, where + ".iscrowd");
    }
    if (const json* ig = detail::optional_field(ja, "ignore")) {
      ignore = ignore || detail::as_flag(*ig, where + ".ignore");
    }
    BoundingBox box = [&] {
      try {
        return BoundingBox::from_xywh(v[0], v[1], v[2], v[3]);
      } catch (const ExtentError& e) {
        throw ExtentError(where + ".bbox: " + e.what());
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(where + ".bbox: " + e.what());
      }
    }();
    objects[img_it->second].push_back({box, cat_it->second, ignore});
  }

  // Group into sequences and order frames.
  std::map<std::int64_t, std::vector<std::size_t>> seq_images;
  for (std::size_t i = 0; i < images.size(); ++i) {
    seq_images[images[i].sequence_id].push_back(i);
  }
  for (auto& [seq_id, members] : seq_images) {
    const std::string where = "sequence " + std::to_string(seq_id);
    const std::size_t with_fid = static_cast<std::size_t>(
        std::count_if(members.begin(), members.end(), [&](std::size_t i) { return images[i].fid.has_value(); }));
    const std::size_t with_ts = static_cast<std::size_t>(std::count_if(
        members.begin(), members.end(), [&](std::size_t i) { return images[i].timestamp_s.has_value(); }));
    if (with_fid != 0 && with_fid != members.size()) {
      throw SchemaError(where + ": fid present on some images but not others");
    }
    if (with_ts != 0 && with_ts != members.size()) {
      throw SchemaError(where + ": timestamp present on some images but not others");
    }
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return with_fid != 0 ? *images[a].fid < *images[b].fid : images[a].id < images[b].id;
    });
    if (with_fid != 0) {
      for (std::size_t k = 1; k < members.size(); ++k) {
        if (*images[members[k]].fid == *images[members[k - 1]].fid) {
          throw SchemaError(where + ": duplicate fid " + std::to_string(*images[members[k]].fid));
        }
      }
    }
    std::vector<FrameRecord>& frames = bundle.sequences[seq_id];
    for (std::size_t k = 0; k < members.size(); ++k) {
      const detail::CocoImage& img = images[members[k]];
      FrameRecord f;
      f.frame_id = img.id;
      f.sequence_id = seq_id;
      f.capture_time_us = with_ts != 0 ? static_cast<TimeUs>(std::llround(*img.timestamp_s * 1e6))
                                       : frame_time_us(static_cast<std::int64_t>(k), fps);
      f.width = img.width;
      f.height = img.height;
      f.ground_truth = std::move(objects[members[k]]);
      if (!frames.empty() && f.capture_time_us <= frames.back().capture_time_us) {
        throw ValidationError(where + ": timestamps must strictly increase in frame order (image " +
                              std::to_string(img.id) + ")");
      }
      bundle.file_names.emplace(img.id, img.file_name);
      frames.push_back(std::move(f));
    }
  }
  validate_bundle(bundle);
  return bundle;
}

inline DatasetBundle load_coco_annotations(const std::string& path, double fps = 30.0) {
  const std::string text = detail::read_text_file(path, "annotation file");
  return parse_coco_annotations(text, fps);
}

/// Serializes a bundle to the same COCO subset. Category ids are the table
/// indices; every image carries sid, fid (position in sequence) and a
/// timestamp in seconds so capture times survive a round trip.
inline std::string format_coco_annotations(const DatasetBundle& bundle) {
  using detail::json;
  json doc = json::object();
  json cats = json::array();
  for (std::size_t i = 0; i < bundle.category_table.size(); ++i) {
    cats.push_back({{"id", i}, {"name", bundle.category_table.names()[i]}});
  }
  json images = json::array();
  json anns = json::array();
  std::int64_t next_ann = 1;
  for (const auto& [seq_id, frames] : bundle.sequences) {
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const FrameRecord& f = frames[k];
      auto name_it = bundle.file_names.find(f.frame_id);
      images.push_back({{"id", f.frame_id},
                        {"width", f.width},
                        {"height", f.height},
                        {"file_name", name_it == bundle.file_names.end() ? std::string() : name_it->second},
                        {"sid", seq_id},
                        {"fid", k},
                        {"timestamp", static_cast<double>(f.capture_time_us) / 1e6}});
      for (const GroundTruthObject& gt : f.ground_truth) {
        json a = {{"id", next_ann++},
                  {"image_id", f.frame_id},
                  {"category_id", gt.category.value},
                  {"bbox", {gt.box.x_min(), gt.box.y_min(), gt.box.width(), gt.box.height()}}};
        if (gt.ignore) {
          a["ignore"] = 1;
        }
        anns.push_back(std::move(a));
      }
    }
  }
  doc["images"] = std::move(images);
  doc["annotations"] = std::move(anns);
  doc["categories"] = std::move(cats);
  return doc.dump(1) + "\n";
}

inline void write_coco_annotations(const std::string& path, const DatasetBundle& bundle) {
  detail::write_text_file(path, format_coco_annotations(bundle), "annotation file");
}

// Prediction logs. One record per event:
//   frame_id emit_time_us n
//   category score x_min y_min x_max y_max     (n lines)
// Fields are whitespace-separated; '#' starts a comment; blank lines are
// skipped. Reals are written in shortest round-trip form.

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
      ++i;
    }
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') {
      ++j;
    }
    if (j > i) {
      out.push_back(line.substr(i, j - i));
    }
    i = j;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    return std::nullopt;
  }
  return value;
}

inline void append_real(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace detail

inline std::vector<PredictionEvent> parse_prediction_log(std::string_view text) {
  std::vector<PredictionEvent> events;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t pending = 0;
  const auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("prediction log line " + std::to_string(line_no) + ": " + msg);
  };
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      eol = text.size();
    }
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto fields = detail::split_ws(line);
    if (fields.empty()) {
      continue;
    }
    if (pending == 0) {
      if (fields.size() != 3) {
        throw fail("expected 'frame_id emit_time_us n'");
      }
      const auto frame_id = detail::parse_number<std::int64_t>(fields[0]);
      const auto emit = detail::parse_number<std::int64_t>(fields[1]);
      const auto n = detail::parse_number<std::int64_t>(fields[2]);
      if (!frame_id || !emit || !n) {
        throw fail("event header fields must be integers");
      }
      if (*n < 0 || *n > 10'000'000) {
        throw fail("detection count out of range");
      }
      if (!events.empty() && *emit < events.back().emit_time_us) {
        throw OrderError("prediction log line " + std::to_string(line_no) +
                         ": emit times must not decrease");
      }
      events.push_back({*frame_id, *emit, {}});
      pending = static_cast<std::size_t>(*n);
      continue;
    }
    if (fields.size() != 6) {
      throw fail("expected 'category score x_min y_min x_max y_max'");
    }
    const auto category = detail::parse_number<std::uint32_t>(fields[0]);
    if (!category) {
      throw fail("category must be a non-negative integer");
    }
    double v[5];
    for (std::size_t k = 0; k < 5; ++k) {
      const auto d = detail::parse_number<double>(fields[k + 1]);
      if (!d) {
        throw fail("expected a real number, got '" + std::string(fields[k + 1]) + "'");
      }
      v[k] = *d;
    }
    try {
      events.back().detections.emplace_back(make_box(v[1], v[2], v[3], v[4]), CategoryId{*category}, v[0]);
    } catch (const ValidationError& e) {
      throw fail(e.what());
    }
    --pending;
  }
  if (pending != 0) {
    throw ParseError("prediction log ends " + std::to_string(pending) + " detection line(s) short");
  }
  return events;
}

inline std::vector<PredictionEvent> load_prediction_log(const std::string& path) {
  return parse_prediction_log(detail::read_text_file(path, "prediction log"));
}

inline std::string format_prediction_log(std::span<const PredictionEvent> events) {
  std::string out;
  for (const PredictionEvent& ev : events) {
    out += std::to_string(ev.source_frame_id) + ' ' + std::to_string(ev.emit_time_us) + ' ' +
           std::to_string(ev.detections.size()) + '\n';
    for (const Detection& d : ev.detections) {
      out += std::to_string(d.category().value);
      for (double v : {d.score(), d.box().x_min(), d.box().y_min(), d.box().x_max(), d.box().y_max()}) {
        out += ' ';
        detail::append_real(out, v);
      }
      out += '\n';
    }
  }
  return out;
}

inline void write_prediction_log(const std::string& path, std::span<const PredictionEvent> events) {
  detail::write_text_file(path, format_prediction_log(events), "prediction log");
}

/// Offline view of a log: detections concatenated per source frame.
inline PredictionMap predictions_by_frame(std::span<const PredictionEvent> events) {
  PredictionMap map;
  for (const PredictionEvent& ev : events) {
    auto& dets = map[ev.source_frame_id];
    dets.insert(dets.end(), ev.detections.begin(), ev.detections.end());
  }
  return map;
}

/// One category name per line; '#' comments and blank lines skipped.
inline CategoryTable parse_category_table(std::string_view text) {
  std::vector<std::string> names;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      eol = text.size();
    }
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) {
      line.remove_prefix(1);
    }
    if (!line.empty()) {
      names.emplace_back(line);
    }
  }
  if (names.empty()) {
    throw ParseError("category table is empty");
  }
  return CategoryTable(std::move(names));
}

inline CategoryTable load_category_table(const std::string& path) {
  return parse_category_table(detail::read_text_file(path, "category table"));
}

inline constexpr std::string_view kDropTarget = "DROP";

struct ClassRule {
  std::string source_dataset;
  std::string source_class;
  /// Empty means DROP.
  std::optional<std::string> target_class;

  friend bool operator==(const ClassRule&, const ClassRule&) = default;
};

struct ClassMap {
  std::vector<ClassRule> rules;
};

/// `source_dataset<TAB>source_class<TAB>target_class` per line; target DROP
/// removes the objects. '#' lines and blank lines are skipped.
inline ClassMap parse_class_map(std::string_view text) {
  ClassMap map;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      eol = text.size();
    }
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.remove_suffix(1);
    }
    if (line.empty() || line.front() == '#') {
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.emplace_back(line.substr(start, tab == std::string_view::npos ? line.size() - start : tab - start));
      if (tab == std::string_view::npos) {
        break;
      }
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError("class map line " + std::to_string(line_no) +
                       ": expected 'source_dataset<TAB>source_class<TAB>target_class'");
    }
    ClassRule rule{fields[0], fields[1], std::nullopt};
    if (fields[2] != kDropTarget) {
      rule.target_class = fields[2];
    }
    map.rules.push_back(std::move(rule));
  }
  return map;
}

inline ClassMap load_class_map(const std::string& path) {
  return parse_class_map(detail::read_text_file(path, "class map"));
}

struct RuleCount {
  ClassRule rule;
  /// Ground-truth objects relabeled (or dropped) by this rule.
  std::size_t objects = 0;
};

struct RemapResult {
  DatasetBundle bundle;
  /// One entry per rule of the source dataset, in map order.
  std::vector<RuleCount> counts;
};

/// Relabels every object of `bundle` onto `target` using the rules of
/// `source_dataset`. Frames and geometry are untouched; DROP rules remove
/// objects.
///
/// Throws CoverageError when a source class has no rule (listing all of
/// them), has conflicting rules, or a target does not resolve in `target`.
inline RemapResult remap(const DatasetBundle& bundle, const ClassMap& map, const CategoryTable& target,
                         const std::string& source_dataset) {
  if (target.empty()) {
    throw CoverageError("target category table is empty");
  }
  std::vector<std::size_t> rule_ids;
  std::unordered_map<std::string, std::size_t> by_class;
  for (std::size_t i = 0; i < map.rules.size(); ++i) {
    const ClassRule& r = map.rules[i];
    if (r.source_dataset != source_dataset) {
      continue;
    }
    if (!by_class.emplace(r.source_class, rule_ids.size()).second) {
      throw CoverageError("class map has more than one rule for " + source_dataset + "/" + r.source_class);
    }
    if (r.target_class && !target.find(*r.target_class)) {
      throw CoverageError("class map target '" + *r.target_class + "' is not in the target table");
    }
    rule_ids.push_back(i);
  }
  if (rule_ids.empty()) {
    throw CoverageError("class map has no rules for dataset '" + source_dataset + "'");
  }

  // source CategoryId -> index into rule_ids
  std::vector<std::size_t> rule_for(bundle.category_table.size());
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < bundle.category_table.size(); ++c) {
    auto it = by_class.find(bundle.category_table.names()[c]);
    if (it == by_class.end()) {
      missing.push_back(bundle.category_table.names()[c]);
    } else {
      rule_for[c] = it->second;
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const std::string& m : missing) {
      list += (list.empty() ? "" : ", ") + m;
    }
    throw CoverageError("class map does not cover " + source_dataset + " classes: " + list);
  }

  RemapResult result;
  result.bundle.category_table = target;
  result.bundle.fps = bundle.fps;
  result.bundle.file_names = bundle.file_names;
  for (std::size_t r : rule_ids) {
    result.counts.push_back({map.rules[r], 0});
  }
  for (const auto& [seq_id, frames] : bundle.sequences) {
    std::vector<FrameRecord>& out_frames = result.bundle.sequences[seq_id];
    for (const FrameRecord& f : frames) {
      FrameRecord g = f;
      g.ground_truth.clear();
      for (const GroundTruthObject& gt : f.ground_truth) {
        if (!bundle.category_table.contains(gt.category)) {
          throw ValidationError("frame " + std::to_string(f.frame_id) + " has an unknown category id");
        }
        const std::size_t r = rule_for[gt.category.value];
        ++result.counts[r].objects;
        const ClassRule& rule = map.rules[rule_ids[r]];
        if (rule.target_class) {
          g.ground_truth.push_back({gt.box, *target.find(*rule.target_class), gt.ignore});
        }
      }
      out_frames.push_back(std::move(g));
    }
  }
  return result;
}

}  // namespace streamperc
