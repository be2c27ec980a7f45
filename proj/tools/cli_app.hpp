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

// Command-line front end. Every subcommand is a thin wrapper over library
// calls; all output is buffered and written only after the work succeeded.
//
// Exit codes: 0 success, 2 input error, 3 internal invariant violation.

#include <fmt/format.h>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "streamperc/core.hpp"
#include "streamperc/dataset_io.hpp"
#include "streamperc/offline_eval.hpp"
#include "streamperc/postprocess.hpp"
#include "streamperc/stream_sim.hpp"
#include "streamperc/streaming_eval.hpp"

namespace streamperc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitInternalError = 3;

enum class OutputFormat { table, records };

namespace detail {

inline Size parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) {
    throw InputError("expected WIDTHxHEIGHT, got '" + text + "'");
  }
  const auto w = streamperc::detail::parse_number<int>(std::string_view(text).substr(0, x));
  const auto h = streamperc::detail::parse_number<int>(std::string_view(text).substr(x + 1));
  if (!w || !h || *w <= 0 || *h <= 0) {
    throw InputError("expected WIDTHxHEIGHT with positive integers, got '" + text + "'");
  }
  return {*w, *h};
}

inline std::string category_label(const CategoryTable& table, CategoryId id) {
  return table.contains(id) ? table.name(id) : "category_" + std::to_string(id.value);
}

inline nlohmann::json result_json(const EvalResult& r, const CategoryTable& table) {
  nlohmann::json j = {{"ap", r.ap},         {"ap50", r.ap50},         {"ap75", r.ap75},
                      {"ap_small", r.ap_small}, {"ap_medium", r.ap_medium}, {"ap_large", r.ap_large}};
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [id, v] : r.per_category_ap) {
    per[category_label(table, id)] = v;
  }
  j["per_category_ap"] = std::move(per);
  return j;
}

inline void print_result(std::ostream& out, const EvalResult& r, const CategoryTable& table, OutputFormat fmt,
                         const std::string& record) {
  if (fmt == OutputFormat::records) {
    out << fmt::format("record={} ap={:.3f} ap50={:.3f} ap75={:.3f} ap_small={:.3f} ap_medium={:.3f} ap_large={:.3f}\n",
                       record, r.ap, r.ap50, r.ap75, r.ap_small, r.ap_medium, r.ap_large);
    for (const auto& [id, v] : r.per_category_ap) {
      out << fmt::format("record=category_ap category={} ap={:.3f}\n", category_label(table, id), v);
    }
    return;
  }
  out << fmt::format("{:<10} {:>6}\n", "metric", "value");
  for (const auto& [name, v] : {std::pair{"AP", r.ap}, std::pair{"AP50", r.ap50}, std::pair{"AP75", r.ap75},
                                std::pair{"AP_S", r.ap_small}, std::pair{"AP_M", r.ap_medium},
                                std::pair{"AP_L", r.ap_large}}) {
    out << fmt::format("{:<10} {:>6.3f}\n", name, v);
  }
  if (!r.per_category_ap.empty()) {
    out << fmt::format("\n{:<16} {:>6}\n", "category", "AP");
    for (const auto& [id, v] : r.per_category_ap) {
      out << fmt::format("{:<16} {:>6.3f}\n", category_label(table, id), v);
    }
  }
}

inline void print_staleness(std::ostream& out, const StalenessSummary& s, OutputFormat fmt) {
  const auto mean_us = static_cast<std::int64_t>(std::llround(s.mean_us));
  if (fmt == OutputFormat::records) {
    out << fmt::format("record=staleness paired_frames={} unpaired_frames={} mean_us={} max_us={}\n",
                       s.paired_frames, s.unpaired_frames, mean_us, s.max_us);
    return;
  }
  out << fmt::format("\npaired frames    {}\nunpaired frames  {}\nmean staleness   {} us\nmax staleness    {} us\n",
                     s.paired_frames, s.unpaired_frames, mean_us, s.max_us);
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  streamperc::detail::write_text_file(path, j.dump(2) + "\n", "output file");
}

struct EvalFlags {
  int max_dets = 100;
  int recall_points = 101;
  std::vector<double> iou_thresholds;

  EvalConfig config() const {
    EvalConfig c;
    c.max_detections_per_frame = max_dets;
    c.recall_points = recall_points;
    if (!iou_thresholds.empty()) {
      c.iou_thresholds = iou_thresholds;
    }
    c.validate();
    return c;
  }
};

inline void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_option("--max-dets", f.max_dets, "Detections kept per frame and category")->capture_default_str();
  cmd->add_option("--recall-points", f.recall_points, "Recall sampling points")->capture_default_str();
  cmd->add_option("--iou-thresholds", f.iou_thresholds, "Comma-separated IoU thresholds (default .50:.05:.95)")
      ->delimiter(',');
}

}  // namespace detail

/// Runs one command line. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming-perception evaluation and deployment toolkit", "streamperc"};
  app.require_subcommand(1);

  std::string format_name = "table";
  std::string output_path;
  double fps = 30.0;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--format", format_name, "Output format")
        ->check(CLI::IsMember({"table", "records"}))
        ->capture_default_str();
    cmd->add_option("--fps", fps, "Frame rate for synthesized timestamps")->capture_default_str();
  };

  // eval-offline / eval-streaming
  std::string annotations;
  std::string predictions;
  detail::EvalFlags eval_flags;
  auto* offline = app.add_subcommand("eval-offline", "COCO-style AP, each frame scored against its own predictions");
  auto* streaming = app.add_subcommand("eval-streaming", "Streaming AP from a timestamped prediction log");
  for (auto* cmd : {offline, streaming}) {
    cmd->add_option("--annotations", annotations, "COCO annotation file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--predictions", predictions, "Prediction log")->required()->check(CLI::ExistingFile);
    cmd->add_option("--output", output_path, "Write full-precision results as JSON");
    detail::add_eval_flags(cmd, eval_flags);
    add_common(cmd);
  }

  // simulate
  std::string latency_table;
  std::string resolution_text;
  std::vector<std::string> sweep_resolutions;
  std::string policy_text = "blocking_latest";
  std::string interpolation_text = "nearest";
  bool use_oracle = false;
  bool do_sweep = false;
  double jitter_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string emit_log;
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a real-time detector and score the resulting stream");
  simulate_cmd->add_option("--annotations", annotations, "COCO annotation file")->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("--latency-table", latency_table, "Latency table (width height latency_us)")
      ->required()
      ->check(CLI::ExistingFile);
  simulate_cmd->add_option("--resolution", resolution_text, "Input resolution WIDTHxHEIGHT");
  simulate_cmd->add_flag("--sweep", do_sweep, "Sweep resolutions and print the trade-off table");
  simulate_cmd->add_option("--resolutions", sweep_resolutions, "Sweep resolutions (default: every table entry)")
      ->delimiter(',');
  simulate_cmd->add_option("--policy", policy_text, "blocking_latest or fixed_stride:K")->capture_default_str();
  simulate_cmd->add_option("--interpolation", interpolation_text, "Latency interpolation")
      ->check(CLI::IsMember({"nearest", "linear"}))
      ->capture_default_str();
  simulate_cmd->add_option("--jitter-sigma", jitter_sigma, "Lognormal latency jitter sigma (0 = off)");
  simulate_cmd->add_option("--seed", seed, "Jitter seed");
  auto* oracle_flag = simulate_cmd->add_flag("--oracle", use_oracle, "Detector emits ground truth verbatim");
  auto* replay_opt = simulate_cmd->add_option("--predictions", predictions, "Replay per-frame detections from a log")
                         ->check(CLI::ExistingFile);
  oracle_flag->excludes(replay_opt);
  simulate_cmd->add_option("--emit-log", emit_log, "Write the simulated prediction stream");
  simulate_cmd->add_option("--output", output_path, "Write full-precision results as JSON");
  detail::add_eval_flags(simulate_cmd, eval_flags);
  add_common(simulate_cmd);

  // decode
  std::vector<std::string> grid_paths;
  std::string image_text;
  std::string network_text;
  std::vector<double> letterbox_values;
  NmsConfig nms_cfg;
  bool class_agnostic = false;
  std::int64_t frame_id = 0;
  std::int64_t emit_time = 0;
  auto* decode_cmd = app.add_subcommand("decode", "Decode grid dumps, apply NMS, map back to image coordinates");
  decode_cmd->add_option("--grid", grid_paths, "Grid dump, one per stride")->required()->check(CLI::ExistingFile);
  decode_cmd->add_option("--image", image_text, "Original image size WIDTHxHEIGHT")->required();
  decode_cmd->add_option("--network", network_text, "Network input size WIDTHxHEIGHT")->required();
  decode_cmd->add_option("--letterbox", letterbox_values, "Explicit transform: scale,pad_x,pad_y")
      ->delimiter(',')
      ->expected(3);
  decode_cmd->add_option("--iou-threshold", nms_cfg.iou_threshold, "NMS IoU threshold")->capture_default_str();
  decode_cmd->add_option("--score-threshold", nms_cfg.score_threshold, "Score threshold")->capture_default_str();
  decode_cmd->add_flag("--class-agnostic", class_agnostic, "Suppress across categories");
  decode_cmd->add_option("--frame-id", frame_id, "Frame id for the emitted event");
  decode_cmd->add_option("--emit-time", emit_time, "Emit time (us) for the emitted event");
  decode_cmd->add_option("--emit-log", emit_log, "Write detections as a one-event prediction log");
  add_common(decode_cmd);

  // remap
  std::string classmap_path;
  std::string target_table_path;
  std::string dataset_name;
  auto* remap_cmd = app.add_subcommand("remap", "Relabel an annotation file onto a target category table");
  remap_cmd->add_option("--annotations", annotations, "COCO annotation file")->required()->check(CLI::ExistingFile);
  remap_cmd->add_option("--classmap", classmap_path, "Class map TSV")->required()->check(CLI::ExistingFile);
  remap_cmd->add_option("--target-table", target_table_path, "Target category names, one per line")
      ->required()
      ->check(CLI::ExistingFile);
  remap_cmd->add_option("--dataset", dataset_name, "Source dataset name in the class map")->required();
  remap_cmd->add_option("--output", output_path, "Remapped annotation file")->required();
  add_common(remap_cmd);

  std::vector<const char*> argv{"streamperc"};
  for (const std::string& a : args) {
    argv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInputError;
  }

  std::ostringstream buf;
  try {
    const OutputFormat format = format_name == "records" ? OutputFormat::records : OutputFormat::table;

    if (offline->parsed() || streaming->parsed()) {
      const EvalConfig config = eval_flags.config();
      const DatasetBundle bundle = load_coco_annotations(annotations, fps);
      const std::vector<FrameRecord> frames = bundle.frames();
      const std::vector<PredictionEvent> events = load_prediction_log(predictions);
      EvalResult result;
      nlohmann::json j;
      if (offline->parsed()) {
        result = evaluate_offline(frames, predictions_by_frame(events), config);
        detail::print_result(buf, result, bundle.category_table, format, "eval_offline");
        j = detail::result_json(result, bundle.category_table);
      } else {
        const StreamAssociation assoc = associate(frames, events);
        result = evaluate_offline(frames, associated_predictions(events, assoc), config);
        const StalenessSummary s = summarize_staleness(assoc);
        detail::print_result(buf, result, bundle.category_table, format, "eval_streaming");
        detail::print_staleness(buf, s, format);
        j = detail::result_json(result, bundle.category_table);
        j["staleness"] = {{"paired_frames", s.paired_frames},
                          {"unpaired_frames", s.unpaired_frames},
                          {"mean_us", s.mean_us},
                          {"max_us", s.max_us}};
      }
      if (!output_path.empty()) {
        detail::write_json(output_path, j);
      }
    } else if (simulate_cmd->parsed()) {
      const EvalConfig config = eval_flags.config();
      const SchedulePolicy policy = SchedulePolicy::parse(policy_text);
      if (!use_oracle && predictions.empty()) {
        throw InputError("simulate needs a detector: pass --oracle or --predictions");
      }
      if (do_sweep == !resolution_text.empty()) {
        throw InputError("simulate needs exactly one of --resolution or --sweep");
      }
      if (do_sweep && !emit_log.empty()) {
        throw InputError("--emit-log is only valid with a single --resolution");
      }
      std::optional<Jitter> jitter;
      if (jitter_sigma != 0.0) {
        jitter = Jitter{jitter_sigma, seed};
      }
      const LatencyModel model = load_latency_model(
          latency_table, interpolation_text == "linear" ? Interpolation::linear_in_pixels : Interpolation::nearest,
          jitter);
      const DatasetBundle bundle = load_coco_annotations(annotations, fps);
      const std::vector<FrameRecord> frames = bundle.frames();
      const Detector detector =
          use_oracle ? oracle_detector() : replay_detector(predictions_by_frame(load_prediction_log(predictions)));

      if (do_sweep) {
        std::vector<Size> resolutions;
        if (sweep_resolutions.empty()) {
          for (const LatencyEntry& e : model.entries()) {
            resolutions.push_back({e.width, e.height});
          }
          std::reverse(resolutions.begin(), resolutions.end());  // widest first
        } else {
          for (const std::string& r : sweep_resolutions) {
            resolutions.push_back(detail::parse_size(r));
          }
        }
        const std::vector<SweepRow> rows = sweep(frames, detector, model, policy, resolutions, config);
        nlohmann::json jrows = nlohmann::json::array();
        if (format == OutputFormat::table) {
          buf << fmt::format("{:>6} {:>6} {:>11} {:>8} {:>9}\n", "width", "height", "latency_ms", "stream_ap",
                             "drop_rate");
        }
        for (const SweepRow& row : rows) {
          const double ms = static_cast<double>(row.latency_us) / 1000.0;
          if (format == OutputFormat::records) {
            buf << fmt::format("record=sweep width={} height={} latency_us={} latency_ms={:.1f} ap={:.3f} "
                               "ap50={:.3f} ap75={:.3f} drop_rate={:.3f}\n",
                               row.resolution.width, row.resolution.height, row.latency_us, ms, row.streaming.ap,
                               row.streaming.ap50, row.streaming.ap75, row.drop_rate);
          } else {
            buf << fmt::format("{:>6} {:>6} {:>11.1f} {:>8.3f} {:>9.3f}\n", row.resolution.width,
                               row.resolution.height, ms, row.streaming.ap, row.drop_rate);
          }
          nlohmann::json jr = detail::result_json(row.streaming, bundle.category_table);
          jr["width"] = row.resolution.width;
          jr["height"] = row.resolution.height;
          jr["latency_us"] = row.latency_us;
          jr["drop_rate"] = row.drop_rate;
          jrows.push_back(std::move(jr));
        }
        if (!output_path.empty()) {
          detail::write_json(output_path, {{"sweep", jrows}});
        }
      } else {
        const Size res = detail::parse_size(resolution_text);
        const SimTrace trace = simulate(frames, detector, model, policy, res);
        const StreamAssociation assoc = associate(frames, trace.events);
        const EvalResult result = evaluate_offline(frames, associated_predictions(trace.events, assoc), config);
        const TimeUs latency = latency_for(model, res.width, res.height);
        const double rate = drop_rate(trace);
        if (format == OutputFormat::records) {
          buf << fmt::format("record=simulation width={} height={} policy={} latency_us={} latency_ms={:.1f} "
                             "frames={} processed={} dropped={} drop_rate={:.3f}\n",
                             res.width, res.height, policy_text, latency, static_cast<double>(latency) / 1000.0,
                             frames.size(), trace.processed_frames.size(), trace.dropped_frames.size(), rate);
        } else {
          buf << fmt::format("resolution       {}x{}\npolicy           {}\nlatency          {:.1f} ms ({} us)\n"
                             "frames           {}\nprocessed        {}\ndropped          {}\ndrop rate        {:.3f}\n\n",
                             res.width, res.height, policy_text, static_cast<double>(latency) / 1000.0, latency,
                             frames.size(), trace.processed_frames.size(), trace.dropped_frames.size(), rate);
        }
        detail::print_result(buf, result, bundle.category_table, format, "eval_streaming");
        detail::print_staleness(buf, summarize_staleness(assoc), format);
        if (!emit_log.empty()) {
          write_prediction_log(emit_log, trace.events);
        }
        if (!output_path.empty()) {
          nlohmann::json j = detail::result_json(result, bundle.category_table);
          j["latency_us"] = latency;
          j["processed"] = trace.processed_frames.size();
          j["dropped"] = trace.dropped_frames.size();
          j["drop_rate"] = rate;
          detail::write_json(output_path, j);
        }
      }
    } else if (decode_cmd->parsed()) {
      nms_cfg.class_aware = !class_agnostic;
      const Size image = detail::parse_size(image_text);
      const Size network = detail::parse_size(network_text);
      const LetterboxTransform lt =
          letterbox_values.empty()
              ? LetterboxTransform::fit(image, network)
              : LetterboxTransform(letterbox_values[0], letterbox_values[1], letterbox_values[2], image, network);
      std::vector<GridOutput> grids;
      for (const std::string& p : grid_paths) {
        grids.push_back(read_grid_dump(p));
      }
      const std::vector<Detection> dets = fused_pipeline(grids, lt, nms_cfg);
      if (format == OutputFormat::records) {
        for (const Detection& d : dets) {
          buf << fmt::format("record=detection category={} score={:.6f} x_min={:.3f} y_min={:.3f} x_max={:.3f} "
                             "y_max={:.3f}\n",
                             d.category().value, d.score(), d.box().x_min(), d.box().y_min(), d.box().x_max(),
                             d.box().y_max());
        }
      } else {
        buf << fmt::format("{:>8} {:>8} {:>10} {:>10} {:>10} {:>10}\n", "category", "score", "x_min", "y_min",
                           "x_max", "y_max");
        for (const Detection& d : dets) {
          buf << fmt::format("{:>8} {:>8.4f} {:>10.2f} {:>10.2f} {:>10.2f} {:>10.2f}\n", d.category().value,
                             d.score(), d.box().x_min(), d.box().y_min(), d.box().x_max(), d.box().y_max());
        }
      }
      if (!emit_log.empty()) {
        const std::vector<PredictionEvent> events{{frame_id, emit_time, dets}};
        write_prediction_log(emit_log, events);
      }
    } else if (remap_cmd->parsed()) {
      const DatasetBundle bundle = load_coco_annotations(annotations, fps);
      const ClassMap map = load_class_map(classmap_path);
      const CategoryTable target = load_category_table(target_table_path);
      const RemapResult result = remap(bundle, map, target, dataset_name);
      for (const RuleCount& rc : result.counts) {
        const std::string tgt = rc.rule.target_class ? *rc.rule.target_class : std::string(kDropTarget);
        if (format == OutputFormat::records) {
          buf << fmt::format("record=rule dataset={} source={} target={} objects={}\n", rc.rule.source_dataset,
                             rc.rule.source_class, tgt, rc.objects);
        } else {
          buf << fmt::format("{:<20} -> {:<20} {:>8}\n", rc.rule.source_class, tgt, rc.objects);
        }
      }
      write_coco_annotations(output_path, result.bundle);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  }
  out << buf.str();
  return kExitOk;
}

}  // namespace streamperc::cli
