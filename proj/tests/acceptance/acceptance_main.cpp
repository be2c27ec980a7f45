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
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"
#include "fuzz_corpus.hpp"
#include "oracle/reference.hpp"
#include "streamperc/dataset_io.hpp"
#include "streamperc/offline_eval.hpp"
#include "streamperc/postprocess.hpp"
#include "streamperc/stream_sim.hpp"
#include "streamperc/streaming_eval.hpp"
#include "test_util.hpp"

namespace streamperc {
namespace {

using testing::Rng;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> fields(const EvalResult& r) {
  std::vector<double> v{r.ap, r.ap50, r.ap75, r.ap_small, r.ap_medium, r.ap_large};
  for (const auto& [c, x] : r.per_category_ap) {
    v.push_back(x);
  }
  return v;
}

Outcome offline_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20260101);
  int mismatches = 0;
  double worst = 0.0;
  const int n = 1200;
  for (int i = 0; i < n; ++i) {
    testing::InstanceShape shape;
    shape.distinct_scores = i % 3 == 0;
    shape.extent = i % 2 == 0 ? 100.0 : 250.0;
    const testing::Instance inst = testing::random_instance(rng, shape);
    const std::vector<double> a = fields(evaluate_offline(inst.frames, inst.predictions));
    const std::vector<double> b = fields(oracle::ref_ap(inst.frames, inst.predictions, oracle::ref_default_config()));
    bool ok = a.size() == b.size();
    for (std::size_t k = 0; ok && k < a.size(); ++k) {
      worst = std::max(worst, std::abs(a[k] - b[k]));
      ok = std::abs(a[k] - b[k]) <= 1e-9;
    }
    mismatches += ok ? 0 : 1;
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << n << " instances, " << mismatches << " mismatches, max |diff| " << worst << ", " << secs << " s";
  return {mismatches == 0 && secs < 30.0, d.str()};
}

Outcome hand_derived_ap() {
  FrameRecord f;
  f.frame_id = 0;
  f.width = 640;
  f.height = 480;
  f.ground_truth.push_back({make_box(0, 0, 100, 100), CategoryId{0}, false});
  PredictionMap preds;
  preds[0].emplace_back(make_box(0, 0, 92, 100), CategoryId{0}, 0.9);
  const EvalResult r = evaluate_offline(std::vector<FrameRecord>{f}, preds);
  std::ostringstream d;
  d.precision(17);
  d << "ap50 = " << r.ap50 << ", ap = " << r.ap;
  return {r.ap50 == 1.0 && r.ap == 0.9, d.str()};
}

Outcome zero_latency_equivalence() {
  Rng rng(303);
  int differing = 0;
  for (int i = 0; i < 100; ++i) {
    SyntheticScene scene;
    scene.num_frames = testing::uniform_int(rng, 5, 60);
    scene.num_objects = testing::uniform_int(rng, 1, 5);
    scene.box_size = testing::uniform(rng, 8.0, 110.0);
    scene.velocity_px_per_frame = testing::uniform(rng, -3.0, 12.0);
    scene.start_x = 400.0;
    scene.sequence_id = i % 4;
    scene.category = CategoryId{static_cast<std::uint32_t>(testing::uniform_int(rng, 0, 2))};
    const std::vector<FrameRecord> frames = synthetic_frames(scene);
    PredictionMap preds;
    for (const FrameRecord& f : frames) {
      for (const GroundTruthObject& g : f.ground_truth) {
        if (testing::uniform_int(rng, 0, 4) == 0) {
          continue;
        }
        preds[f.frame_id].emplace_back(testing::near_box(rng, g.box), g.category, testing::uniform(rng, 0.0, 1.0));
      }
      if (testing::uniform_int(rng, 0, 2) == 0) {
        preds[f.frame_id].emplace_back(testing::random_box(rng, 1000.0), scene.category,
                                       testing::uniform(rng, 0.0, 1.0));
      }
    }
    const EvalResult offline = evaluate_offline(frames, preds);
    const EvalResult streaming = evaluate_streaming(frames, identity_stream(frames, preds));
    differing += offline == streaming ? 0 : 1;
  }
  return {differing == 0, "100 sequences, " + std::to_string(differing) + " not bit-identical"};
}

Outcome latency_table() {
  const LatencyModel m(reference_latency_entries());
  const struct {
    int w, h;
    TimeUs us;
  } rows[] = {{1440, 2304, 28100}, {1280, 2048, 21400}, {1200, 1920, 20500}, {1120, 1792, 19700}, {960, 1536, 16000}};
  std::ostringstream d;
  bool ok = true;
  for (const auto& r : rows) {
    const TimeUs got = latency_for(m, r.w, r.h);
    ok = ok && got == r.us;
    d << r.w << "x" << r.h << "->" << got << " ";
  }
  return {ok, d.str()};
}

Outcome scheduling_consequences() {
  SyntheticScene scene;
  const std::vector<FrameRecord> frames = synthetic_frames(scene);
  const Size res{1920, 1200};
  const SimTrace fast =
      simulate(frames, oracle_detector(), LatencyModel::constant(28100), SchedulePolicy::blocking_latest(), res);
  const SimTrace slow =
      simulate(frames, oracle_detector(), LatencyModel::constant(70000), SchedulePolicy::blocking_latest(), res);
  std::vector<std::size_t> odd;
  for (std::size_t i = 1; i < frames.size(); i += 2) {
    odd.push_back(i);
  }
  const std::vector<FrameRecord> first5(frames.begin(), frames.begin() + 5);
  const SimTrace hand =
      simulate(first5, oracle_detector(), LatencyModel::constant(70000), SchedulePolicy::blocking_latest(), res);
  const bool hand_ok = hand.dropped_frames == std::vector<std::size_t>{1, 3};

  std::ostringstream d;
  d << "28100 us: " << fast.dropped_frames.size() << " dropped; 70000 us: " << slow.dropped_frames.size()
    << " dropped, 5-frame trace " << (hand_ok ? "matches" : "differs");
  const bool odd_ok = slow.dropped_frames == odd;
  if (!odd_ok) {
    std::size_t k = 0;
    while (k < std::min(odd.size(), slow.dropped_frames.size()) && slow.dropped_frames[k] == odd[k]) {
      ++k;
    }
    d << "; dropped set departs from the odd indices at position " << k << " (dropped "
      << (k < slow.dropped_frames.size() ? std::to_string(slow.dropped_frames[k]) : "none") << ", odd "
      << (k < odd.size() ? std::to_string(odd[k]) : "none") << ")";
  }
  return {fast.dropped_frames.empty() && hand_ok && odd_ok, d.str()};
}

Outcome tradeoff_monotonicity() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticScene scene;
  const std::vector<FrameRecord> frames = synthetic_frames(scene);
  std::ostringstream d;
  double previous = 2.0;
  bool monotone = true;
  double at_zero = -1.0;
  for (TimeUs latency : {TimeUs{0}, TimeUs{33300}, TimeUs{70000}, TimeUs{140000}}) {
    const SimTrace t = simulate(frames, oracle_detector(), LatencyModel::constant(latency),
                                SchedulePolicy::blocking_latest(), scene.image);
    const double ap = evaluate_streaming(frames, t.events).ap;
    if (latency == 0) {
      at_zero = ap;
    }
    monotone = monotone && ap <= previous;
    previous = ap;
    d << latency / 1000.0 << " ms: " << ap << "; ";
  }
  const double secs = seconds_since(t0);
  d << secs << " s";
  return {monotone && at_zero == 1.0 && secs < 10.0, d.str()};
}

bool same(const Detection& a, const Detection& b) {
  return a.box() == b.box() && a.category() == b.category() && a.score() == b.score();
}

Outcome nms_properties() {
  Rng rng(707);
  int bad = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    std::vector<Detection> dets;
    for (int k = 0; k < 50; ++k) {
      dets.emplace_back(testing::random_box(rng, 80.0, true),
                        CategoryId{static_cast<std::uint32_t>(testing::uniform_int(rng, 0, 2))},
                        testing::random_score(rng, i % 2 == 0));
    }
    NmsConfig cfg;
    cfg.iou_threshold = testing::uniform(rng, 0.05, 0.95);
    cfg.class_aware = i % 4 != 0;
    const std::vector<Detection> kept = nms(dets, cfg);
    const std::vector<Detection> again = nms(kept, cfg);
    const std::vector<Detection> ref = oracle::ref_nms(dets, {cfg.iou_threshold, cfg.class_aware});
    bool ok = again.size() == kept.size() && ref.size() == kept.size();
    for (std::size_t k = 0; ok && k < kept.size(); ++k) {
      ok = same(again[k], kept[k]) && same(ref[k], kept[k]);
    }
    std::vector<bool> used(dets.size(), false);
    for (const Detection& k : kept) {
      bool found = false;
      for (std::size_t j = 0; j < dets.size() && !found; ++j) {
        if (!used[j] && same(dets[j], k)) {
          used[j] = found = true;
        }
      }
      ok = ok && found;
    }
    for (std::size_t a = 0; ok && a < kept.size(); ++a) {
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        const bool comparable = !cfg.class_aware || kept[a].category() == kept[b].category();
        if (comparable && iou(kept[a].box(), kept[b].box()) >= cfg.iou_threshold) {
          ok = false;
        }
      }
    }
    bad += ok ? 0 : 1;
  }
  return {bad == 0, std::to_string(n) + " instances of 50 boxes, " + std::to_string(bad) + " violations"};
}

Outcome decode_correctness() {
  Rng rng(808);
  int bad = 0;
  for (int i = 0; i < 500; ++i) {
    const int stride = kPyramidStrides[static_cast<std::size_t>(i % 4)];
    const int rows = testing::uniform_int(rng, 1, 8);
    const int cols = testing::uniform_int(rng, 1, 8);
    const int classes = testing::uniform_int(rng, 1, 4);
    std::vector<float> v;
    for (int c = 0; c < rows * cols; ++c) {
      for (int k = 0; k < 5 + classes; ++k) {
        v.push_back(static_cast<float>(k == 2 || k == 3 ? testing::uniform(rng, -3.0, 3.0)
                                                        : testing::uniform(rng, 0.0, 1.0)));
      }
    }
    const double thr = testing::uniform(rng, 0.0, 0.6);
    const std::vector<Detection> got = decode_grid(GridOutput(stride, rows, cols, classes, v), thr);
    const std::vector<Detection> want = oracle::ref_decode(stride, rows, cols, classes, v, thr);
    bool ok = got.size() == want.size();
    for (std::size_t k = 0; ok && k < got.size(); ++k) {
      ok = same(got[k], want[k]);
    }
    bad += ok ? 0 : 1;
  }
  const std::vector<Detection> unit = decode_grid(GridOutput(8, 1, 1, 1, {0.5F, 0.5F, 0.0F, 0.0F, 1.0F, 1.0F}));
  const bool exp0 = unit.size() == 1 && unit[0].box() == make_box(0, 0, 8, 8) && unit[0].score() == 1.0;
  const float ln2 = std::log(2.0F);
  const std::vector<Detection> dbl = decode_grid(GridOutput(16, 1, 1, 1, {0.5F, 0.5F, ln2, ln2, 1.0F, 1.0F}));
  const bool expln2 = dbl.size() == 1 && dbl[0].box().width() == 32.0 && dbl[0].box().height() == 32.0;
  std::ostringstream d;
  d << "500 random grids, " << bad << " mismatches; exp(0) " << (exp0 ? "ok" : "wrong") << ", exp(ln 2) "
    << (expln2 ? "ok" : "wrong");
  return {bad == 0 && exp0 && expln2, d.str()};
}

Outcome round_trips() {
  Rng rng(909);
  std::ostringstream d;

  int log_bad = 0;
  for (int i = 0; i < 300; ++i) {
    std::vector<PredictionEvent> events;
    TimeUs t = 0;
    for (int e = testing::uniform_int(rng, 0, 6); e > 0; --e) {
      t += testing::uniform_int(rng, 0, 50000);
      PredictionEvent ev{testing::uniform_int(rng, 0, 1000), t, {}};
      for (int k = testing::uniform_int(rng, 0, 5); k > 0; --k) {
        const double x0 = testing::uniform(rng, -50.0, 2000.0);
        const double y0 = testing::uniform(rng, -50.0, 2000.0);
        ev.detections.emplace_back(make_box(x0, y0, x0 + testing::uniform(rng, 0.0, 300.0),
                                            y0 + testing::uniform(rng, 0.0, 300.0)),
                                   CategoryId{static_cast<std::uint32_t>(testing::uniform_int(rng, 0, 7))},
                                   testing::uniform(rng, 0.0, 1.0));
      }
      events.push_back(std::move(ev));
    }
    log_bad += parse_prediction_log(format_prediction_log(events)) == events ? 0 : 1;
  }
  d << "log " << log_bad << "/300 differ; ";

  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Size in{testing::uniform_int(rng, 16, 4000), testing::uniform_int(rng, 16, 4000)};
    const Size net{64 * testing::uniform_int(rng, 1, 40), 64 * testing::uniform_int(rng, 1, 40)};
    const LetterboxTransform lt = LetterboxTransform::fit(in, net);
    const double x0 = testing::uniform(rng, 0.0, in.width);
    const double y0 = testing::uniform(rng, 0.0, in.height);
    const BoundingBox b =
        make_box(x0, y0, testing::uniform(rng, x0, in.width), testing::uniform(rng, y0, in.height));
    const BoundingBox back = lt.to_image(lt.to_network(b));
    worst = std::max({worst, std::abs(back.x_min() - b.x_min()), std::abs(back.y_min() - b.y_min()),
                      std::abs(back.x_max() - b.x_max()), std::abs(back.y_max() - b.y_max())});
  }
  d << "letterbox max error " << worst << " px; ";

  testing::TempDir dir;
  DatasetBundle bundle;
  bundle.category_table = argoverse_hd_categories();
  SyntheticScene scene;
  scene.num_frames = 90;
  scene.num_objects = 4;
  for (FrameRecord& f : synthetic_frames(scene)) {
    bundle.file_names[f.frame_id] = "f.jpg";
    bundle.sequences[0].push_back(std::move(f));
  }
  const std::string annotations = dir.file("a.json");
  write_coco_annotations(annotations, bundle);
  const std::vector<FrameRecord> frames = load_coco_annotations(annotations).frames();
  std::ostringstream sink;
  const int sim = cli::run({"simulate", "--annotations", annotations, "--latency-table",
                            std::string(STREAMPERC_DATA_DIR) + "/latency_table.txt", "--resolution", "1280x2048",
                            "--oracle", "--emit-log", dir.file("sim.log"), "--output", dir.file("sim.json")},
                           sink, sink);
  const int eval = cli::run({"eval-streaming", "--annotations", annotations, "--predictions", dir.file("sim.log"),
                             "--output", dir.file("eval.json")},
                            sink, sink);
  bool cli_ok = sim == 0 && eval == 0;
  if (cli_ok) {
    const SimTrace trace = simulate(frames, oracle_detector(), LatencyModel(reference_latency_entries()),
                                    SchedulePolicy::blocking_latest(), {1280, 2048});
    const EvalResult lib = evaluate_streaming(frames, trace.events);
    const nlohmann::json js = nlohmann::json::parse(testing::read_file(dir.file("sim.json")));
    const nlohmann::json je = nlohmann::json::parse(testing::read_file(dir.file("eval.json")));
    for (const char* key : {"ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"}) {
      cli_ok = cli_ok && je.at(key).get<double>() == js.at(key).get<double>();
    }
    cli_ok = cli_ok && je.at("ap").get<double>() == lib.ap && je.at("ap50").get<double>() == lib.ap50 &&
             je.at("ap75").get<double>() == lib.ap75;
    d << "simulate->eval-streaming ap " << je.at("ap").get<double>() << " vs in-process " << lib.ap;
  } else {
    d << "CLI exit codes " << sim << "/" << eval << ": " << sink.str();
  }
  return {log_bad == 0 && worst <= 0.5 && cli_ok, d.str()};
}

Outcome ingest_robustness() {
  const std::vector<std::string> malformed = testing::malformed_annotation_corpus(1010, 360);
  int structured = 0;
  int accepted = 0;
  int other = 0;
  for (const std::string& text : malformed) {
    try {
      (void)parse_coco_annotations(text);
      ++accepted;
    } catch (const InputError&) {
      ++structured;
    } catch (...) {
      ++other;
    }
  }
  const std::vector<std::string> mutated = testing::mutated_annotation_corpus(1011, 2000);
  int invalid = 0;
  int mutated_errors = 0;
  for (const std::string& text : mutated) {
    try {
      const DatasetBundle b = parse_coco_annotations(text);
      try {
        validate_bundle(b);
      } catch (const Error&) {
        ++invalid;
      }
    } catch (const InputError&) {
      ++mutated_errors;
    } catch (...) {
      ++other;
    }
  }
  std::ostringstream d;
  d << malformed.size() << " malformed files: " << structured << " structured errors, " << accepted
    << " accepted; " << mutated.size() << " byte-mutated files: " << mutated_errors << " errors, " << invalid
    << " invalid bundles; " << other << " unstructured exceptions";
  return {structured == static_cast<int>(malformed.size()) && invalid == 0 && other == 0, d.str()};
}

}  // namespace
}  // namespace streamperc

int main() {
  using streamperc::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"offline AP matches the reference evaluator", streamperc::offline_oracle_equivalence},
      {"single TP at IoU 0.92 gives ap50 1.0 and ap 0.9", streamperc::hand_derived_ap},
      {"zero-latency streaming equals offline", streamperc::zero_latency_equivalence},
      {"latency table entries reproduced", streamperc::latency_table},
      {"blocking_latest drop pattern at 28.1 ms and 70 ms", streamperc::scheduling_consequences},
      {"streaming AP non-increasing in latency", streamperc::tradeoff_monotonicity},
      {"NMS properties and reference equality", streamperc::nms_properties},
      {"grid decode matches the per-cell reference", streamperc::decode_correctness},
      {"log, letterbox and CLI round-trips", streamperc::round_trips},
      {"malformed annotations give structured errors", streamperc::ingest_robustness},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2zu  %s  [%s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
