#include "trajnas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "trajnas/errors.hpp"

namespace trajnas {

namespace {

using nlohmann::json;

double dist2(double ax, double ay, double bx, double by) {
  const double dx = ax - bx;
  const double dy = ay - by;
  return dx * dx + dy * dy;
}

// Least-squares velocity of the past poses over times
// t_j = (j - H + 1) * dt, j = 0..H-1. Returns {vx, vy} plus the mean pose
// and mean time needed to evaluate the fitted line.
struct VelocityFit {
  double vx = 0.0, vy = 0.0;
  double mean_x = 0.0, mean_y = 0.0, mean_t = 0.0;
};

VelocityFit fit_past_velocity(const std::vector<Pose>& past, double dt_s) {
  const int h = static_cast<int>(past.size());
  VelocityFit fit;
  double sum_t = 0.0;
  for (int j = 0; j < h; ++j) {
    const double t = (j - h + 1) * dt_s;
    sum_t += t;
    fit.mean_x += past[j].x;
    fit.mean_y += past[j].y;
  }
  fit.mean_t = sum_t / h;
  fit.mean_x /= h;
  fit.mean_y /= h;
  double num_x = 0.0, num_y = 0.0, den = 0.0;
  for (int j = 0; j < h; ++j) {
    const double t = (j - h + 1) * dt_s - fit.mean_t;
    num_x += t * (past[j].x - fit.mean_x);
    num_y += t * (past[j].y - fit.mean_y);
    den += t * t;
  }
  fit.vx = num_x / den;
  fit.vy = num_y / den;
  return fit;
}

// Indexes GT tracks and final-future positions per scene id.
struct GtIndex {
  std::vector<const AgentTrack*> tracks;  // flat order: scene order, track order
  std::vector<int> scene_of;
  std::vector<MotionClass> subclass_of;
};

GtIndex build_gt_index(const std::vector<Scene>& scenes) {
  GtIndex idx;
  for (const Scene& s : scenes) {
    for (const AgentTrack& t : s.tracks) {
      idx.tracks.push_back(&t);
      idx.scene_of.push_back(s.scene_id);
      idx.subclass_of.push_back(classify_motion(t));
    }
  }
  return idx;
}

bool forecast_hits_gt(const Detection& det, const AgentTrack& gt,
                      double threshold, int k_used) {
  if (gt.future_poses.empty())
    throw DegenerateTrack("GT track " + std::to_string(gt.agent_id) +
                          " has no future poses for forecast matching");
  // Top-k by confidence without assuming the input order.
  std::vector<int> order(det.forecasts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return det.forecasts[a].confidence > det.forecasts[b].confidence;
  });
  const int k = std::min<int>(k_used, static_cast<int>(order.size()));
  const Pose& final_gt = gt.future_poses.back();
  for (int i = 0; i < k; ++i) {
    const ForecastHypothesis& hyp = det.forecasts[order[i]];
    if (hyp.future_centers.empty()) continue;
    const auto& last = hyp.future_centers.back();
    if (dist2(last[0], last[1], final_gt.x, final_gt.y) <=
        threshold * threshold)
      return true;
  }
  return false;
}

}  // namespace

MotionClass classify_motion(const AgentTrack& track) {
  if (track.past_poses.size() < 2)
    throw DegenerateTrack("track " + std::to_string(track.agent_id) + " has " +
                          std::to_string(track.past_poses.size()) +
                          " past poses; need at least 2");
  const Pose& first = track.past_poses.front();
  const Pose& last =
      track.future_poses.empty() ? track.past_poses.back()
                                 : track.future_poses.back();
  const double net = std::sqrt(dist2(first.x, first.y, last.x, last.y));
  if (net < kStaticDisplacementThreshold) return MotionClass::kStatic;

  if (track.future_poses.empty())
    throw DegenerateTrack("moving track " + std::to_string(track.agent_id) +
                          " has no future poses to classify against");
  const VelocityFit fit = fit_past_velocity(track.past_poses, track.dt_s);
  const double t_final =
      static_cast<double>(track.future_poses.size()) * track.dt_s;
  const double px = fit.mean_x + fit.vx * (t_final - fit.mean_t);
  const double py = fit.mean_y + fit.vy * (t_final - fit.mean_t);
  const Pose& final_future = track.future_poses.back();
  const double dev =
      std::sqrt(dist2(px, py, final_future.x, final_future.y));
  return dev < kLinearDeviationThreshold ? MotionClass::kLinear
                                         : MotionClass::kNonlinear;
}

MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<Scene>& gt_scenes,
                             double dist_threshold_m, MatchMode mode,
                             int k_used) {
  if (dist_threshold_m <= 0.0)
    throw InvalidParams("dist_threshold_m must be > 0");
  if (k_used < 1) throw InvalidParams("k_used must be >= 1");
  for (std::size_t i = 1; i < detections.size(); ++i) {
    if (detections[i].confidence > detections[i - 1].confidence)
      throw UnsortedInput("detections must be sorted by descending "
                          "confidence (violated at index " +
                          std::to_string(i) + ")");
  }

  const GtIndex gt = build_gt_index(gt_scenes);
  const int n_gt = static_cast<int>(gt.tracks.size());
  std::vector<bool> taken(n_gt, false);

  MatchResult result;
  result.matched_gt.assign(detections.size(), -1);
  const double thr2 = dist_threshold_m * dist_threshold_m;

  for (std::size_t d = 0; d < detections.size(); ++d) {
    const Detection& det = detections[d];
    // Nearest unmatched GT of the same scene within the gate. The greedy
    // assignment is identical in both modes; forecasting only filters it.
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int g = 0; g < n_gt; ++g) {
      if (taken[g] || gt.scene_of[g] != det.source_scene) continue;
      const Pose& center = gt.tracks[g]->past_poses.back();
      const double d2 = dist2(det.center[0], det.center[1], center.x, center.y);
      if (d2 <= thr2 && d2 < best_d2) {
        best = g;
        best_d2 = d2;
      }
    }
    if (best < 0) continue;
    taken[best] = true;  // the GT is consumed even if the forecast gate fails
    if (mode == MatchMode::kForecasting &&
        !forecast_hits_gt(det, *gt.tracks[best], dist_threshold_m, k_used))
      continue;
    result.matched_gt[d] = best;
    ++result.tp_count;
  }
  result.fn_count = n_gt - result.tp_count;
  return result;
}

double average_precision(const std::vector<bool>& tp_sequence, int n_gt) {
  if (n_gt < 0) throw InvalidParams("n_gt must be >= 0");
  if (n_gt == 0) return tp_sequence.empty() ? 1.0 : 0.0;
  const int n = static_cast<int>(tp_sequence.size());
  if (n == 0) return 0.0;

  // Operating points after each detection; recall is non-decreasing in the
  // prefix length, so a reverse sweep yields the interpolated precision
  // envelope max{prec(j) : recall(j) >= recall(i)} in one pass.
  std::vector<double> recall(n), envelope(n);
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    if (tp_sequence[i]) ++tp;
    recall[i] = static_cast<double>(tp) / n_gt;
    envelope[i] = static_cast<double>(tp) / (i + 1);
  }
  for (int i = n - 2; i >= 0; --i)
    envelope[i] = std::max(envelope[i], envelope[i + 1]);

  double sum = 0.0;
  int j = 0;
  for (int level = 1; level <= 40; ++level) {
    const double r = level / 40.0;
    while (j < n && recall[j] < r) ++j;
    if (j == n) break;  // recall level unattained; contributes 0
    sum += envelope[j];
  }
  return sum / 40.0;
}

std::pair<double, double> ade_fde(
    const std::vector<std::array<double, 2>>& predicted,
    const std::vector<std::array<double, 2>>& ground_truth) {
  if (predicted.size() != ground_truth.size() || predicted.empty())
    throw LengthMismatch("predicted (" + std::to_string(predicted.size()) +
                         ") and ground-truth (" +
                         std::to_string(ground_truth.size()) +
                         ") center sequences must have equal non-zero length");
  double sum = 0.0;
  double final_err = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double err = std::sqrt(dist2(predicted[i][0], predicted[i][1],
                                       ground_truth[i][0], ground_truth[i][1]));
    sum += err;
    final_err = err;
  }
  return {sum / predicted.size(), final_err};
}

EvalReport forecasting_report(const std::vector<Detection>& detections,
                              const std::vector<Scene>& gt_scenes, int k_used,
                              double dist_threshold_m) {
  const MatchResult det_match = match_detections(
      detections, gt_scenes, dist_threshold_m, MatchMode::kDetection, k_used);
  const MatchResult f_match = match_detections(
      detections, gt_scenes, dist_threshold_m, MatchMode::kForecasting, k_used);
  const GtIndex gt = build_gt_index(gt_scenes);

  EvalReport report;
  for (MotionClass m : gt.subclass_of) {
    if (m == MotionClass::kStatic) ++report.gt_static;
    if (m == MotionClass::kLinear) ++report.gt_linear;
    if (m == MotionClass::kNonlinear) ++report.gt_nonlinear;
  }

  // Per-subclass TP/FP sequences. A matched detection belongs to its GT's
  // subclass; an unmatched detection is an FP in every subclass.
  auto subclass_ap = [&](const MatchResult& match, MotionClass subclass,
                         int n_gt_sub) {
    std::vector<bool> seq;
    for (std::size_t d = 0; d < detections.size(); ++d) {
      const int g = match.matched_gt[d];
      if (g < 0) {
        seq.push_back(false);
      } else if (gt.subclass_of[g] == subclass) {
        seq.push_back(true);
      }
      // Matched detections of other subclasses do not appear in this
      // subclass's sequence at all.
    }
    return average_precision(seq, n_gt_sub);
  };

  report.ap_det_static =
      subclass_ap(det_match, MotionClass::kStatic, report.gt_static);
  report.ap_det_linear =
      subclass_ap(det_match, MotionClass::kLinear, report.gt_linear);
  report.ap_det_nonlinear =
      subclass_ap(det_match, MotionClass::kNonlinear, report.gt_nonlinear);
  report.ap_f_static =
      subclass_ap(f_match, MotionClass::kStatic, report.gt_static);
  report.ap_f_linear =
      subclass_ap(f_match, MotionClass::kLinear, report.gt_linear);
  report.ap_f_nonlinear =
      subclass_ap(f_match, MotionClass::kNonlinear, report.gt_nonlinear);

  report.map_det = (report.ap_det_static + report.ap_det_linear +
                    report.ap_det_nonlinear) /
                   3.0;
  report.map_f =
      (report.ap_f_static + report.ap_f_linear + report.ap_f_nonlinear) / 3.0;

  report.tp_det = det_match.tp_count;
  report.fn_det = det_match.fn_count;
  report.tp_forecast = f_match.tp_count;
  report.fn_forecast = f_match.fn_count;

  // ADE/FDE over TP forecasting matches, best (smallest final error) among
  // the top-k_used hypotheses.
  double ade_sum = 0.0, fde_sum = 0.0;
  int matched = 0;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const int g = f_match.matched_gt[d];
    if (g < 0) continue;
    const AgentTrack& track = *gt.tracks[g];
    std::vector<std::array<double, 2>> gt_centers;
    for (const Pose& p : track.future_poses) gt_centers.push_back({p.x, p.y});

    const Detection& det = detections[d];
    std::vector<int> order(det.forecasts.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return det.forecasts[a].confidence > det.forecasts[b].confidence;
    });
    const int k = std::min<int>(k_used, static_cast<int>(order.size()));
    double best_fde = std::numeric_limits<double>::infinity();
    double best_ade = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      const ForecastHypothesis& hyp = det.forecasts[order[i]];
      if (hyp.future_centers.size() != gt_centers.size()) continue;
      const auto [a, f] = ade_fde(hyp.future_centers, gt_centers);
      if (f < best_fde) {
        best_fde = f;
        best_ade = a;
      }
    }
    if (std::isfinite(best_fde)) {
      ade_sum += best_ade;
      fde_sum += best_fde;
      ++matched;
    }
  }
  if (matched > 0) {
    report.ade_m = ade_sum / matched;
    report.fde_m = fde_sum / matched;
  } else {
    report.ade_m = kUnmatchedAdeFallback;
    report.fde_m = kUnmatchedAdeFallback;
  }
  return report;
}

Detection constant_velocity_predictor(const std::vector<Pose>& history,
                                      double dt_s, int horizon,
                                      int k_hypotheses, int source_scene) {
  if (history.size() < 2)
    throw DegenerateTrack("constant-velocity fit needs at least 2 past poses");
  if (horizon < 1) throw InvalidParams("horizon must be >= 1");
  if (k_hypotheses < 1) throw InvalidParams("k_hypotheses must be >= 1");
  const VelocityFit fit = fit_past_velocity(history, dt_s);
  const Pose& p0 = history.back();

  Detection det;
  det.center = {p0.x, p0.y};
  det.confidence = 1.0;
  det.source_scene = source_scene;
  ForecastHypothesis hyp;
  hyp.confidence = 1.0 / k_hypotheses;
  for (int i = 1; i <= horizon; ++i) {
    hyp.future_centers.push_back(
        {p0.x + fit.vx * i * dt_s, p0.y + fit.vy * i * dt_s});
  }
  det.forecasts.assign(k_hypotheses, hyp);
  return det;
}

std::vector<Detection> constant_velocity_baseline(
    const std::vector<Scene>& scenes, int horizon, int k_hypotheses) {
  std::vector<Detection> dets;
  for (const Scene& s : scenes) {
    for (const AgentTrack& t : s.tracks) {
      dets.push_back(constant_velocity_predictor(t.past_poses, t.dt_s, horizon,
                                                 k_hypotheses, s.scene_id));
    }
    for (std::size_t c = 0; c < s.clutter.size(); ++c) {
      const std::vector<Pose> pseudo = clutter_pseudo_history(
          s, static_cast<int>(c),
          s.tracks.empty() ? 4 : static_cast<int>(s.tracks[0].past_poses.size()));
      const double dt = s.tracks.empty() ? 0.5 : s.tracks[0].dt_s;
      dets.push_back(constant_velocity_predictor(pseudo, dt, horizon,
                                                 k_hypotheses, s.scene_id));
    }
  }
  // All confidences are 1.0; keep a deterministic order anyway.
  return dets;
}

std::string serialize_detections(const std::vector<Detection>& detections) {
  json arr = json::array();
  for (const Detection& d : detections) {
    json forecasts = json::array();
    for (const ForecastHypothesis& h : d.forecasts) {
      json centers = json::array();
      for (const auto& c : h.future_centers)
        centers.push_back(json::array({c[0], c[1]}));
      forecasts.push_back(
          json{{"future_centers", centers}, {"confidence", h.confidence}});
    }
    arr.push_back(json{{"center", json::array({d.center[0], d.center[1]})},
                       {"confidence", d.confidence},
                       {"forecasts", forecasts},
                       {"source_scene", d.source_scene}});
  }
  return arr.dump(1);
}

std::vector<Detection> parse_detections(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("detections are not valid JSON: ") +
                      e.what());
  }
  try {
    if (!doc.is_array())
      throw FormatError("detections must be a JSON array");
    std::vector<Detection> dets;
    for (const json& j : doc) {
      Detection d;
      const json& center = j.at("center");
      if (!center.is_array() || center.size() != 2)
        throw FormatError("detection center must be [x, y]");
      d.center = {center[0].get<double>(), center[1].get<double>()};
      d.confidence = j.at("confidence").get<double>();
      d.source_scene = j.at("source_scene").get<int>();
      for (const json& f : j.at("forecasts")) {
        ForecastHypothesis h;
        h.confidence = f.at("confidence").get<double>();
        for (const json& c : f.at("future_centers")) {
          if (!c.is_array() || c.size() != 2)
            throw FormatError("future center must be [x, y]");
          h.future_centers.push_back({c[0].get<double>(), c[1].get<double>()});
        }
        d.forecasts.push_back(std::move(h));
      }
      dets.push_back(std::move(d));
    }
    return dets;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed detections: ") + e.what());
  }
}

std::string serialize_report(const EvalReport& r) {
  const json doc{
      {"ap_det",
       {{"static", r.ap_det_static},
        {"linear", r.ap_det_linear},
        {"nonlinear", r.ap_det_nonlinear}}},
      {"ap_f",
       {{"static", r.ap_f_static},
        {"linear", r.ap_f_linear},
        {"nonlinear", r.ap_f_nonlinear}}},
      {"map_det", r.map_det},
      {"map_f", r.map_f},
      {"ade_m", r.ade_m},
      {"fde_m", r.fde_m},
  };
  return doc.dump(1);
}

}  // namespace trajnas
