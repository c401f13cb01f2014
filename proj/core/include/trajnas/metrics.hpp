#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "trajnas/synthdata.hpp"

namespace trajnas {

// Motion-subclass decision thresholds. Calibrated so the generator's labels
// are recovered with 100% agreement on noiseless data.
inline constexpr double kStaticDisplacementThreshold = 1.0;  // metres
inline constexpr double kLinearDeviationThreshold = 0.5;     // metres

// Default center-distance gate for detection/forecast matching.
inline constexpr double kMatchDistanceThreshold = 2.0;  // metres

// ADE/FDE value reported when an evaluation produced no true-positive
// forecasting match at all (kept finite and clearly bad: twice the gate).
inline constexpr double kUnmatchedAdeFallback = 2.0 * kMatchDistanceThreshold;

// Re-derives the motion subclass from the stored poses:
//   static     net displacement from first past to last pose < 1.0 m
//   linear     final future pose deviates < 0.5 m from the least-squares
//              constant-velocity fit of the past
//   nonlinear  otherwise
// Throws DegenerateTrack when past_poses has fewer than 2 entries (or the
// future is empty for a moving agent).
MotionClass classify_motion(const AgentTrack& track);

struct ForecastHypothesis {
  std::vector<std::array<double, 2>> future_centers;
  double confidence = 0.0;
};

struct Detection {
  std::array<double, 2> center{0.0, 0.0};
  double confidence = 0.0;
  std::vector<ForecastHypothesis> forecasts;
  // Scene::scene_id of the scene this detection was produced from; matching
  // only pairs a detection with GT tracks from the same scene_id.
  int source_scene = 0;
};

enum class MatchMode { kDetection, kForecasting };

struct MatchResult {
  // Per detection, in input order: flat index of the matched GT track in the
  // concatenation of gt_scenes[i].tracks, or -1 for a false positive.
  std::vector<int> matched_gt;
  int tp_count = 0;
  int fn_count = 0;
};

// Greedy matcher over detections in descending-confidence order (throws
// UnsortedInput otherwise). A detection matches the nearest unmatched GT of
// its own scene within dist_threshold_m; each GT matches at most once.
// Forecasting mode keeps the same assignment and additionally requires one
// of the detection's top-k_used hypotheses to place its final center within
// dist_threshold_m of the GT's final future position; if that fails the
// detection counts as FP and the GT as FN.
MatchResult match_detections(const std::vector<Detection>& detections,
                             const std::vector<Scene>& gt_scenes,
                             double dist_threshold_m, MatchMode mode,
                             int k_used);

// 40-point interpolated AP: mean over recall levels r in {1/40 .. 40/40} of
// the max precision among operating points with recall >= r. For n_gt == 0
// the result is 1 when there are no detections and 0 otherwise.
double average_precision(const std::vector<bool>& tp_sequence, int n_gt);

// Standard displacement errors between aligned center sequences.
// Throws LengthMismatch unless both sequences have equal non-zero length.
std::pair<double, double> ade_fde(
    const std::vector<std::array<double, 2>>& predicted,
    const std::vector<std::array<double, 2>>& ground_truth);

struct EvalReport {
  double ap_det_static = 0.0;
  double ap_det_linear = 0.0;
  double ap_det_nonlinear = 0.0;
  double ap_f_static = 0.0;
  double ap_f_linear = 0.0;
  double ap_f_nonlinear = 0.0;
  double map_det = 0.0;
  double map_f = 0.0;  // exactly the mean of the three ap_f values
  double ade_m = 0.0;  // over TP forecasting matches, best hypothesis
  double fde_m = 0.0;
  int gt_static = 0;
  int gt_linear = 0;
  int gt_nonlinear = 0;
  int tp_det = 0;
  int tp_forecast = 0;
  int fn_det = 0;
  int fn_forecast = 0;
};

// FutureDet-style evaluation: GT tracks are bucketed by classify_motion,
// each detection is assigned to its matched GT's subclass, and unmatched
// detections count as FP inside every subclass evaluation. ADE/FDE use the
// hypothesis (among the top k_used) with the smallest final-center error.
EvalReport forecasting_report(const std::vector<Detection>& detections,
                              const std::vector<Scene>& gt_scenes, int k_used,
                              double dist_threshold_m = kMatchDistanceThreshold);

// Constant-velocity baseline for one observed history: detection at the
// observed t=0 center with confidence 1.0 and k identical hypotheses
// (confidence 1/k each) extrapolating the least-squares velocity of the
// past from that center.
Detection constant_velocity_predictor(const std::vector<Pose>& history,
                                      double dt_s, int horizon,
                                      int k_hypotheses, int source_scene);

// CV baseline over every observation candidate (agent tracks and clutter
// pseudo-histories) of the given scenes, sorted ready for matching.
std::vector<Detection> constant_velocity_baseline(
    const std::vector<Scene>& scenes, int horizon, int k_hypotheses);

// JSON (de)serialization used by the metrics CLI. The report JSON carries
// exactly the keys ap_det.*, ap_f.*, map_det, map_f, ade_m, fde_m.
std::string serialize_detections(const std::vector<Detection>& detections);
std::vector<Detection> parse_detections(const std::string& text);
std::string serialize_report(const EvalReport& report);

}  // namespace trajnas
