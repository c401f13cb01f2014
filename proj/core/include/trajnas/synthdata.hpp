#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace trajnas {

enum class AgentClass { kCar, kPedestrian };
enum class MotionClass { kStatic, kLinear, kNonlinear };

const char* agent_class_name(AgentClass c);
const char* motion_class_name(MotionClass m);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double z = 0.0;
};

// One agent. past_poses cover times -H+1..0 and are the *observed* history:
// at noise_sigma_m > 0 their x/y carry additive Gaussian noise. future_poses
// cover times 1..F and are always noiseless ground truth. `motion` is the
// generation label; evaluation re-derives subclasses from the poses.
struct AgentTrack {
  int agent_id = 0;
  AgentClass agent_class = AgentClass::kCar;
  MotionClass motion = MotionClass::kStatic;
  std::vector<Pose> past_poses;
  std::vector<Pose> future_poses;
  double length_m = 0.0;
  double width_m = 0.0;
  double height_m = 0.0;
  double dt_s = 0.5;
};

// Clutter entries are spurious observation candidates at t=0, at least 1 m
// away from every true agent center, so the detection task has genuine
// false-positive material.
struct Scene {
  int scene_id = 0;
  std::vector<AgentTrack> tracks;
  std::vector<std::array<double, 2>> clutter;
  double noise_sigma_m = 0.0;
};

struct DatasetConfig {
  std::uint64_t seed = 1;
  int train_scenes = 40;
  int val_scenes = 10;
  int agents_per_scene = 8;
  int history_len = 4;  // H: past poses per track, including t=0
  int horizon = 6;      // F: future poses per track
  double dt_s = 0.5;
  double noise_sigma_m = 0.2;

  void validate() const;  // throws InvalidParams naming the bad field
};

struct DatasetSplit {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> mini_train;  // first scenes of train (10 by default)
  std::vector<Scene> mini_val;    // first scenes of val
};

struct Dataset {
  DatasetConfig config;
  DatasetSplit splits;
};

// Number of scenes copied into each mini split (capped by the split size).
inline constexpr int kMiniSplitScenes = 10;

// Deterministic generation: every scene derives its own seed from
// (config.seed, global scene index) via mix_seed, so scenes are independent
// of generation order. Each agent splits motion and observation-noise draws
// into separate streams; changing noise_sigma_m therefore never changes the
// underlying ground-truth geometry.
//
// Subclass mix per agent: 30% static, 40% linear, 30% nonlinear (expected).
// Static agents do not move at all; linear agents follow an exact
// constant-velocity line; nonlinear agents follow a constant-turn-rate arc
// with |turn rate| >= 0.2 rad/s.
Dataset generate_dataset(const DatasetConfig& config);

std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);  // throws FormatError

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);  // IoError / FormatError

// Scene-array JSON used by the metrics CLI for ground truth.
std::string serialize_scenes(const std::vector<Scene>& scenes);
std::vector<Scene> parse_scenes(const std::string& text);

// Observation candidate for a clutter point: a pseudo-history of
// history_len poses jittered around the clutter position with the scene's
// noise sigma (heading and z are zero, which distinguishes clutter from real
// agents only statistically). Deterministic in (scene_id, clutter_index), so
// training and evaluation always see the same pseudo-observations.
std::vector<Pose> clutter_pseudo_history(const Scene& scene, int clutter_index,
                                         int history_len);

struct SubclassCounts {
  int static_n = 0;
  int linear_n = 0;
  int nonlinear_n = 0;
  int total() const { return static_n + linear_n + nonlinear_n; }
};

// Tally of the generation labels across scenes.
SubclassCounts count_subclasses(const std::vector<Scene>& scenes);

}  // namespace trajnas
