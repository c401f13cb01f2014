#include "trajnas/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trajnas/errors.hpp"
#include "trajnas/rng.hpp"

namespace trajnas {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;
constexpr double kSceneHalfExtent = 30.0;  // agents spawn in [-30, 30]^2
constexpr double kClutterMinDistance = 1.0;

// Sub-stream tags under one agent seed. Motion and noise live in separate
// streams so the ground-truth geometry is invariant to noise_sigma_m.
constexpr std::uint64_t kMotionStream = 0;
constexpr std::uint64_t kNoiseStream = 1;

struct MotionParams {
  MotionClass motion;
  double x0, y0, heading0;
  double speed;      // m/s, 0 for static
  double turn_rate;  // rad/s, 0 unless nonlinear
};

Pose pose_at(const MotionParams& p, double t, double z) {
  switch (p.motion) {
    case MotionClass::kStatic:
      return {p.x0, p.y0, p.heading0, z};
    case MotionClass::kLinear:
      return {p.x0 + p.speed * std::cos(p.heading0) * t,
              p.y0 + p.speed * std::sin(p.heading0) * t, p.heading0, z};
    case MotionClass::kNonlinear: {
      // Constant-turn-rate arc through (x0, y0) with heading0 at t=0.
      const double r = p.speed / p.turn_rate;  // signed radius
      const double h = p.heading0 + p.turn_rate * t;
      return {p.x0 + r * (std::sin(h) - std::sin(p.heading0)),
              p.y0 - r * (std::cos(h) - std::cos(p.heading0)), h, z};
    }
  }
  return {};
}

AgentTrack make_agent(const DatasetConfig& cfg, std::uint64_t agent_seed,
                      int agent_id) {
  Rng motion_rng(mix_seed(agent_seed, kMotionStream));
  Rng noise_rng(mix_seed(agent_seed, kNoiseStream));

  AgentTrack track;
  track.agent_id = agent_id;
  track.dt_s = cfg.dt_s;

  track.agent_class = motion_rng.uniform_double() < 0.7
                          ? AgentClass::kCar
                          : AgentClass::kPedestrian;
  const double u = motion_rng.uniform_double();
  MotionParams p;
  p.motion = u < 0.3 ? MotionClass::kStatic
                     : (u < 0.7 ? MotionClass::kLinear : MotionClass::kNonlinear);
  track.motion = p.motion;

  p.x0 = motion_rng.uniform_range(-kSceneHalfExtent, kSceneHalfExtent);
  p.y0 = motion_rng.uniform_range(-kSceneHalfExtent, kSceneHalfExtent);
  p.heading0 = motion_rng.uniform_range(-kPi, kPi);
  p.speed = 0.0;
  p.turn_rate = 0.0;

  const bool car = track.agent_class == AgentClass::kCar;
  if (p.motion == MotionClass::kLinear) {
    p.speed = car ? motion_rng.uniform_range(1.0, 8.0)
                  : motion_rng.uniform_range(0.8, 2.0);
  } else if (p.motion == MotionClass::kNonlinear) {
    p.speed = car ? motion_rng.uniform_range(2.0, 8.0)
                  : motion_rng.uniform_range(0.8, 2.0);
    // Turn-rate range keeps the final-pose deviation from a straight
    // extrapolation well above the linear/nonlinear decision threshold even
    // for slow pedestrians at short horizons.
    const double mag = car ? motion_rng.uniform_range(0.2, 0.6)
                           : motion_rng.uniform_range(0.4, 1.0);
    p.turn_rate = motion_rng.uniform_double() < 0.5 ? mag : -mag;
  }

  double z, l, w, h;
  if (car) {
    l = motion_rng.uniform_range(4.0, 5.2);
    w = motion_rng.uniform_range(1.7, 2.1);
    h = motion_rng.uniform_range(1.5, 1.9);
    z = motion_rng.uniform_range(0.7, 1.0);
  } else {
    l = motion_rng.uniform_range(0.7, 0.9);
    w = motion_rng.uniform_range(0.6, 0.8);
    h = motion_rng.uniform_range(1.6, 1.9);
    z = motion_rng.uniform_range(0.8, 1.0);
  }
  track.length_m = l;
  track.width_m = w;
  track.height_m = h;

  track.past_poses.reserve(cfg.history_len);
  for (int j = 0; j < cfg.history_len; ++j) {
    const double t = (j - cfg.history_len + 1) * cfg.dt_s;
    Pose pose = pose_at(p, t, z);
    pose.x += cfg.noise_sigma_m * noise_rng.normal();
    pose.y += cfg.noise_sigma_m * noise_rng.normal();
    track.past_poses.push_back(pose);
  }
  track.future_poses.reserve(cfg.horizon);
  for (int i = 1; i <= cfg.horizon; ++i) {
    track.future_poses.push_back(pose_at(p, i * cfg.dt_s, z));
  }
  return track;
}

Scene make_scene(const DatasetConfig& cfg, int scene_uid) {
  const std::uint64_t scene_seed = mix_seed(cfg.seed, scene_uid);
  Scene scene;
  scene.scene_id = scene_uid;
  scene.noise_sigma_m = cfg.noise_sigma_m;

  // True (noiseless) t=0 centers for the clutter distance rule. Regenerating
  // the agent with sigma=0 yields them exactly because motion and noise use
  // separate streams.
  DatasetConfig noiseless = cfg;
  noiseless.noise_sigma_m = 0.0;
  std::vector<std::array<double, 2>> centers;
  for (int a = 0; a < cfg.agents_per_scene; ++a) {
    const std::uint64_t agent_seed = mix_seed(scene_seed, a + 1);
    const int agent_id = scene_uid * 1000 + a;
    scene.tracks.push_back(make_agent(cfg, agent_seed, agent_id));
    const AgentTrack clean = make_agent(noiseless, agent_seed, agent_id);
    centers.push_back({clean.past_poses.back().x, clean.past_poses.back().y});
  }

  Rng clutter_rng(mix_seed(scene_seed, 0x10000));
  const int n_clutter = std::max(1, cfg.agents_per_scene / 2);
  for (int c = 0; c < n_clutter; ++c) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x =
          clutter_rng.uniform_range(-kSceneHalfExtent - 2, kSceneHalfExtent + 2);
      const double y =
          clutter_rng.uniform_range(-kSceneHalfExtent - 2, kSceneHalfExtent + 2);
      bool clear = true;
      for (const auto& ctr : centers) {
        const double dx = x - ctr[0];
        const double dy = y - ctr[1];
        if (dx * dx + dy * dy < kClutterMinDistance * kClutterMinDistance) {
          clear = false;
          break;
        }
      }
      if (clear) {
        scene.clutter.push_back({x, y});
        break;
      }
    }
  }
  return scene;
}

json pose_to_json(const Pose& p) {
  return json::array({p.x, p.y, p.heading, p.z});
}

Pose pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw FormatError("pose must be a 4-element array [x, y, heading, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

json track_to_json(const AgentTrack& t) {
  json poses_past = json::array();
  for (const Pose& p : t.past_poses) poses_past.push_back(pose_to_json(p));
  json poses_future = json::array();
  for (const Pose& p : t.future_poses) poses_future.push_back(pose_to_json(p));
  return json{{"agent_id", t.agent_id},
              {"class", agent_class_name(t.agent_class)},
              {"motion", motion_class_name(t.motion)},
              {"past_poses", poses_past},
              {"future_poses", poses_future},
              {"length_m", t.length_m},
              {"width_m", t.width_m},
              {"height_m", t.height_m},
              {"dt_s", t.dt_s}};
}

AgentTrack track_from_json(const json& j) {
  AgentTrack t;
  t.agent_id = j.at("agent_id").get<int>();
  const std::string cls = j.at("class").get<std::string>();
  if (cls == "car") {
    t.agent_class = AgentClass::kCar;
  } else if (cls == "pedestrian") {
    t.agent_class = AgentClass::kPedestrian;
  } else {
    throw FormatError("unknown agent class '" + cls + "'");
  }
  const std::string motion = j.at("motion").get<std::string>();
  if (motion == "static") {
    t.motion = MotionClass::kStatic;
  } else if (motion == "linear") {
    t.motion = MotionClass::kLinear;
  } else if (motion == "nonlinear") {
    t.motion = MotionClass::kNonlinear;
  } else {
    throw FormatError("unknown motion class '" + motion + "'");
  }
  for (const json& p : j.at("past_poses")) t.past_poses.push_back(pose_from_json(p));
  for (const json& p : j.at("future_poses"))
    t.future_poses.push_back(pose_from_json(p));
  t.length_m = j.at("length_m").get<double>();
  t.width_m = j.at("width_m").get<double>();
  t.height_m = j.at("height_m").get<double>();
  t.dt_s = j.at("dt_s").get<double>();
  return t;
}

json scene_to_json(const Scene& s) {
  json tracks = json::array();
  for (const AgentTrack& t : s.tracks) tracks.push_back(track_to_json(t));
  json clutter = json::array();
  for (const auto& c : s.clutter) clutter.push_back(json::array({c[0], c[1]}));
  return json{{"scene_id", s.scene_id},
              {"noise_sigma_m", s.noise_sigma_m},
              {"tracks", tracks},
              {"clutter", clutter}};
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.scene_id = j.at("scene_id").get<int>();
  s.noise_sigma_m = j.at("noise_sigma_m").get<double>();
  for (const json& t : j.at("tracks")) s.tracks.push_back(track_from_json(t));
  for (const json& c : j.at("clutter")) {
    if (!c.is_array() || c.size() != 2)
      throw FormatError("clutter entry must be a 2-element array [x, y]");
    s.clutter.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return s;
}

json config_to_json(const DatasetConfig& c) {
  return json{{"seed", c.seed},
              {"train_scenes", c.train_scenes},
              {"val_scenes", c.val_scenes},
              {"agents_per_scene", c.agents_per_scene},
              {"history_len", c.history_len},
              {"horizon", c.horizon},
              {"dt_s", c.dt_s},
              {"noise_sigma_m", c.noise_sigma_m}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_scenes = j.at("train_scenes").get<int>();
  c.val_scenes = j.at("val_scenes").get<int>();
  c.agents_per_scene = j.at("agents_per_scene").get<int>();
  c.history_len = j.at("history_len").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.dt_s = j.at("dt_s").get<double>();
  c.noise_sigma_m = j.at("noise_sigma_m").get<double>();
  return c;
}

}  // namespace

const char* agent_class_name(AgentClass c) {
  return c == AgentClass::kCar ? "car" : "pedestrian";
}

const char* motion_class_name(MotionClass m) {
  switch (m) {
    case MotionClass::kStatic:
      return "static";
    case MotionClass::kLinear:
      return "linear";
    case MotionClass::kNonlinear:
      return "nonlinear";
  }
  return "unknown";
}

void DatasetConfig::validate() const {
  if (train_scenes < 1) throw InvalidParams("train_scenes must be >= 1");
  if (val_scenes < 1) throw InvalidParams("val_scenes must be >= 1");
  if (agents_per_scene < 1)
    throw InvalidParams("agents_per_scene must be >= 1");
  if (history_len < 2) throw InvalidParams("history_len must be >= 2");
  if (horizon < 1) throw InvalidParams("horizon must be >= 1");
  if (!(dt_s > 0.0) || !std::isfinite(dt_s))
    throw InvalidParams("dt_s must be finite and > 0");
  if (noise_sigma_m < 0.0 || !std::isfinite(noise_sigma_m))
    throw InvalidParams("noise_sigma_m must be finite and >= 0");
}

Dataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  for (int s = 0; s < config.train_scenes; ++s)
    ds.splits.train.push_back(make_scene(config, s));
  for (int s = 0; s < config.val_scenes; ++s)
    ds.splits.val.push_back(make_scene(config, config.train_scenes + s));

  const int mini_train_n =
      std::min<int>(kMiniSplitScenes, ds.splits.train.size());
  const int mini_val_n = std::min<int>(kMiniSplitScenes, ds.splits.val.size());
  ds.splits.mini_train.assign(ds.splits.train.begin(),
                              ds.splits.train.begin() + mini_train_n);
  ds.splits.mini_val.assign(ds.splits.val.begin(),
                            ds.splits.val.begin() + mini_val_n);
  return ds;
}

std::string serialize_dataset(const Dataset& dataset) {
  json splits;
  auto scenes_to_json = [](const std::vector<Scene>& scenes) {
    json arr = json::array();
    for (const Scene& s : scenes) arr.push_back(scene_to_json(s));
    return arr;
  };
  splits["train"] = scenes_to_json(dataset.splits.train);
  splits["val"] = scenes_to_json(dataset.splits.val);
  splits["mini_train"] = scenes_to_json(dataset.splits.mini_train);
  splits["mini_val"] = scenes_to_json(dataset.splits.mini_val);
  const json doc{{"version", 1},
                 {"config", config_to_json(dataset.config)},
                 {"splits", splits}};
  return doc.dump(1);
}

Dataset parse_dataset(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.contains("version"))
      throw FormatError("dataset lacks a version field");
    const int version = doc.at("version").get<int>();
    if (version != 1)
      throw FormatError("unsupported dataset version " +
                        std::to_string(version) + " (expected 1)");
    Dataset ds;
    ds.config = config_from_json(doc.at("config"));
    const json& splits = doc.at("splits");
    auto scenes_from_json = [](const json& arr) {
      std::vector<Scene> scenes;
      for (const json& s : arr) scenes.push_back(scene_from_json(s));
      return scenes;
    };
    ds.splits.train = scenes_from_json(splits.at("train"));
    ds.splits.val = scenes_from_json(splits.at("val"));
    ds.splits.mini_train = scenes_from_json(splits.at("mini_train"));
    ds.splits.mini_val = scenes_from_json(splits.at("mini_val"));
    return ds;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed dataset: ") + e.what());
  }
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize_dataset(dataset);
  if (!out) throw IoError("failed writing dataset to '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string serialize_scenes(const std::vector<Scene>& scenes) {
  json arr = json::array();
  for (const Scene& s : scenes) arr.push_back(scene_to_json(s));
  return arr.dump(1);
}

std::vector<Scene> parse_scenes(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("scene list is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_array()) throw FormatError("scene list must be a JSON array");
    std::vector<Scene> scenes;
    for (const json& s : doc) scenes.push_back(scene_from_json(s));
    return scenes;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed scene list: ") + e.what());
  }
}

std::vector<Pose> clutter_pseudo_history(const Scene& scene, int clutter_index,
                                         int history_len) {
  if (clutter_index < 0 ||
      clutter_index >= static_cast<int>(scene.clutter.size()))
    throw InvalidParams("clutter index " + std::to_string(clutter_index) +
                        " out of range for scene " +
                        std::to_string(scene.scene_id));
  // Stream tag 0x636c7574 = "clut"; independent of every generator stream.
  Rng rng(mix_seed(mix_seed(0x636c7574, scene.scene_id), clutter_index));
  const auto& c = scene.clutter[clutter_index];
  std::vector<Pose> history(history_len);
  for (Pose& p : history) {
    p.x = c[0] + scene.noise_sigma_m * rng.normal();
    p.y = c[1] + scene.noise_sigma_m * rng.normal();
    p.heading = 0.0;
    p.z = 0.0;
  }
  return history;
}

SubclassCounts count_subclasses(const std::vector<Scene>& scenes) {
  SubclassCounts counts;
  for (const Scene& s : scenes) {
    for (const AgentTrack& t : s.tracks) {
      switch (t.motion) {
        case MotionClass::kStatic:
          ++counts.static_n;
          break;
        case MotionClass::kLinear:
          ++counts.linear_n;
          break;
        case MotionClass::kNonlinear:
          ++counts.nonlinear_n;
          break;
      }
    }
  }
  return counts;
}

}  // namespace trajnas
