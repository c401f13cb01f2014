#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trajnas/energy.hpp"
#include "trajnas/genome.hpp"
#include "trajnas/metrics.hpp"
#include "trajnas/synthdata.hpp"

namespace trajnas {

// The encoder is a fixed (not searched) 2-layer MLP of this width.
inline constexpr int kEncoderLayers = 2;
inline constexpr int kDefaultEncoderWidth = 32;

// Shape constants pinned inside cost_model_latency, which must be a function
// of the genome alone.
inline constexpr int kCostModelHistoryLen = 4;
inline constexpr int kCostModelHorizon = 6;
inline constexpr int kCostModelHypotheses = 5;

// Centered x/y inputs are scaled to keep tanh pre-activations in range.
inline constexpr double kFeatureScale = 0.1;
inline constexpr int kFeaturesPerPose = 4;  // (x, y, heading, z)

inline constexpr int kNumHeads = 5;
enum HeadId {
  kHeadVelocity = 0,   // 2K velocity components + K hypothesis logits
  kHeadRotation = 1,   // heading
  kHeadDimension = 2,  // length, width
  kHeadRegression = 3, // center offset (2) + detection-confidence logit
  kHeadHeight = 4,     // z, height
};

enum class BlockType { kDense, kResidual, kIdentity };

struct HeadPlan {
  int depth = 1;
  int width = 16;
  bool private_stem = false;  // false: head reads the trunk output directly
  int out_dim = 1;
};

struct LayerPlan {
  enum Kind { kDenseTanh, kDenseLinear, kIdentityBlock, kResidualBlock };
  Kind kind = kDenseTanh;
  int in = 0;
  int out = 0;
  int input_layer = -1;  // index of the producing layer; -1 = network input
  int w_offset = 0;      // into the flat parameter vector (row-major out x in)
  int b_offset = 0;
};

struct ModelShape {
  int history_len = kCostModelHistoryLen;
  int encoder_width = kDefaultEncoderWidth;
  int k_hypotheses = kCostModelHypotheses;
};

// Static decode of a genome: layer graph, parameter layout, MAC count.
struct ArchitecturePlan {
  ModelShape shape;
  int input_features = 0;  // history_len * kFeaturesPerPose
  int trunk_depth = 0;
  std::vector<BlockType> trunk_blocks;
  int trunk_width = 0;      // target width of non-identity trunk blocks
  int trunk_out_width = 0;  // actual width reaching the heads
  std::array<HeadPlan, kNumHeads> heads;
  std::vector<LayerPlan> layers;  // forward order: encoder, trunk, heads
  std::array<int, kNumHeads> head_output_layer{};  // final layer per head
  int parameter_count = 0;
  long long macs_per_pass = 0;  // one network evaluation
  int layer_count = 0;          // identity blocks count as layers
};

// Throws SpaceMismatch when the genome/space cannot be decoded (e.g. the
// 300-gene paper-scale space, which only supports size reporting).
ArchitecturePlan decode_genome(const Genome& g, const SearchSpaceSpec& space,
                               const ModelShape& shape);

struct ModelInstance {
  Genome genome;
  ArchitecturePlan plan;
  std::vector<double> params;
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, drawn in
// layer order from init_seed.
ModelInstance instantiate(const Genome& g, const SearchSpaceSpec& space,
                          const ModelShape& shape, std::uint64_t init_seed);

// Refined t=0 state from the Regression/Rotation/Dimension/Height heads.
struct AgentState {
  double x = 0.0, y = 0.0;
  double heading = 0.0;
  double z = 0.0;
  double length = 0.0, width = 0.0, height = 0.0;
};

struct ForecastOutput {
  double detection_confidence = 0.0;  // sigmoid of the detection logit
  AgentState state;
  // One entry per hypothesis slot; confidences are the softmax of the
  // hypothesis logits at t=0 (sum to 1), not sorted.
  std::vector<ForecastHypothesis> hypotheses;
};

// Cyclic rollout: the network first refines the t=0 state from the observed
// history, then per hypothesis k integrates center_{i} = center_{i-1} +
// v_k * dt where v_k is re-predicted each step from a window that slides
// over the fed-back predicted poses (centered at the newest pose). The
// observed history must have exactly plan.shape.history_len poses.
ForecastOutput forward_rollout(const ModelInstance& model,
                               const std::vector<Pose>& observed_history,
                               double dt_s, int horizon);

// (MACs of one agent-forecast)/1e9 + 1e-5 * layer count, where one
// agent-forecast runs 1 + K*(F-1) network passes at the pinned shape
// constants (K = kCostModelHypotheses, F = kCostModelHorizon).
double cost_model_latency(const Genome& g, const SearchSpaceSpec& space);

// Median wall-clock seconds of forward_rollout over `repetitions` timed runs
// after `warmup` untimed ones, on a fixed synthetic history. Must not share
// the machine with other timed work.
double measure_latency(const ModelInstance& model, int repetitions, int warmup,
                       int horizon = kCostModelHorizon);

struct TrainingSample {
  std::vector<Pose> history;  // observed past, H poses
  double dt_s = 0.5;
  bool is_agent = true;       // false: clutter, detection BCE only
  int source_scene = 0;
  std::vector<std::array<double, 2>> future_centers;  // GT, agents only
  double gt_heading = 0.0;
  double gt_z = 0.0, gt_height = 0.0;
  double gt_length = 0.0, gt_width = 0.0;
};

// Agents and clutter pseudo-observations of the given scenes, scene order.
std::vector<TrainingSample> build_training_samples(
    const std::vector<Scene>& scenes);

struct TrainConfig {
  int epochs = 5;
  double learning_rate = 5e-4;
  int batch_size = 4;
  // Adaptive-moment update; beta1 = 0 keeps it momentum-free by default.
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 7;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_losses;  // mean sample loss per epoch
  int updates = 0;
};

// Mean loss over the samples; if grad is non-null it receives dLoss/dparams
// (resized and zeroed first). Loss terms: winner-takes-all smooth-L1 over
// future centers, smooth-L1 on the t=0 state heads, BCE on the detection
// logit (agents vs clutter).
double loss_and_gradient(const ModelInstance& model,
                         const std::vector<TrainingSample>& samples,
                         std::vector<double>* grad);

// Mini-batch training over the scenes' samples. Deterministic in
// (model, scenes, config). Throws NonFiniteLoss (annotated with epoch and
// batch) if a loss or gradient stops being finite.
TrainReport train(ModelInstance& model, const std::vector<Scene>& scenes,
                  const TrainConfig& cfg);

// One detection per observation candidate (tracks, then clutter), sorted by
// descending confidence, hypotheses sorted by descending confidence.
std::vector<Detection> predict_scenes(const ModelInstance& model,
                                      const std::vector<Scene>& scenes,
                                      int horizon);

struct EvalConfig {
  TrainConfig train;
  int k_hypotheses = 1;
  std::uint64_t model_seed = 11;
  bool deterministic_latency = true;  // cost model instead of wall clock
  int latency_repetitions = 30;
  int latency_warmup = 5;
  bool full_split = false;  // train on train/eval on val instead of the minis
  double match_threshold_m = kMatchDistanceThreshold;
};

struct CandidateEvaluation {
  CandidateMetrics metrics;
  EvalReport report;
  TrainReport train_report;
  ModelInstance model;  // the trained weights behind `metrics`
};

// Two-step protocol: instantiate (seed derived from model_seed and the
// genome), train on mini_train, report metrics on mini_val; with full_split
// the full train/val splits are used instead.
CandidateEvaluation evaluate_candidate_full(const Genome& g,
                                            const SearchSpaceSpec& space,
                                            const Dataset& dataset,
                                            const EvalConfig& cfg);
CandidateMetrics evaluate_candidate(const Genome& g,
                                    const SearchSpaceSpec& space,
                                    const Dataset& dataset,
                                    const EvalConfig& cfg);

// ".tnmodel" format: one JSON header line (genome text and shape), newline,
// then parameter_count little-endian float64 values.
void save_model(const ModelInstance& model, const std::string& path);
ModelInstance load_model(const std::string& path,
                         const SearchSpaceSpec& space);

}  // namespace trajnas
