#include "trajnas/forecaster.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "trajnas/errors.hpp"
#include "trajnas/rng.hpp"

namespace trajnas {
namespace {

using json = nlohmann::json;

constexpr std::array<int, 4> kTrunkWidthTable{16, 32, 64, 128};
constexpr std::array<int, 3> kHeadWidthTable{16, 32, 64};
constexpr double kPi = 3.14159265358979323846;

double wrap_to_pi(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double smooth_l1(double e) {
  const double ae = std::abs(e);
  return ae < 1.0 ? 0.5 * e * e : ae - 0.5;
}

double smooth_l1_grad(double e) { return std::clamp(e, -1.0, 1.0); }

double sigmoid(double s) {
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s))
                  : std::exp(s) / (1.0 + std::exp(s));
}

// log(1 + exp(-|s|)) formulation keeps the loss finite for any logit.
double bce_with_logit(double s, double target) {
  return std::max(s, 0.0) - s * target + std::log1p(std::exp(-std::abs(s)));
}

std::vector<int> single_gene_segment(const SearchSpaceSpec& space,
                                     SegmentKind kind) {
  std::vector<int> genes = space.segment_genes(kind);
  if (genes.size() != 1) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "space '%s': %s segment must hold exactly one gene (has %zu)",
                  space.name.c_str(), segment_kind_name(kind), genes.size());
    throw SpaceMismatch(buf);
  }
  return genes;
}

// Head segments hold either one gene (broadcast to all heads) or one per head.
std::array<int, kNumHeads> head_segment_values(const SearchSpaceSpec& space,
                                               const Genome& g,
                                               SegmentKind kind, int max_card) {
  const std::vector<int> genes = space.segment_genes(kind);
  if (genes.size() != 1 && genes.size() != kNumHeads) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "space '%s': %s segment must hold 1 or %d genes (has %zu)",
                  space.name.c_str(), segment_kind_name(kind), kNumHeads,
                  genes.size());
    throw SpaceMismatch(buf);
  }
  std::array<int, kNumHeads> out{};
  for (int h = 0; h < kNumHeads; ++h) {
    const int gi = genes.size() == 1 ? genes[0] : genes[h];
    if (space.cardinalities[gi] > max_card) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "space '%s': %s gene %d cardinality %d exceeds the "
                    "supported maximum %d",
                    space.name.c_str(), segment_kind_name(kind), gi,
                    space.cardinalities[gi], max_card);
      throw SpaceMismatch(buf);
    }
    out[h] = g.genes[gi];
  }
  return out;
}

void check_cardinality(const SearchSpaceSpec& space, int gene, int max_card,
                       SegmentKind kind) {
  if (space.cardinalities[gene] > max_card) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "space '%s': %s gene %d cardinality %d exceeds the "
                  "supported maximum %d",
                  space.name.c_str(), segment_kind_name(kind), gene,
                  space.cardinalities[gene], max_card);
    throw SpaceMismatch(buf);
  }
}

// ---------------------------------------------------------------------------
// Single network pass.

struct PassCache {
  std::vector<double> input;
  std::vector<std::vector<double>> values;  // one output vector per layer
  std::vector<std::vector<double>> aux;     // residual blocks: the tanh branch
};

void net_forward(const ArchitecturePlan& plan, const std::vector<double>& params,
                 std::vector<double> input, PassCache& cache) {
  const std::size_t n_layers = plan.layers.size();
  cache.input = std::move(input);
  cache.values.assign(n_layers, {});
  cache.aux.assign(n_layers, {});
  for (std::size_t i = 0; i < n_layers; ++i) {
    const LayerPlan& layer = plan.layers[i];
    const std::vector<double>& x =
        layer.input_layer < 0 ? cache.input : cache.values[layer.input_layer];
    std::vector<double>& y = cache.values[i];
    switch (layer.kind) {
      case LayerPlan::kIdentityBlock:
        y = x;
        break;
      case LayerPlan::kDenseTanh:
      case LayerPlan::kDenseLinear: {
        y.assign(layer.out, 0.0);
        for (int o = 0; o < layer.out; ++o) {
          const double* w = &params[layer.w_offset + o * layer.in];
          double acc = params[layer.b_offset + o];
          for (int j = 0; j < layer.in; ++j) acc += w[j] * x[j];
          y[o] = layer.kind == LayerPlan::kDenseTanh ? std::tanh(acc) : acc;
        }
        break;
      }
      case LayerPlan::kResidualBlock: {
        std::vector<double>& a = cache.aux[i];
        a.assign(layer.out, 0.0);
        y.assign(layer.out, 0.0);
        for (int o = 0; o < layer.out; ++o) {
          const double* w = &params[layer.w_offset + o * layer.in];
          double acc = params[layer.b_offset + o];
          for (int j = 0; j < layer.in; ++j) acc += w[j] * x[j];
          a[o] = std::tanh(acc);
          y[o] = x[o] + a[o];
        }
        break;
      }
    }
  }
}

// Reverse pass. d_values[i] is the adjoint of layer i's output; an empty
// vector marks "no gradient flows here" and the layer is skipped. If d_input
// is non-null it accumulates the adjoint of the network input.
void net_backward(const ArchitecturePlan& plan, const std::vector<double>& params,
                  const PassCache& cache,
                  std::vector<std::vector<double>>& d_values,
                  std::vector<double>* d_input, std::vector<double>& grad) {
  for (int i = static_cast<int>(plan.layers.size()) - 1; i >= 0; --i) {
    if (d_values[i].empty()) continue;
    const LayerPlan& layer = plan.layers[i];
    const std::vector<double>& gout = d_values[i];
    const std::vector<double>& x =
        layer.input_layer < 0 ? cache.input : cache.values[layer.input_layer];
    std::vector<double>* din = nullptr;
    if (layer.input_layer >= 0) {
      din = &d_values[layer.input_layer];
    } else {
      din = d_input;
    }
    if (din != nullptr && din->empty()) din->assign(x.size(), 0.0);

    switch (layer.kind) {
      case LayerPlan::kIdentityBlock:
        if (din != nullptr)
          for (int o = 0; o < layer.out; ++o) (*din)[o] += gout[o];
        break;
      case LayerPlan::kDenseTanh:
      case LayerPlan::kDenseLinear:
      case LayerPlan::kResidualBlock: {
        const std::vector<double>& y = cache.values[i];
        const std::vector<double>& a = cache.aux[i];
        for (int o = 0; o < layer.out; ++o) {
          double dpre = gout[o];
          if (layer.kind == LayerPlan::kDenseTanh) {
            dpre *= 1.0 - y[o] * y[o];
          } else if (layer.kind == LayerPlan::kResidualBlock) {
            dpre *= 1.0 - a[o] * a[o];
            if (din != nullptr) (*din)[o] += gout[o];  // skip connection
          }
          grad[layer.b_offset + o] += dpre;
          const double* w = &params[layer.w_offset + o * layer.in];
          double* gw = &grad[layer.w_offset + o * layer.in];
          for (int j = 0; j < layer.in; ++j) {
            gw[j] += dpre * x[j];
            if (din != nullptr) (*din)[j] += w[j] * dpre;
          }
        }
        break;
      }
    }
  }
}

std::vector<double> build_features(const std::vector<Pose>& window) {
  const int h = static_cast<int>(window.size());
  const double cx = window[h - 1].x;
  const double cy = window[h - 1].y;
  std::vector<double> feats(static_cast<std::size_t>(h) * kFeaturesPerPose);
  for (int j = 0; j < h; ++j) {
    feats[4 * j + 0] = (window[j].x - cx) * kFeatureScale;
    feats[4 * j + 1] = (window[j].y - cy) * kFeatureScale;
    feats[4 * j + 2] = window[j].heading;
    feats[4 * j + 3] = window[j].z;
  }
  return feats;
}

const std::vector<double>& head_out(const ArchitecturePlan& plan,
                                    const PassCache& cache, HeadId head) {
  return cache.values[plan.head_output_layer[head]];
}

// ---------------------------------------------------------------------------
// Rollout with retained per-pass caches (needed for backprop through the
// fed-back poses).

struct RolloutData {
  int horizon = 0;
  PassCache pass0;
  // passes[k][q-1] is hypothesis k's pass over the window ending at time q.
  std::vector<std::vector<PassCache>> passes;
  std::vector<std::vector<std::array<double, 2>>> centers;  // [k][0..F]
  std::vector<std::vector<double>> theta;  // [k][q] = rotation out of pass q
  std::vector<std::vector<double>> zs;     // [k][q] = height z out of pass q
};

void rollout_forward(const ModelInstance& model,
                     const std::vector<Pose>& observed_history, double dt_s,
                     int horizon, RolloutData& rd) {
  const ArchitecturePlan& plan = model.plan;
  const int h_len = plan.shape.history_len;
  const int k_hyp = plan.shape.k_hypotheses;
  if (static_cast<int>(observed_history.size()) != h_len) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "rollout needs exactly %d observed poses, got %zu", h_len,
                  observed_history.size());
    throw InvalidParams(buf);
  }
  if (horizon < 1) throw InvalidParams("rollout horizon must be >= 1");
  if (!std::isfinite(dt_s) || dt_s <= 0.0)
    throw InvalidParams("rollout dt_s must be finite and > 0");

  rd.horizon = horizon;
  net_forward(plan, model.params, build_features(observed_history), rd.pass0);

  const std::vector<double>& reg = head_out(plan, rd.pass0, kHeadRegression);
  const std::vector<double>& vel0 = head_out(plan, rd.pass0, kHeadVelocity);
  const double rot0 = head_out(plan, rd.pass0, kHeadRotation)[0];
  const double z0 = head_out(plan, rd.pass0, kHeadHeight)[0];
  const std::array<double, 2> c0{observed_history[h_len - 1].x + reg[0],
                                 observed_history[h_len - 1].y + reg[1]};

  rd.passes.assign(k_hyp, {});
  rd.centers.assign(k_hyp, {});
  rd.theta.assign(k_hyp, std::vector<double>(horizon, 0.0));
  rd.zs.assign(k_hyp, std::vector<double>(horizon, 0.0));

  std::vector<Pose> window(h_len);
  for (int k = 0; k < k_hyp; ++k) {
    rd.passes[k].resize(horizon - 1);
    rd.centers[k].assign(horizon + 1, c0);
    rd.theta[k][0] = rot0;
    rd.zs[k][0] = z0;
    rd.centers[k][1] = {c0[0] + dt_s * vel0[2 * k],
                        c0[1] + dt_s * vel0[2 * k + 1]};
    for (int q = 1; q < horizon; ++q) {
      // Window over times q-h_len+1 .. q; non-positive times come from the
      // observed history, later ones from the fed-back predictions.
      for (int j = 0; j < h_len; ++j) {
        const int m = q - h_len + 1 + j;
        if (m <= 0) {
          window[j] = observed_history[m + h_len - 1];
        } else {
          window[j] = Pose{rd.centers[k][m][0], rd.centers[k][m][1],
                           rd.theta[k][m - 1], rd.zs[k][m - 1]};
        }
      }
      PassCache& pc = rd.passes[k][q - 1];
      net_forward(plan, model.params, build_features(window), pc);
      const std::vector<double>& vel = head_out(plan, pc, kHeadVelocity);
      rd.centers[k][q + 1] = {rd.centers[k][q][0] + dt_s * vel[2 * k],
                              rd.centers[k][q][1] + dt_s * vel[2 * k + 1]};
      rd.theta[k][q] = head_out(plan, pc, kHeadRotation)[0];
      rd.zs[k][q] = head_out(plan, pc, kHeadHeight)[0];
    }
  }
}

ForecastOutput collect_output(const ModelInstance& model,
                              const RolloutData& rd) {
  const ArchitecturePlan& plan = model.plan;
  const int k_hyp = plan.shape.k_hypotheses;
  const std::vector<double>& reg = head_out(plan, rd.pass0, kHeadRegression);
  const std::vector<double>& vel0 = head_out(plan, rd.pass0, kHeadVelocity);
  const std::vector<double>& dim = head_out(plan, rd.pass0, kHeadDimension);
  const std::vector<double>& hei = head_out(plan, rd.pass0, kHeadHeight);

  ForecastOutput out;
  out.detection_confidence = sigmoid(reg[2]);
  out.state.x = rd.centers[0][0][0];
  out.state.y = rd.centers[0][0][1];
  out.state.heading = head_out(plan, rd.pass0, kHeadRotation)[0];
  out.state.z = hei[0];
  out.state.height = hei[1];
  out.state.length = dim[0];
  out.state.width = dim[1];

  // Softmax over the hypothesis logits (velocity outputs 2K..3K-1).
  double max_logit = vel0[2 * k_hyp];
  for (int k = 1; k < k_hyp; ++k)
    max_logit = std::max(max_logit, vel0[2 * k_hyp + k]);
  double denom = 0.0;
  std::vector<double> expv(k_hyp);
  for (int k = 0; k < k_hyp; ++k) {
    expv[k] = std::exp(vel0[2 * k_hyp + k] - max_logit);
    denom += expv[k];
  }
  out.hypotheses.resize(k_hyp);
  for (int k = 0; k < k_hyp; ++k) {
    out.hypotheses[k].confidence = expv[k] / denom;
    out.hypotheses[k].future_centers.assign(rd.centers[k].begin() + 1,
                                            rd.centers[k].end());
  }
  return out;
}

std::vector<std::vector<double>> make_seeds(const ArchitecturePlan& plan) {
  return std::vector<std::vector<double>>(plan.layers.size());
}

// Loss and (optionally) parameter gradient of one sample; contributions are
// scaled by `scale` so callers can average over a batch.
double sample_loss_and_grad(const ModelInstance& model,
                            const TrainingSample& sample, double scale,
                            std::vector<double>* grad) {
  const ArchitecturePlan& plan = model.plan;
  const int h_len = plan.shape.history_len;

  if (!sample.is_agent) {
    // Clutter: detection BCE only, single pass over the observed window.
    PassCache cache;
    net_forward(plan, model.params, build_features(sample.history), cache);
    const std::vector<double>& reg = head_out(plan, cache, kHeadRegression);
    const double loss = bce_with_logit(reg[2], 0.0);
    if (grad != nullptr) {
      auto seeds = make_seeds(plan);
      std::vector<double> d_reg(reg.size(), 0.0);
      d_reg[2] = scale * sigmoid(reg[2]);  // d BCE / d logit, target 0
      seeds[plan.head_output_layer[kHeadRegression]] = std::move(d_reg);
      net_backward(plan, model.params, cache, seeds, nullptr, *grad);
    }
    return loss;
  }

  const int horizon = static_cast<int>(sample.future_centers.size());
  if (horizon < 1)
    throw InvalidParams("agent training sample has no future centers");

  RolloutData rd;
  rollout_forward(model, sample.history, sample.dt_s, horizon, rd);
  const int k_hyp = plan.shape.k_hypotheses;

  // Winner-takes-all over the per-hypothesis future loss.
  int winner = 0;
  double best_future = 0.0;
  for (int k = 0; k < k_hyp; ++k) {
    double acc = 0.0;
    for (int i = 1; i <= horizon; ++i) {
      acc += smooth_l1(rd.centers[k][i][0] - sample.future_centers[i - 1][0]);
      acc += smooth_l1(rd.centers[k][i][1] - sample.future_centers[i - 1][1]);
    }
    acc /= 2.0 * horizon;
    if (k == 0 || acc < best_future) {
      best_future = acc;
      winner = k;
    }
  }

  const std::vector<double>& reg = head_out(plan, rd.pass0, kHeadRegression);
  const std::vector<double>& dim = head_out(plan, rd.pass0, kHeadDimension);
  const std::vector<double>& hei = head_out(plan, rd.pass0, kHeadHeight);
  const double rot0 = head_out(plan, rd.pass0, kHeadRotation)[0];

  // t=0 state terms. The refined center equals observed + offset and its
  // target is the observed center, so the offset targets are zero.
  const std::array<double, 7> state_err{
      reg[0],
      reg[1],
      wrap_to_pi(rot0 - sample.gt_heading),
      dim[0] - sample.gt_length,
      dim[1] - sample.gt_width,
      hei[0] - sample.gt_z,
      hei[1] - sample.gt_height,
  };
  double state_loss = 0.0;
  for (double e : state_err) state_loss += smooth_l1(e);
  state_loss /= 7.0;

  const double det_loss = bce_with_logit(reg[2], 1.0);
  const double loss = best_future + state_loss + det_loss;
  if (grad == nullptr) return loss;

  // Adjoints of the winner's predicted centers / fed-back heading and z.
  std::vector<std::array<double, 2>> dc(horizon + 1, {0.0, 0.0});
  std::vector<double> dtheta(horizon, 0.0);
  std::vector<double> dz(horizon, 0.0);
  const double future_scale = scale / (2.0 * horizon);
  for (int i = 1; i <= horizon; ++i) {
    dc[i][0] = future_scale * smooth_l1_grad(rd.centers[winner][i][0] -
                                             sample.future_centers[i - 1][0]);
    dc[i][1] = future_scale * smooth_l1_grad(rd.centers[winner][i][1] -
                                             sample.future_centers[i - 1][1]);
  }

  // Walk the winner's passes newest-first so every dc[q+1] is complete before
  // it seeds the velocity output that produced it.
  for (int q = horizon - 1; q >= 1; --q) {
    if (q + 2 <= horizon) {  // integration chain c[q+2] = c[q+1] + v*dt
      dc[q + 1][0] += dc[q + 2][0];
      dc[q + 1][1] += dc[q + 2][1];
    }
    const PassCache& pc = rd.passes[winner][q - 1];
    auto seeds = make_seeds(plan);
    {
      std::vector<double> d_vel(3 * k_hyp, 0.0);
      d_vel[2 * winner] = sample.dt_s * dc[q + 1][0];
      d_vel[2 * winner + 1] = sample.dt_s * dc[q + 1][1];
      seeds[plan.head_output_layer[kHeadVelocity]] = std::move(d_vel);
    }
    seeds[plan.head_output_layer[kHeadRotation]] = {dtheta[q]};
    seeds[plan.head_output_layer[kHeadHeight]] = {dz[q], 0.0};

    std::vector<double> d_feats;
    net_backward(plan, model.params, pc, seeds, &d_feats, *grad);

    double sum_x = 0.0, sum_y = 0.0;
    for (int j = 0; j < h_len; ++j) {
      sum_x += d_feats[4 * j + 0];
      sum_y += d_feats[4 * j + 1];
      const int m = q - h_len + 1 + j;
      if (m >= 1) {
        dc[m][0] += kFeatureScale * d_feats[4 * j + 0];
        dc[m][1] += kFeatureScale * d_feats[4 * j + 1];
        dtheta[m - 1] += d_feats[4 * j + 2];
        dz[m - 1] += d_feats[4 * j + 3];
      }
    }
    // The window is centered on c[q]: every x/y feature subtracts it.
    dc[q][0] -= kFeatureScale * sum_x;
    dc[q][1] -= kFeatureScale * sum_y;
  }
  if (horizon >= 2) {
    dc[1][0] += dc[2][0];
    dc[1][1] += dc[2][1];
  }

  // Pass 0: state/detection seeds plus everything funneled into c[1], the
  // t=0 rotation/z feedback, and the refined center c[0] = observed + offset.
  const std::array<double, 2> dc0 = dc[1];
  auto seeds = make_seeds(plan);
  {
    std::vector<double> d_vel(3 * k_hyp, 0.0);
    d_vel[2 * winner] = sample.dt_s * dc[1][0];
    d_vel[2 * winner + 1] = sample.dt_s * dc[1][1];
    seeds[plan.head_output_layer[kHeadVelocity]] = std::move(d_vel);
  }
  const double state_scale = scale / 7.0;
  seeds[plan.head_output_layer[kHeadRotation]] = {
      dtheta[0] + state_scale * smooth_l1_grad(state_err[2])};
  seeds[plan.head_output_layer[kHeadHeight]] = {
      dz[0] + state_scale * smooth_l1_grad(state_err[5]),
      state_scale * smooth_l1_grad(state_err[6])};
  seeds[plan.head_output_layer[kHeadDimension]] = {
      state_scale * smooth_l1_grad(state_err[3]),
      state_scale * smooth_l1_grad(state_err[4])};
  seeds[plan.head_output_layer[kHeadRegression]] = {
      dc0[0] + state_scale * smooth_l1_grad(state_err[0]),
      dc0[1] + state_scale * smooth_l1_grad(state_err[1]),
      scale * (sigmoid(reg[2]) - 1.0)};
  net_backward(plan, model.params, rd.pass0, seeds, nullptr, *grad);
  return loss;
}

double batch_loss_and_grad(const ModelInstance& model,
                           const std::vector<const TrainingSample*>& batch,
                           std::vector<double>* grad) {
  if (batch.empty()) throw InvalidParams("loss over an empty sample set");
  if (grad != nullptr) grad->assign(model.params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainingSample* s : batch)
    total += sample_loss_and_grad(model, *s, scale, grad);
  return total * scale;
}

}  // namespace

// ---------------------------------------------------------------------------

ArchitecturePlan decode_genome(const Genome& g, const SearchSpaceSpec& space,
                               const ModelShape& shape) {
  validate_genome(g, space);
  if (shape.history_len < 2)
    throw InvalidParams("model history_len must be >= 2");
  if (shape.encoder_width < 1)
    throw InvalidParams("model encoder_width must be >= 1");
  if (shape.k_hypotheses < 1)
    throw InvalidParams("model k_hypotheses must be >= 1");

  ArchitecturePlan plan;
  plan.shape = shape;
  plan.input_features = shape.history_len * kFeaturesPerPose;

  const std::vector<int> depth_genes =
      single_gene_segment(space, SegmentKind::kTrunkDepth);
  plan.trunk_depth = g.genes[depth_genes[0]] + 1;

  const std::vector<int> width_genes =
      single_gene_segment(space, SegmentKind::kTrunkWidth);
  check_cardinality(space, width_genes[0],
                    static_cast<int>(kTrunkWidthTable.size()),
                    SegmentKind::kTrunkWidth);
  plan.trunk_width = kTrunkWidthTable[g.genes[width_genes[0]]];

  const std::vector<int> block_genes =
      space.segment_genes(SegmentKind::kTrunkBlockType);
  if (block_genes.empty()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "space '%s': trunk_block_type segment holds no genes",
                  space.name.c_str());
    throw SpaceMismatch(buf);
  }
  for (int gi : block_genes)
    check_cardinality(space, gi, 3, SegmentKind::kTrunkBlockType);
  for (int l = 0; l < plan.trunk_depth; ++l) {
    const int idx = std::min<int>(l, static_cast<int>(block_genes.size()) - 1);
    plan.trunk_blocks.push_back(
        static_cast<BlockType>(g.genes[block_genes[idx]]));
  }

  const std::array<int, kNumHeads> head_depth =
      head_segment_values(space, g, SegmentKind::kHeadDepth, 3);
  const std::array<int, kNumHeads> head_width =
      head_segment_values(space, g, SegmentKind::kHeadWidth,
                          static_cast<int>(kHeadWidthTable.size()));
  const std::array<int, kNumHeads> shared_stem =
      head_segment_values(space, g, SegmentKind::kHeadSharedStem, 2);
  const std::array<int, kNumHeads> out_dims{3 * shape.k_hypotheses, 1, 2, 3, 2};
  for (int h = 0; h < kNumHeads; ++h) {
    plan.heads[h].depth = head_depth[h] + 1;
    plan.heads[h].width = kHeadWidthTable[head_width[h]];
    plan.heads[h].private_stem = shared_stem[h] == 1;
    plan.heads[h].out_dim = out_dims[h];
  }

  // Layer graph: encoder, trunk, then one chain per head off the trunk output.
  int offset = 0;
  auto add_layer = [&plan, &offset](LayerPlan::Kind kind, int in, int out,
                                    int input_layer) {
    LayerPlan layer;
    layer.kind = kind;
    layer.in = in;
    layer.out = out;
    layer.input_layer = input_layer;
    if (kind != LayerPlan::kIdentityBlock) {
      layer.w_offset = offset;
      offset += in * out;
      layer.b_offset = offset;
      offset += out;
      plan.macs_per_pass += static_cast<long long>(in) * out;
    }
    plan.layers.push_back(layer);
    return static_cast<int>(plan.layers.size()) - 1;
  };

  int last = add_layer(LayerPlan::kDenseTanh, plan.input_features,
                       shape.encoder_width, -1);
  last = add_layer(LayerPlan::kDenseTanh, shape.encoder_width,
                   shape.encoder_width, last);

  int cur_width = shape.encoder_width;
  for (BlockType bt : plan.trunk_blocks) {
    switch (bt) {
      case BlockType::kIdentity:
        last = add_layer(LayerPlan::kIdentityBlock, cur_width, cur_width, last);
        break;
      case BlockType::kDense:
        last = add_layer(LayerPlan::kDenseTanh, cur_width, plan.trunk_width,
                         last);
        cur_width = plan.trunk_width;
        break;
      case BlockType::kResidual:
        // The skip connection only type-checks when the width is preserved;
        // otherwise the block degrades to a plain dense layer (same MACs).
        if (cur_width == plan.trunk_width) {
          last = add_layer(LayerPlan::kResidualBlock, cur_width, cur_width,
                           last);
        } else {
          last = add_layer(LayerPlan::kDenseTanh, cur_width, plan.trunk_width,
                           last);
          cur_width = plan.trunk_width;
        }
        break;
    }
  }
  plan.trunk_out_width = cur_width;
  const int trunk_last = last;

  for (int h = 0; h < kNumHeads; ++h) {
    const HeadPlan& hp = plan.heads[h];
    int input_layer = trunk_last;
    int in_width = plan.trunk_out_width;
    if (hp.private_stem) {
      input_layer =
          add_layer(LayerPlan::kDenseTanh, in_width, hp.width, input_layer);
      in_width = hp.width;
    }
    for (int d = 0; d < hp.depth; ++d) {
      input_layer = add_layer(LayerPlan::kDenseTanh, d == 0 ? in_width : hp.width,
                              hp.width, input_layer);
    }
    plan.head_output_layer[h] =
        add_layer(LayerPlan::kDenseLinear, hp.width, hp.out_dim, input_layer);
  }

  plan.parameter_count = offset;
  plan.layer_count = static_cast<int>(plan.layers.size());
  return plan;
}

ModelInstance instantiate(const Genome& g, const SearchSpaceSpec& space,
                          const ModelShape& shape, std::uint64_t init_seed) {
  ModelInstance model;
  model.genome = g;
  model.plan = decode_genome(g, space, shape);
  model.params.assign(model.plan.parameter_count, 0.0);
  Rng rng(init_seed);
  for (const LayerPlan& layer : model.plan.layers) {
    if (layer.kind == LayerPlan::kIdentityBlock) continue;
    const double limit = std::sqrt(6.0 / (layer.in + layer.out));
    for (int idx = 0; idx < layer.in * layer.out; ++idx)
      model.params[layer.w_offset + idx] = rng.uniform_range(-limit, limit);
    // Biases stay zero.
  }
  return model;
}

ForecastOutput forward_rollout(const ModelInstance& model,
                               const std::vector<Pose>& observed_history,
                               double dt_s, int horizon) {
  RolloutData rd;
  rollout_forward(model, observed_history, dt_s, horizon, rd);
  return collect_output(model, rd);
}

double cost_model_latency(const Genome& g, const SearchSpaceSpec& space) {
  ModelShape shape;
  shape.history_len = kCostModelHistoryLen;
  shape.encoder_width = kDefaultEncoderWidth;
  shape.k_hypotheses = kCostModelHypotheses;
  const ArchitecturePlan plan = decode_genome(g, space, shape);
  const long long passes =
      1 + static_cast<long long>(kCostModelHypotheses) * (kCostModelHorizon - 1);
  const double total_macs = static_cast<double>(plan.macs_per_pass * passes);
  return total_macs / 1e9 + 1e-5 * plan.layer_count;
}

double measure_latency(const ModelInstance& model, int repetitions, int warmup,
                       int horizon) {
  if (repetitions < 1) throw InvalidParams("latency repetitions must be >= 1");
  if (warmup < 0) throw InvalidParams("latency warmup must be >= 0");
  const int h_len = model.plan.shape.history_len;
  std::vector<Pose> history(h_len);
  for (int j = 0; j < h_len; ++j) {
    const double t = (j - (h_len - 1)) * 0.5;
    history[j] = Pose{2.0 * t, 1.0 * t, 0.4636476090008061, 0.9};
  }
  double sink = 0.0;
  for (int i = 0; i < warmup; ++i)
    sink += forward_rollout(model, history, 0.5, horizon).detection_confidence;
  std::vector<double> times(repetitions);
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink += forward_rollout(model, history, 0.5, horizon).detection_confidence;
    const auto t1 = std::chrono::steady_clock::now();
    times[i] = std::chrono::duration<double>(t1 - t0).count();
  }
  // Defeats dead-code elimination of the timed calls.
  static volatile double latency_sink;
  latency_sink = sink;
  (void)latency_sink;
  std::sort(times.begin(), times.end());
  const int mid = repetitions / 2;
  return repetitions % 2 == 1 ? times[mid]
                              : 0.5 * (times[mid - 1] + times[mid]);
}

std::vector<TrainingSample> build_training_samples(
    const std::vector<Scene>& scenes) {
  std::vector<TrainingSample> samples;
  for (const Scene& scene : scenes) {
    for (const AgentTrack& track : scene.tracks) {
      TrainingSample s;
      s.history = track.past_poses;
      s.dt_s = track.dt_s;
      s.is_agent = true;
      s.source_scene = scene.scene_id;
      s.future_centers.reserve(track.future_poses.size());
      for (const Pose& p : track.future_poses)
        s.future_centers.push_back({p.x, p.y});
      // Heading/z of the observed poses are noise-free (only x/y are
      // perturbed), so the final observed pose doubles as the state target.
      s.gt_heading = track.past_poses.back().heading;
      s.gt_z = track.past_poses.back().z;
      s.gt_length = track.length_m;
      s.gt_width = track.width_m;
      s.gt_height = track.height_m;
      samples.push_back(std::move(s));
    }
    const int h_len = scene.tracks.empty()
                          ? kCostModelHistoryLen
                          : static_cast<int>(scene.tracks[0].past_poses.size());
    const double dt = scene.tracks.empty() ? 0.5 : scene.tracks[0].dt_s;
    for (std::size_t ci = 0; ci < scene.clutter.size(); ++ci) {
      TrainingSample s;
      s.history = clutter_pseudo_history(scene, static_cast<int>(ci), h_len);
      s.dt_s = dt;
      s.is_agent = false;
      s.source_scene = scene.scene_id;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidParams("train epochs must be >= 0");
  if (!std::isfinite(learning_rate) || learning_rate <= 0.0)
    throw InvalidParams("train learning_rate must be finite and > 0");
  if (batch_size < 1) throw InvalidParams("train batch_size must be >= 1");
  if (beta1 < 0.0 || beta1 >= 1.0)
    throw InvalidParams("train beta1 must lie in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0)
    throw InvalidParams("train beta2 must lie in [0, 1)");
  if (!std::isfinite(epsilon) || epsilon <= 0.0)
    throw InvalidParams("train epsilon must be finite and > 0");
}

double loss_and_gradient(const ModelInstance& model,
                         const std::vector<TrainingSample>& samples,
                         std::vector<double>* grad) {
  std::vector<const TrainingSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const TrainingSample& s : samples) ptrs.push_back(&s);
  return batch_loss_and_grad(model, ptrs, grad);
}

TrainReport train(ModelInstance& model, const std::vector<Scene>& scenes,
                  const TrainConfig& cfg) {
  cfg.validate();
  const std::vector<TrainingSample> samples = build_training_samples(scenes);
  if (samples.empty())
    throw InvalidParams("training requires at least one sample");

  const std::size_t n_params = model.params.size();
  std::vector<double> grad(n_params, 0.0);
  std::vector<double> moment1(n_params, 0.0);
  std::vector<double> moment2(n_params, 0.0);

  TrainReport report;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j = rng.uniform_index(i + 1);
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch_index = 0; start < order.size();
         start += cfg.batch_size, ++batch_index) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const TrainingSample*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i)
        batch.push_back(&samples[order[i]]);

      const double loss = batch_loss_and_grad(model, batch, &grad);
      bool finite = std::isfinite(loss);
      for (std::size_t i = 0; finite && i < n_params; ++i)
        finite = std::isfinite(grad[i]);
      if (!finite) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "non-finite loss or gradient at epoch %d, batch %zu",
                      epoch, batch_index);
        throw NonFiniteLoss(buf);
      }

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, step);
      const double bc2 = 1.0 - std::pow(cfg.beta2, step);
      for (std::size_t i = 0; i < n_params; ++i) {
        moment1[i] = cfg.beta1 * moment1[i] + (1.0 - cfg.beta1) * grad[i];
        moment2[i] =
            cfg.beta2 * moment2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = moment1[i] / bc1;
        const double v_hat = moment2[i] / bc2;
        model.params[i] -=
            cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
      epoch_loss += loss * static_cast<double>(end - start);
    }
    report.epoch_losses.push_back(epoch_loss /
                                  static_cast<double>(samples.size()));
  }
  report.updates = step;
  return report;
}

std::vector<Detection> predict_scenes(const ModelInstance& model,
                                      const std::vector<Scene>& scenes,
                                      int horizon) {
  std::vector<Detection> detections;
  const int h_len = model.plan.shape.history_len;
  auto emit = [&](const std::vector<Pose>& history, double dt_s, int si) {
    const ForecastOutput out = forward_rollout(model, history, dt_s, horizon);
    Detection det;
    det.center = {out.state.x, out.state.y};
    det.confidence = out.detection_confidence;
    det.source_scene = si;
    det.forecasts.reserve(out.hypotheses.size());
    for (const ForecastHypothesis& h : out.hypotheses) det.forecasts.push_back(h);
    std::stable_sort(det.forecasts.begin(), det.forecasts.end(),
                     [](const ForecastHypothesis& a, const ForecastHypothesis& b) {
                       return a.confidence > b.confidence;
                     });
    detections.push_back(std::move(det));
  };
  for (const Scene& scene : scenes) {
    for (const AgentTrack& track : scene.tracks)
      emit(track.past_poses, track.dt_s, scene.scene_id);
    const double dt = scene.tracks.empty() ? 0.5 : scene.tracks[0].dt_s;
    for (std::size_t ci = 0; ci < scene.clutter.size(); ++ci)
      emit(clutter_pseudo_history(scene, static_cast<int>(ci), h_len), dt,
           scene.scene_id);
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.confidence > b.confidence;
                   });
  return detections;
}

CandidateEvaluation evaluate_candidate_full(const Genome& g,
                                            const SearchSpaceSpec& space,
                                            const Dataset& dataset,
                                            const EvalConfig& cfg) {
  cfg.train.validate();
  if (cfg.k_hypotheses < 1)
    throw InvalidParams("evaluation k_hypotheses must be >= 1");
  if (!std::isfinite(cfg.match_threshold_m) || cfg.match_threshold_m <= 0.0)
    throw InvalidParams("evaluation match_threshold_m must be > 0");

  ModelShape shape;
  shape.history_len = dataset.config.history_len;
  shape.encoder_width = kDefaultEncoderWidth;
  shape.k_hypotheses = cfg.k_hypotheses;

  const std::uint64_t init_seed = mix_seed(cfg.model_seed, GenomeHash{}(g));
  ModelInstance model = instantiate(g, space, shape, init_seed);

  const std::vector<Scene>& train_scenes =
      cfg.full_split ? dataset.splits.train : dataset.splits.mini_train;
  const std::vector<Scene>& val_scenes =
      cfg.full_split ? dataset.splits.val : dataset.splits.mini_val;

  CandidateEvaluation result;
  result.train_report = train(model, train_scenes, cfg.train);
  const std::vector<Detection> detections =
      predict_scenes(model, val_scenes, dataset.config.horizon);
  result.report = forecasting_report(detections, val_scenes, cfg.k_hypotheses,
                                     cfg.match_threshold_m);

  result.metrics.latency_s =
      cfg.deterministic_latency
          ? cost_model_latency(g, space)
          : measure_latency(model, cfg.latency_repetitions, cfg.latency_warmup,
                            dataset.config.horizon);
  result.metrics.map_f = result.report.map_f;
  result.metrics.ade_m = result.report.ade_m;
  result.metrics.fde_m = result.report.fde_m;
  result.metrics.map_det = result.report.map_det;
  result.metrics.validate();
  result.model = std::move(model);
  return result;
}

CandidateMetrics evaluate_candidate(const Genome& g,
                                    const SearchSpaceSpec& space,
                                    const Dataset& dataset,
                                    const EvalConfig& cfg) {
  return evaluate_candidate_full(g, space, dataset, cfg).metrics;
}

// ---------------------------------------------------------------------------
// Model serialization: one JSON header line, then raw little-endian float64.

static_assert(std::endian::native == std::endian::little,
              "model files assume a little-endian host");

void save_model(const ModelInstance& model, const std::string& path) {
  json header{{"format", "tnmodel"},
              {"version", 1},
              {"genome", serialize(model.genome)},
              {"history_len", model.plan.shape.history_len},
              {"encoder_width", model.plan.shape.encoder_width},
              {"k_hypotheses", model.plan.shape.k_hypotheses},
              {"parameter_count", model.params.size()}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string head = header.dump();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(model.params.data()),
            static_cast<std::streamsize>(model.params.size() * sizeof(double)));
  if (!out) throw IoError("failed writing model file '" + path + "'");
}

ModelInstance load_model(const std::string& path,
                         const SearchSpaceSpec& space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::string head;
  if (!std::getline(in, head))
    throw FormatError("model file '" + path + "' has no header line");

  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw FormatError("model header is not valid JSON: " +
                      std::string(e.what()));
  }
  try {
    if (header.at("format").get<std::string>() != "tnmodel")
      throw FormatError("model header format key is not 'tnmodel'");
    if (header.at("version").get<int>() != 1)
      throw FormatError("unsupported model version " +
                        header.at("version").dump());
    ModelShape shape;
    shape.history_len = header.at("history_len").get<int>();
    shape.encoder_width = header.at("encoder_width").get<int>();
    shape.k_hypotheses = header.at("k_hypotheses").get<int>();
    const Genome g =
        deserialize(header.at("genome").get<std::string>(), space);

    ModelInstance model;
    model.genome = g;
    model.plan = decode_genome(g, space, shape);
    const auto count = header.at("parameter_count").get<std::size_t>();
    if (count != static_cast<std::size_t>(model.plan.parameter_count)) {
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "model header declares %zu parameters, plan needs %d",
                    count, model.plan.parameter_count);
      throw FormatError(buf);
    }
    model.params.resize(count);
    in.read(reinterpret_cast<char*>(model.params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
      throw FormatError("model file '" + path + "' is truncated");
    if (in.peek() != std::ifstream::traits_type::eof())
      throw FormatError("model file '" + path + "' has trailing bytes");
    return model;
  } catch (const json::exception& e) {
    throw FormatError("model header is missing fields: " +
                      std::string(e.what()));
  }
}

}  // namespace trajnas
