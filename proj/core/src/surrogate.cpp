#include "trajnas/surrogate.hpp"

#include <cmath>
#include <utility>

#include "trajnas/errors.hpp"
#include "trajnas/forecaster.hpp"
#include "trajnas/rng.hpp"

namespace trajnas {
namespace {

// Sub-stream tags under the surrogate seed, one per weight table.
constexpr std::uint64_t kMainStream = 1;
constexpr std::uint64_t kPairStream = 2;
constexpr std::uint64_t kProjectionMainStream = 3;
constexpr std::uint64_t kProjectionPairStream = 4;

double sigmoid(double s) {
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s))
                  : std::exp(s) / (1.0 + std::exp(s));
}

std::vector<std::vector<double>> draw_main_table(const SearchSpaceSpec& space,
                                                 std::uint64_t stream_seed,
                                                 double sigma) {
  Rng rng(stream_seed);
  std::vector<std::vector<double>> table(space.num_genes());
  for (int i = 0; i < space.num_genes(); ++i) {
    table[i].resize(space.cardinalities[i]);
    for (int v = 0; v < space.cardinalities[i]; ++v)
      table[i][v] = sigma * rng.normal();
  }
  return table;
}

std::vector<std::vector<std::vector<double>>> draw_pair_table(
    const SearchSpaceSpec& space, std::uint64_t stream_seed, double sigma) {
  Rng rng(stream_seed);
  std::vector<std::vector<std::vector<double>>> table;
  for (int i = 0; i < space.num_genes(); ++i) {
    for (int j = i + 1; j < space.num_genes(); ++j) {
      std::vector<std::vector<double>> cell(space.cardinalities[i]);
      for (int vi = 0; vi < space.cardinalities[i]; ++vi) {
        cell[vi].resize(space.cardinalities[j]);
        for (int vj = 0; vj < space.cardinalities[j]; ++vj)
          cell[vi][vj] = sigma * rng.normal();
      }
      table.push_back(std::move(cell));
    }
  }
  return table;
}

double combine(const Genome& g, const std::vector<std::vector<double>>& main_t,
               const std::vector<std::vector<std::vector<double>>>& pair_t,
               double ruggedness) {
  const int n = static_cast<int>(g.genes.size());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += main_t[i][g.genes[i]];
  if (ruggedness != 0.0) {
    double pair_acc = 0.0;
    std::size_t p = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j, ++p)
        pair_acc += pair_t[p][g.genes[i]][g.genes[j]];
    acc += ruggedness * pair_acc;
  }
  return acc;
}

}  // namespace

void SurrogateSpec::validate() const {
  if (!std::isfinite(ruggedness) || ruggedness < 0.0)
    throw InvalidParams("surrogate ruggedness must be finite and >= 0");
}

double SurrogateModel::score(const Genome& g) const {
  return combine(g, w1, w2, spec.ruggedness);
}

double SurrogateModel::projection(const Genome& g) const {
  return combine(g, u1, u2, spec.ruggedness);
}

SurrogateModel build_surrogate(const SearchSpaceSpec& space,
                               const SurrogateSpec& spec) {
  spec.validate();
  space.validate();
  SurrogateModel model;
  model.spec = spec;
  model.space = space;
  model.w1 = draw_main_table(space, mix_seed(spec.seed, kMainStream),
                             kSurrogateMainSigma);
  model.w2 = draw_pair_table(space, mix_seed(spec.seed, kPairStream),
                             kSurrogatePairSigma);
  model.u1 = draw_main_table(space, mix_seed(spec.seed, kProjectionMainStream),
                             kSurrogateMainSigma);
  model.u2 = draw_pair_table(space, mix_seed(spec.seed, kProjectionPairStream),
                             kSurrogatePairSigma);
  return model;
}

CandidateMetrics surrogate_evaluate(const SurrogateModel& model,
                                    const Genome& g) {
  validate_genome(g, model.space);
  const double s = model.score(g);
  const double u = model.projection(g);
  CandidateMetrics m;
  m.map_f = 0.05 + 0.90 * sigmoid(s);
  m.map_det = 0.05 + 0.90 * sigmoid(s + 1.0);
  m.ade_m = 0.2 + 2.0 * (1.0 - m.map_f) + 0.2 * std::tanh(u);
  m.fde_m = 1.8 * m.ade_m;
  m.latency_s = cost_model_latency(g, model.space);
  m.validate();
  return m;
}

OptimumResult brute_force_optimum(
    const SearchSpaceSpec& space,
    const std::function<CandidateMetrics(const Genome&)>& evaluator,
    const EnergyWeights& weights) {
  space.validate();
  weights.validate();
  const auto size = space.exact_size();
  if (!size.has_value() || *size > kBruteForceLimit) {
    throw SpaceTooLarge("space '" + space.name +
                        "' exceeds the exhaustive-scan limit of 2^22 genomes");
  }

  Genome current;
  current.space_id = space.name;
  current.genes.assign(space.num_genes(), 0);

  OptimumResult best;
  bool have_best = false;
  while (true) {
    const CandidateMetrics metrics = evaluator(current);
    const double e = energy(metrics, weights);
    if (!have_best || e < best.energy) {
      best.genome = current;
      best.energy = e;
      best.metrics = metrics;
      have_best = true;
    }
    // Lexicographic odometer, last gene fastest.
    int pos = space.num_genes() - 1;
    while (pos >= 0) {
      if (++current.genes[pos] < space.cardinalities[pos]) break;
      current.genes[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return best;
}

OptimumResult brute_force_optimum(const SurrogateModel& model,
                                  const EnergyWeights& weights) {
  return brute_force_optimum(
      model.space,
      [&model](const Genome& g) { return surrogate_evaluate(model, g); },
      weights);
}

}  // namespace trajnas
