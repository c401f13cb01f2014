#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "trajnas/energy.hpp"
#include "trajnas/genome.hpp"

namespace trajnas {

// Tunable synthetic landscape used by search experiments: smooth per-gene
// main effects plus pairwise interactions whose strength scales with
// `ruggedness` (0 = additively separable, larger = rockier).
struct SurrogateSpec {
  std::uint64_t seed = 1;
  double ruggedness = 0.5;

  void validate() const;  // InvalidParams on non-finite/negative ruggedness
};

inline constexpr double kSurrogateMainSigma = 0.5;
inline constexpr double kSurrogatePairSigma = 0.25;

// Frozen weight tables for one (space, spec) pair. Two independent scalar
// projections are drawn: S drives the quality metrics, U decorrelates the
// displacement errors from them.
struct SurrogateModel {
  SurrogateSpec spec;
  SearchSpaceSpec space;
  // w1[i][v]: main effect of gene i at value v. w2[p][vi][vj]: interaction of
  // the p-th gene pair (i<j, lexicographic). u1/u2 mirror them for U.
  std::vector<std::vector<double>> w1;
  std::vector<std::vector<std::vector<double>>> w2;
  std::vector<std::vector<double>> u1;
  std::vector<std::vector<std::vector<double>>> u2;

  double score(const Genome& g) const;       // S
  double projection(const Genome& g) const;  // U
};

SurrogateModel build_surrogate(const SearchSpaceSpec& space,
                               const SurrogateSpec& spec);

// Deterministic metrics: map_f = 0.05 + 0.90*sigmoid(S), map_det shares S
// with a +1.0 shift (so detection upper-bounds forecasting), ade couples to
// map_f with a U-driven wobble, fde = 1.8 * ade, and latency comes from the
// architecture cost model.
CandidateMetrics surrogate_evaluate(const SurrogateModel& model,
                                    const Genome& g);

struct OptimumResult {
  Genome genome;
  double energy = 0.0;
  CandidateMetrics metrics;
};

// Exhaustive scan limit: spaces up to 2^22 genomes.
inline constexpr std::uint64_t kBruteForceLimit = 1ull << 22;

// Enumerates the whole space in lexicographic gene order and returns the
// first genome attaining the minimum energy. Throws SpaceTooLarge beyond
// kBruteForceLimit. The evaluator sees every genome exactly once.
OptimumResult brute_force_optimum(
    const SearchSpaceSpec& space,
    const std::function<CandidateMetrics(const Genome&)>& evaluator,
    const EnergyWeights& weights);

OptimumResult brute_force_optimum(const SurrogateModel& model,
                                  const EnergyWeights& weights);

}  // namespace trajnas
