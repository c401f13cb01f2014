#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "trajnas/energy.hpp"
#include "trajnas/errors.hpp"
#include "trajnas/genome.hpp"
#include "trajnas/surrogate.hpp"

using namespace trajnas;

namespace {

// Ten genes, 2^6 = 64 genomes: a decodable space small enough to sweep by
// hand. Head depth varies per head; everything else is broadcast or fixed.
SearchSpaceSpec ten_gene_space() {
  SearchSpaceSpec space;
  space.name = "sep10";
  space.cardinalities = {1, 2, 1, 2, 2, 2, 2, 2, 1, 1};
  space.segments = {
      {SegmentKind::kTrunkDepth, 0, 1},   {SegmentKind::kTrunkBlockType, 1, 2},
      {SegmentKind::kTrunkWidth, 2, 3},   {SegmentKind::kHeadDepth, 3, 8},
      {SegmentKind::kHeadWidth, 8, 9},    {SegmentKind::kHeadSharedStem, 9, 10},
  };
  space.validate();
  return space;
}

// All-binary variant for the 2^10 brute-force definitional check.
SearchSpaceSpec binary_ten_space() {
  SearchSpaceSpec space;
  space.name = "bin10";
  space.cardinalities = std::vector<int>(10, 2);
  space.segments = {
      {SegmentKind::kTrunkDepth, 0, 1},   {SegmentKind::kTrunkBlockType, 1, 2},
      {SegmentKind::kTrunkWidth, 2, 3},   {SegmentKind::kHeadDepth, 3, 8},
      {SegmentKind::kHeadWidth, 8, 9},    {SegmentKind::kHeadSharedStem, 9, 10},
  };
  space.validate();
  return space;
}

std::vector<Genome> all_genomes(const SearchSpaceSpec& space) {
  std::vector<Genome> out;
  Genome g;
  g.space_id = space.name;
  g.genes.assign(space.num_genes(), 0);
  while (true) {
    out.push_back(g);
    int pos = space.num_genes() - 1;
    while (pos >= 0) {
      if (++g.genes[pos] < space.cardinalities[pos]) break;
      g.genes[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return out;
}

}  // namespace

TEST_CASE("surrogate evaluation is deterministic") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const SurrogateModel rebuilt = build_surrogate(space, SurrogateSpec{});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Genome g = random_genome(space, seed);
    const CandidateMetrics a = surrogate_evaluate(model, g);
    const CandidateMetrics b = surrogate_evaluate(model, g);
    const CandidateMetrics c = surrogate_evaluate(rebuilt, g);
    CHECK(a.latency_s == b.latency_s);
    CHECK(a.map_f == b.map_f);
    CHECK(a.map_det == b.map_det);
    CHECK(a.ade_m == b.ade_m);
    CHECK(a.fde_m == b.fde_m);
    CHECK(a.map_f == c.map_f);
    CHECK(a.ade_m == c.ade_m);
  }
}

TEST_CASE("pinned evaluation fixture") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const Genome g = random_genome(space, 3);
  REQUIRE(serialize(g) == "test18:0,1,1,1,1,1,1,1,0,1,0,0,1,0,0,1,1,0");
  const CandidateMetrics m = surrogate_evaluate(model, g);
  CHECK(m.latency_s == doctest::Approx(0.000457088).epsilon(1e-6));
  CHECK(m.map_f == doctest::Approx(0.94618070154857625).epsilon(1e-12));
  CHECK(m.map_det == doctest::Approx(0.94859117944782267).epsilon(1e-12));
  CHECK(m.ade_m == doctest::Approx(0.12089406147599549).epsilon(1e-12));
  CHECK(m.fde_m == doctest::Approx(0.2176093106567919).epsilon(1e-12));
  CHECK(energy(m, EnergyWeights{}) ==
        doctest::Approx(7.8355043241803507e-05).epsilon(1e-12));
}

TEST_CASE("different surrogate seeds give different landscapes") {
  const SearchSpaceSpec space = enumerable_test_space();
  SurrogateSpec a_spec;
  a_spec.seed = 1;
  SurrogateSpec b_spec;
  b_spec.seed = 2;
  const SurrogateModel a = build_surrogate(space, a_spec);
  const SurrogateModel b = build_surrogate(space, b_spec);
  const Genome g = random_genome(space, 5);
  CHECK(surrogate_evaluate(a, g).map_f != surrogate_evaluate(b, g).map_f);
}

TEST_CASE("spec validation") {
  SurrogateSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.ruggedness = -0.1;
  CHECK_THROWS_AS(spec.validate(), InvalidParams);
  spec.ruggedness = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(spec.validate(), InvalidParams);
  spec.ruggedness = 0.0;
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("genomes from another space are rejected") {
  const SurrogateModel model =
      build_surrogate(enumerable_test_space(), SurrogateSpec{});
  const Genome foreign = random_genome(ten_gene_space(), 1);
  CHECK_THROWS_AS(surrogate_evaluate(model, foreign), SpaceMismatch);
}

TEST_CASE("fde is exactly 1.8 times ade") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CandidateMetrics m =
        surrogate_evaluate(model, random_genome(space, seed));
    CHECK(m.fde_m == 1.8 * m.ade_m);
  }
}

TEST_CASE("metric invariants hold across the whole enumerable space") {
  const SearchSpaceSpec space = ten_gene_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  for (const Genome& g : all_genomes(space)) {
    const CandidateMetrics m = surrogate_evaluate(model, g);
    CHECK_NOTHROW(m.validate());
    CHECK(m.map_f >= 0.05);
    CHECK(m.map_f <= 0.95);
    // Detection shares the quality score with a +1 shift, so it always
    // upper-bounds forecasting.
    CHECK(m.map_det > m.map_f);
    CHECK(m.ade_m > 0.0);
    CHECK(m.latency_s > 0.0);
  }
}

TEST_CASE("ruggedness zero makes the score a per-gene sum") {
  const SearchSpaceSpec space = enumerable_test_space();
  SurrogateSpec spec;
  spec.ruggedness = 0.0;
  const SurrogateModel model = build_surrogate(space, spec);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Genome g = random_genome(space, seed);
    double sum = 0.0;
    for (int i = 0; i < space.num_genes(); ++i)
      sum += model.w1[i][g.genes[i]];
    CHECK(model.score(g) == doctest::Approx(sum).epsilon(1e-15));
  }
}

TEST_CASE("greedy gene-wise minimization attains the optimum at ruggedness 0") {
  const SearchSpaceSpec space = ten_gene_space();
  SurrogateSpec spec;
  spec.ruggedness = 0.0;
  const SurrogateModel model = build_surrogate(space, spec);
  const EnergyWeights weights;
  const OptimumResult optimum = brute_force_optimum(model, weights);

  Genome g;
  g.space_id = space.name;
  g.genes.assign(space.num_genes(), 0);
  bool changed = true;
  int sweeps = 0;
  while (changed && sweeps < 20) {
    changed = false;
    ++sweeps;
    for (int i = 0; i < space.num_genes(); ++i) {
      int best_v = g.genes[i];
      double best_e = std::numeric_limits<double>::infinity();
      for (int v = 0; v < space.cardinalities[i]; ++v) {
        g.genes[i] = v;
        const double e = energy(surrogate_evaluate(model, g), weights);
        if (e < best_e) {
          best_e = e;
          best_v = v;
        }
      }
      if (g.genes[i] != best_v) changed = true;
      g.genes[i] = best_v;
    }
  }
  CHECK(g == optimum.genome);
}

TEST_CASE("brute force equals an explicit scan of all 1024 binary genomes") {
  const SearchSpaceSpec space = binary_ten_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const EnergyWeights weights;
  const OptimumResult optimum = brute_force_optimum(model, weights);

  const std::vector<Genome> genomes = all_genomes(space);
  REQUIRE(genomes.size() == 1024);
  double min_energy = std::numeric_limits<double>::infinity();
  Genome argmin;
  for (const Genome& g : genomes) {
    const double e = energy(surrogate_evaluate(model, g), weights);
    if (e < min_energy) {
      min_energy = e;
      argmin = g;
    }
  }
  CHECK(optimum.energy == min_energy);
  CHECK(optimum.genome == argmin);
  CHECK(energy(optimum.metrics, weights) == optimum.energy);
}

TEST_CASE("ties break to the lexicographically first genome") {
  const SearchSpaceSpec space = binary_ten_space();
  CandidateMetrics constant;
  constant.latency_s = 0.01;
  constant.map_f = 0.5;
  constant.ade_m = 1.0;
  constant.fde_m = 1.8;
  constant.map_det = 0.6;
  const OptimumResult optimum = brute_force_optimum(
      space, [&constant](const Genome&) { return constant; }, EnergyWeights{});
  CHECK(optimum.genome.genes == std::vector<int>(10, 0));
}

TEST_CASE("the optimum genome is invariant to latency scaling") {
  const SearchSpaceSpec space = ten_gene_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const EnergyWeights weights;
  const OptimumResult base = brute_force_optimum(model, weights);
  for (double c : {7.0, 0.01}) {
    const OptimumResult scaled = brute_force_optimum(
        space,
        [&model, c](const Genome& g) {
          CandidateMetrics m = surrogate_evaluate(model, g);
          m.latency_s *= c;
          return m;
        },
        weights);
    CHECK(scaled.genome == base.genome);
    CHECK(scaled.energy == doctest::Approx(c * base.energy).epsilon(1e-12));
  }
}

TEST_CASE("oversized spaces are rejected") {
  const EnergyWeights weights;
  const SurrogateModel desk =
      build_surrogate(default_space(SpaceScale::kDesk), SurrogateSpec{});
  CHECK_THROWS_AS(brute_force_optimum(desk, weights), SpaceTooLarge);
  // The paper space cannot even report an exact size.
  const SearchSpaceSpec paper = default_space(SpaceScale::kPaper);
  CHECK_THROWS_AS(
      brute_force_optimum(
          paper,
          [](const Genome&) -> CandidateMetrics {
            throw std::runtime_error("must not be called");
          },
          weights),
      SpaceTooLarge);
}

TEST_CASE("the enumerable space optimum lower-bounds every evaluation") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const EnergyWeights weights;
  const OptimumResult optimum = brute_force_optimum(model, weights);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Genome g = random_genome(space, seed);
    CHECK(energy(surrogate_evaluate(model, g), weights) >= optimum.energy);
  }
}
