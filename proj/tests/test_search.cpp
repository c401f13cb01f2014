#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajnas/energy.hpp"
#include "trajnas/errors.hpp"
#include "trajnas/genome.hpp"
#include "trajnas/rng.hpp"
#include "trajnas/search.hpp"
#include "trajnas/surrogate.hpp"

using namespace trajnas;

namespace {

CandidateMetrics unit_metrics(double latency) {
  CandidateMetrics m;
  m.latency_s = latency;
  m.map_f = 1.0;
  m.ade_m = 1.0;
  m.fde_m = 1.0;
  m.map_det = 1.0;
  return m;
}

// With unit quality metrics the energy equals the latency exactly, so an
// evaluator can paint an arbitrary positive landscape through latency_s.
Evaluator landscape(double (*f)(const Genome&)) {
  return [f](const Genome& g) { return unit_metrics(f(g)); };
}

SearchSpaceSpec toy_space() {
  SearchSpaceSpec space;
  space.name = "toy";
  space.cardinalities = std::vector<int>(8, 3);
  space.segments = {{SegmentKind::kHeadWidth, 0, 8}};
  space.validate();
  return space;
}

SearchSpaceSpec bit_space() {
  SearchSpaceSpec space;
  space.name = "bit";
  space.cardinalities = {2};
  space.segments = {{SegmentKind::kHeadSharedStem, 0, 1}};
  space.validate();
  return space;
}

// Two basins over genes (g0 in {0,1}, g1 in {0..7}): the wide basin g0=0
// bottoms out at (0,4) with energy 2, the narrow one at (1,2) with energy 1.
// Every Hamming-1 neighbour of (0,4) is worse, so hill climbing that enters
// the wide basin can only leave through a restart.
SearchSpaceSpec basin_space() {
  SearchSpaceSpec space;
  space.name = "basins";
  space.cardinalities = {2, 8};
  space.segments = {{SegmentKind::kTrunkDepth, 0, 1},
                    {SegmentKind::kHeadWidth, 1, 2}};
  space.validate();
  return space;
}

double basin_energy(const Genome& g) {
  if (g.genes[0] == 0) return 2.0 + 0.1 * std::abs(g.genes[1] - 4);
  return 1.0 + 2.0 * std::abs(g.genes[1] - 2);
}

double nonzero_count_energy(const Genome& g) {
  int nonzero = 0;
  for (int v : g.genes)
    if (v != 0) ++nonzero;
  return 1.0 + nonzero;
}

bool same_record(const TraceRecord& a, const TraceRecord& b) {
  return a.iteration == b.iteration && a.genome == b.genome &&
         a.energy == b.energy && a.temperature == b.temperature &&
         a.accepted == b.accepted && a.best_energy == b.best_energy &&
         a.cached == b.cached;
}

void check_common_invariants(const SearchResult& r, const SearchConfig& cfg) {
  REQUIRE(r.trace.size() == static_cast<std::size_t>(cfg.iterations) + 1);
  CHECK(r.cache_lookups == cfg.iterations + 1);
  CHECK(r.evaluations_spent <= cfg.iterations + 1);
  CHECK(r.evaluations_spent >= 1);
  double best = r.trace.front().energy;
  double min_energy = best;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const TraceRecord& rec = r.trace[i];
    CHECK(rec.iteration == static_cast<int>(i));
    min_energy = std::min(min_energy, rec.energy);
    if (i > 0) CHECK(rec.best_energy <= r.trace[i - 1].best_energy);
    CHECK(rec.best_energy == min_energy);
  }
  CHECK(r.best_energy == min_energy);
  CHECK(r.best_energy == r.trace.back().best_energy);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

TEST_CASE("acceptance_probability closed-form values") {
  CHECK(acceptance_probability(-0.01, 100.0) == 1.0);
  CHECK(acceptance_probability(0.0, 5.0) == 1.0);
  CHECK(acceptance_probability(2.5, 2.5) ==
        doctest::Approx(0.3678794).epsilon(1e-7));
  CHECK(acceptance_probability(1.0, 10.0) ==
        doctest::Approx(std::exp(-0.1)).epsilon(1e-12));
}

TEST_CASE("acceptance_probability rejects bad temperatures") {
  CHECK_THROWS_AS(acceptance_probability(1.0, 0.0), InvalidTemperature);
  CHECK_THROWS_AS(acceptance_probability(1.0, -2.0), InvalidTemperature);
  CHECK_THROWS_AS(acceptance_probability(
                      1.0, std::numeric_limits<double>::infinity()),
                  InvalidTemperature);
  CHECK_THROWS_AS(acceptance_probability(
                      std::numeric_limits<double>::quiet_NaN(), 1.0),
                  InvalidParams);
}

TEST_CASE("empirical acceptance rate matches the Metropolis rule") {
  const struct {
    double delta, temperature;
  } grid[] = {{1.0, 10.0}, {5.0, 5.0}, {2.5, 2.5}};
  for (const auto& point : grid) {
    const double p = acceptance_probability(point.delta, point.temperature);
    Rng rng(mix_seed(2024, static_cast<std::uint64_t>(point.delta * 100)));
    int accepted = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
      if (rng.uniform_double() < p) ++accepted;
    const double rate = static_cast<double>(accepted) / trials;
    CHECK(std::fabs(rate - std::exp(-point.delta / point.temperature)) < 0.03);
  }
  // Non-positive deltas are always accepted.
  Rng rng(77);
  int accepted = 0;
  for (int t = 0; t < 10000; ++t)
    if (rng.uniform_double() < acceptance_probability(-0.5, 3.0)) ++accepted;
  CHECK(accepted == 10000);
}

TEST_CASE("temperature schedule hits both endpoints") {
  const SearchConfig cfg;  // 2500 / 2.5 over 108 iterations
  CHECK(temperature_at(0, cfg) == 2500.0);
  CHECK(std::fabs(temperature_at(cfg.iterations, cfg) - 2.5) / 2.5 < 1e-9);
  CHECK(temperature_at(54, cfg) ==
        doctest::Approx(std::sqrt(2500.0 * 2.5)).epsilon(1e-9));
  CHECK(temperature_at(54, cfg) == doctest::Approx(79.0569).epsilon(1e-5));
  for (int k = 1; k <= cfg.iterations; ++k)
    CHECK(temperature_at(k, cfg) < temperature_at(k - 1, cfg));
  CHECK_THROWS_AS(temperature_at(-1, cfg), InvalidParams);
  CHECK_THROWS_AS(temperature_at(cfg.iterations + 1, cfg), InvalidParams);
}

TEST_CASE("search config validation") {
  SearchConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SearchConfig swapped = cfg;
  swapped.t_max = 1.0;
  swapped.t_min = 10.0;
  CHECK_THROWS_AS(swapped.validate(), InvalidTemperature);
  SearchConfig zero_temp = cfg;
  zero_temp.t_min = 0.0;
  CHECK_THROWS_AS(zero_temp.validate(), InvalidTemperature);
  SearchConfig no_iters = cfg;
  no_iters.iterations = 0;
  CHECK_THROWS_AS(no_iters.validate(), InvalidParams);
  SearchConfig no_patience = cfg;
  no_patience.local_restart_patience = 0;
  CHECK_THROWS_AS(no_patience.validate(), InvalidParams);
}

TEST_CASE("algo names round-trip") {
  for (SearchAlgo algo :
       {SearchAlgo::kMosa, SearchAlgo::kRandom, SearchAlgo::kLocal}) {
    const auto back = search_algo_from_name(search_algo_name(algo));
    REQUIRE(back.has_value());
    CHECK(*back == algo);
  }
  CHECK(!search_algo_from_name("gradient").has_value());
}

TEST_CASE("evaluation cache memoizes by genome") {
  const SearchSpaceSpec space = toy_space();
  int invocations = 0;
  EvaluationCache cache([&invocations](const Genome&) {
    ++invocations;
    return unit_metrics(0.5);
  });
  const Genome a = random_genome(space, 1);
  const Genome b = random_genome(space, 2);
  REQUIRE(!(a == b));

  bool cached = true;
  cache.lookup(a, &cached);
  CHECK(!cached);
  cache.lookup(a, &cached);
  CHECK(cached);
  CHECK(invocations == 1);
  cache.lookup(b, &cached);
  CHECK(!cached);
  CHECK(invocations == 2);
  CHECK(cache.fresh_evaluations() == 2);
  CHECK(cache.total_lookups() == 3);
}

TEST_CASE("evaluation cache wraps evaluator failures") {
  EvaluationCache cache(
      [](const Genome&) -> CandidateMetrics { throw std::runtime_error("boom"); });
  const Genome g = random_genome(toy_space(), 3);
  try {
    cache.lookup(g);
    FAIL("expected EvaluatorError");
  } catch (const EvaluatorError& e) {
    const std::string message = e.what();
    CHECK(message.find(serialize(g)) != std::string::npos);
    CHECK(message.find("boom") != std::string::npos);
  }
}

TEST_CASE("search propagates evaluator failures with the genome text") {
  SearchConfig cfg;
  cfg.iterations = 4;
  try {
    mosa_search(toy_space(),
                [](const Genome&) -> CandidateMetrics {
                  throw std::runtime_error("no metrics");
                },
                EnergyWeights{}, cfg);
    FAIL("expected EvaluatorError");
  } catch (const EvaluatorError& e) {
    CHECK(std::string(e.what()).find("toy:") != std::string::npos);
  }
}

TEST_CASE("constant evaluator accepts every proposal") {
  SearchConfig cfg;
  cfg.iterations = 40;
  cfg.seed = 9;
  const SearchResult r = mosa_search(
      toy_space(), [](const Genome&) { return unit_metrics(0.25); },
      EnergyWeights{}, cfg);
  check_common_invariants(r, cfg);
  CHECK(r.best_energy == doctest::Approx(0.25).epsilon(1e-15));
  for (const TraceRecord& rec : r.trace) CHECK(rec.accepted);
}

TEST_CASE("searches are deterministic in the seed") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const Evaluator eval = [&model](const Genome& g) {
    return surrogate_evaluate(model, g);
  };
  SearchConfig cfg;
  cfg.iterations = 60;
  cfg.seed = 4;
  for (SearchAlgo algo :
       {SearchAlgo::kMosa, SearchAlgo::kRandom, SearchAlgo::kLocal}) {
    const SearchResult a = run_search(algo, space, eval, EnergyWeights{}, cfg);
    const SearchResult b = run_search(algo, space, eval, EnergyWeights{}, cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i)
      CHECK(same_record(a.trace[i], b.trace[i]));
    CHECK(a.best_genome == b.best_genome);
    CHECK(a.best_energy == b.best_energy);
    check_common_invariants(a, cfg);
  }
}

TEST_CASE("equal seeds start every algorithm from the same genome") {
  const SearchSpaceSpec space = toy_space();
  const Evaluator eval = landscape(nonzero_count_energy);
  SearchConfig cfg;
  cfg.iterations = 3;
  cfg.seed = 21;
  const SearchResult m = mosa_search(space, eval, EnergyWeights{}, cfg);
  const SearchResult r = random_search(space, eval, EnergyWeights{}, cfg);
  const SearchResult l = local_search(space, eval, EnergyWeights{}, cfg);
  CHECK(m.trace[0].genome == r.trace[0].genome);
  CHECK(m.trace[0].genome == l.trace[0].genome);
}

TEST_CASE("local search descends the nonzero-count landscape to its optimum") {
  const SearchSpaceSpec space = toy_space();
  const Evaluator eval = landscape(nonzero_count_energy);
  SearchConfig cfg;
  cfg.iterations = 500;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    cfg.seed = seed;
    const SearchResult r = local_search(space, eval, EnergyWeights{}, cfg);
    check_common_invariants(r, cfg);
    CHECK(r.best_energy == doctest::Approx(1.0).epsilon(1e-15));
    for (int v : r.best_genome.genes) CHECK(v == 0);
  }
}

TEST_CASE("local search stalls in the shallow basin until restart") {
  const SearchSpaceSpec space = basin_space();
  const Evaluator eval = landscape(basin_energy);
  SearchConfig cfg;
  cfg.iterations = 300;
  //

  // Pick a seed whose starting genome lies in the wide basin (gene 0 == 0).
  cfg.seed = 1;
  while (random_genome(space, mix_seed(cfg.seed, 1)).genes[0] != 0) ++cfg.seed;

  const SearchResult r = local_search(space, eval, EnergyWeights{}, cfg);
  check_common_invariants(r, cfg);

  // The run must first bottom out at the wide basin's floor (energy 2)...
  std::size_t floor_hit = r.trace.size();
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    if (r.trace[i].best_energy == 2.0) {
      floor_hit = i;
      break;
    }
  }
  REQUIRE(floor_hit < r.trace.size());
  // ...stall there for at least the restart patience (no Hamming-1 neighbour
  // of the floor improves, so nothing can be accepted)...
  for (std::size_t i = floor_hit + 1;
       i <= floor_hit + static_cast<std::size_t>(cfg.local_restart_patience) &&
       i < r.trace.size();
       ++i) {
    CHECK(r.trace[i].best_energy == 2.0);
    CHECK(!r.trace[i].accepted);
  }
  // ...and only reach the global optimum afterwards, via a restart.
  CHECK(r.best_energy == doctest::Approx(1.0).epsilon(1e-15));
  std::size_t global_hit = 0;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    if (r.trace[i].best_energy == 1.0) {
      global_hit = i;
      break;
    }
  }
  CHECK(global_hit >
        floor_hit + static_cast<std::size_t>(cfg.local_restart_patience));
}

TEST_CASE("frozen MOSA degenerates to local search until the first restart") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const Evaluator eval = [&model](const Genome& g) {
    return surrogate_evaluate(model, g);
  };
  SearchConfig cfg;
  cfg.iterations = 108;
  cfg.seed = 5;
  SearchConfig frozen = cfg;
  frozen.t_max = 1e-12;
  frozen.t_min = 1e-12;

  const SearchResult mosa = mosa_search(space, eval, EnergyWeights{}, frozen);
  const SearchResult local = local_search(space, eval, EnergyWeights{}, cfg);

  // Find where the two traces diverge (the first local-search restart).
  std::size_t divergence = mosa.trace.size();
  for (std::size_t i = 0; i < mosa.trace.size(); ++i) {
    if (!(mosa.trace[i].genome == local.trace[i].genome)) {
      divergence = i;
      break;
    }
  }
  // The prefix must be non-trivial and behaviourally identical.
  REQUIRE(divergence > static_cast<std::size_t>(cfg.local_restart_patience));
  for (std::size_t i = 0; i < divergence; ++i) {
    CHECK(mosa.trace[i].energy == local.trace[i].energy);
    CHECK(mosa.trace[i].accepted == local.trace[i].accepted);
    CHECK(mosa.trace[i].best_energy == local.trace[i].best_energy);
  }
  if (divergence < mosa.trace.size()) {
    // Divergence is explained by a restart: the ten local proposals before
    // it were all rejected, and the restart itself is unconditional.
    CHECK(local.trace[divergence].accepted);
    for (std::size_t i = divergence - cfg.local_restart_patience;
         i < divergence; ++i)
      CHECK(!local.trace[i].accepted);
  }
}

TEST_CASE("random search on a two-genome space exhausts the cache") {
  const SearchSpaceSpec space = bit_space();
  int invocations = 0;
  const Evaluator eval = [&invocations](const Genome& g) {
    ++invocations;
    return unit_metrics(g.genes[0] == 0 ? 1.0 : 2.0);
  };
  SearchConfig cfg;
  cfg.iterations = 50;
  cfg.seed = 3;
  const SearchResult r = random_search(space, eval, EnergyWeights{}, cfg);
  check_common_invariants(r, cfg);
  CHECK(invocations <= 2);
  CHECK(r.evaluations_spent == invocations);
  CHECK(r.cache_lookups == 51);
  CHECK(r.best_energy == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.best_genome.genes == std::vector<int>{0});
  // Everything after the first occurrence of each genome came from the cache.
  int fresh_records = 0;
  for (const TraceRecord& rec : r.trace)
    if (!rec.cached) ++fresh_records;
  CHECK(fresh_records == invocations);
}

TEST_CASE("searching an immutable space is rejected") {
  SearchSpaceSpec space;
  space.name = "fixed";
  space.cardinalities = {1, 1};
  space.segments = {{SegmentKind::kTrunkDepth, 0, 2}};
  SearchConfig cfg;
  cfg.iterations = 5;
  CHECK_THROWS_AS(
      random_search(space, landscape(nonzero_count_energy), EnergyWeights{},
                    cfg),
      InvalidParams);
}

TEST_CASE("budget parity across algorithms") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const Evaluator eval = [&model](const Genome& g) {
    return surrogate_evaluate(model, g);
  };
  SearchConfig cfg;
  cfg.iterations = 108;
  cfg.t_max = 1e-4;
  cfg.t_min = 1e-7;
  cfg.seed = 2;
  for (SearchAlgo algo :
       {SearchAlgo::kMosa, SearchAlgo::kRandom, SearchAlgo::kLocal}) {
    const SearchResult r = run_search(algo, space, eval, EnergyWeights{}, cfg);
    check_common_invariants(r, cfg);
    CHECK(r.cache_lookups == cfg.iterations + 1);
  }
}

TEST_CASE("algorithm ordering on the enumerable surrogate landscape") {
  const SearchSpaceSpec space = enumerable_test_space();
  const SurrogateModel model = build_surrogate(space, SurrogateSpec{});
  const Evaluator eval = [&model](const Genome& g) {
    return surrogate_evaluate(model, g);
  };
  const EnergyWeights weights;

  const OptimumResult optimum = brute_force_optimum(model, weights);
  CHECK(serialize(optimum.genome) ==
        "test18:0,0,0,0,1,0,1,0,0,0,0,0,0,0,1,0,0,1");
  CHECK(optimum.energy == doctest::Approx(4.301073e-5).epsilon(1e-5));

  SearchConfig cfg;
  cfg.iterations = 108;
  cfg.t_max = 1e-4;  // annealing window matched to the landscape's
  cfg.t_min = 1e-7;  // energy scale (deltas are around 1e-5)
  std::vector<double> mosa_best, random_best, local_best;
  int near_optimal = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cfg.seed = seed;
    const SearchResult m = mosa_search(space, eval, weights, cfg);
    const SearchResult r = random_search(space, eval, weights, cfg);
    const SearchResult l = local_search(space, eval, weights, cfg);
    mosa_best.push_back(m.best_energy);
    random_best.push_back(r.best_energy);
    local_best.push_back(l.best_energy);
    CHECK(m.best_energy >= optimum.energy);
    CHECK(r.best_energy >= optimum.energy);
    CHECK(l.best_energy >= optimum.energy);
    if (m.best_energy <= 1.15 * optimum.energy) ++near_optimal;
  }
  CHECK(median(mosa_best) < median(local_best));
  CHECK(median(mosa_best) < median(random_best));
  CHECK(near_optimal >= 8);
}

TEST_CASE("trace CSV format") {
  std::vector<TraceRecord> trace(2);
  trace[0].iteration = 0;
  trace[0].genome = Genome{"toy", {1, 0, 2, 0, 0, 0, 0, 0}};
  trace[0].energy = 0.000123456789;
  trace[0].temperature = 2500.0;
  trace[0].accepted = true;
  trace[0].best_energy = 0.000123456789;
  trace[0].cached = false;
  trace[1].iteration = 1;
  trace[1].genome = Genome{"toy", {1, 0, 2, 0, 0, 0, 0, 1}};
  trace[1].energy = 1.5;
  trace[1].temperature = 79.0569;
  trace[1].accepted = false;
  trace[1].best_energy = 0.000123456789;
  trace[1].cached = true;

  std::ostringstream out;
  write_trace_csv(out, trace);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "iteration,genome,energy,temperature,accepted,best_energy,cached");
  REQUIRE(std::getline(in, line));
  CHECK(line ==
        "0,\"toy:1,0,2,0,0,0,0,0\",0.000123457,2500,1,0.000123457,0");
  REQUIRE(std::getline(in, line));
  CHECK(line == "1,\"toy:1,0,2,0,0,0,0,1\",1.5,79.0569,0,0.000123457,1");
  CHECK(!std::getline(in, line));
}

TEST_CASE("format_csv_double uses six significant digits") {
  CHECK(format_csv_double(0.000123456789) == "0.000123457");
  CHECK(format_csv_double(2500.0) == "2500");
  CHECK(format_csv_double(1.0 / 3.0) == "0.333333");
}
