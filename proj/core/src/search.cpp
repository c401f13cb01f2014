#include "trajnas/search.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "trajnas/errors.hpp"
#include "trajnas/rng.hpp"

namespace trajnas {

namespace {

// Stream tags for deriving the independent RNG streams of one search run.
// Keeping move/accept streams separate makes proposal sequences identical
// across algorithms that share a seed, regardless of acceptance decisions.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kMoveStream = 2;
constexpr std::uint64_t kAcceptStream = 3;

}  // namespace

void SearchConfig::validate() const {
  if (!std::isfinite(t_max) || !std::isfinite(t_min) || t_min <= 0.0)
    throw InvalidTemperature("temperatures must be finite and > 0");
  if (t_max < t_min)
    throw InvalidTemperature("t_max (" + std::to_string(t_max) +
                             ") must be >= t_min (" + std::to_string(t_min) +
                             ")");
  if (iterations < 1) throw InvalidParams("iterations must be >= 1");
  if (local_restart_patience < 1)
    throw InvalidParams("local_restart_patience must be >= 1");
}

const char* search_algo_name(SearchAlgo algo) {
  switch (algo) {
    case SearchAlgo::kMosa:
      return "mosa";
    case SearchAlgo::kRandom:
      return "random";
    case SearchAlgo::kLocal:
      return "local";
  }
  return "unknown";
}

std::optional<SearchAlgo> search_algo_from_name(const std::string& name) {
  if (name == "mosa") return SearchAlgo::kMosa;
  if (name == "random") return SearchAlgo::kRandom;
  if (name == "local") return SearchAlgo::kLocal;
  return std::nullopt;
}

double acceptance_probability(double delta, double temperature) {
  if (!std::isfinite(temperature) || temperature <= 0.0)
    throw InvalidTemperature("temperature must be finite and > 0, got " +
                             std::to_string(temperature));
  if (!std::isfinite(delta))
    throw InvalidParams("energy delta must be finite");
  if (delta <= 0.0) return 1.0;
  return std::exp(-delta / temperature);
}

double temperature_at(int iteration, const SearchConfig& cfg) {
  cfg.validate();
  if (iteration < 0 || iteration > cfg.iterations)
    throw InvalidParams("iteration " + std::to_string(iteration) +
                        " outside schedule [0, " +
                        std::to_string(cfg.iterations) + "]");
  const double ratio = cfg.t_min / cfg.t_max;
  return cfg.t_max *
         std::pow(ratio, static_cast<double>(iteration) / cfg.iterations);
}

EvaluationCache::EvaluationCache(Evaluator evaluator)
    : evaluator_(std::move(evaluator)) {}

CandidateMetrics EvaluationCache::lookup(const Genome& g, bool* was_cached) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++lookups_;
    auto it = entries_.find(g);
    if (it != entries_.end()) {
      if (was_cached) *was_cached = true;
      return it->second;
    }
  }
  CandidateMetrics m;
  try {
    m = evaluator_(g);
  } catch (const std::exception& e) {
    throw EvaluatorError("evaluation failed for genome " + serialize(g) +
                         ": " + e.what());
  }
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = entries_.emplace(g, m);
  if (inserted) ++fresh_;
  if (was_cached) *was_cached = false;
  return it->second;
}

int EvaluationCache::fresh_evaluations() const {
  std::lock_guard<std::mutex> lock(mu_);
  return fresh_;
}

int EvaluationCache::total_lookups() const {
  std::lock_guard<std::mutex> lock(mu_);
  return lookups_;
}

namespace {

struct LoopState {
  EvaluationCache cache;
  EnergyWeights weights;
  SearchResult result;
  Genome current;
  double current_energy = 0.0;
  double best_energy = 0.0;

  LoopState(const Evaluator& eval, const EnergyWeights& w)
      : cache(eval), weights(w) {}

  // Evaluates g, appends a trace record and maintains the best-ever pick
  // (strict improvement, so the earliest best wins ties).
  double record(int iteration, const Genome& g, double temperature,
                bool accepted_hint, bool* out_cached) {
    bool cached = false;
    const CandidateMetrics m = cache.lookup(g, &cached);
    const double e = energy(m, weights);
    if (result.trace.empty() || e < best_energy) {
      best_energy = e;
      result.best_genome = g;
      result.best_metrics = m;
    }
    result.trace.push_back(TraceRecord{iteration, g, e, temperature,
                                       accepted_hint, best_energy, cached});
    if (out_cached) *out_cached = cached;
    return e;
  }

  void finish() {
    result.best_energy = best_energy;
    result.evaluations_spent = cache.fresh_evaluations();
    result.cache_lookups = cache.total_lookups();
  }
};

}  // namespace

SearchResult mosa_search(const SearchSpaceSpec& space, const Evaluator& eval,
                         const EnergyWeights& weights,
                         const SearchConfig& cfg) {
  cfg.validate();
  weights.validate();
  space.validate();
  const std::uint64_t init_seed = mix_seed(cfg.seed, kInitStream);
  const std::uint64_t move_seed = mix_seed(cfg.seed, kMoveStream);
  const std::uint64_t accept_seed = mix_seed(cfg.seed, kAcceptStream);

  LoopState st(eval, weights);
  st.current = random_genome(space, init_seed);
  st.current_energy =
      st.record(0, st.current, temperature_at(0, cfg), true, nullptr);

  for (int k = 1; k <= cfg.iterations; ++k) {
    const double temp = temperature_at(k, cfg);
    const Genome proposal = mutate(st.current, space, mix_seed(move_seed, k));
    bool cached = false;
    const CandidateMetrics m = st.cache.lookup(proposal, &cached);
    const double e = energy(m, weights);
    const double delta = e - st.current_energy;
    bool accepted = delta <= 0.0;
    if (!accepted) {
      const double p = acceptance_probability(delta, temp);
      const double u = Rng(mix_seed(accept_seed, k)).uniform_double();
      accepted = u < p;
    }
    if (e < st.best_energy) {
      st.best_energy = e;
      st.result.best_genome = proposal;
      st.result.best_metrics = m;
    }
    st.result.trace.push_back(
        TraceRecord{k, proposal, e, temp, accepted, st.best_energy, cached});
    if (accepted) {
      st.current = proposal;
      st.current_energy = e;
    }
  }
  st.finish();
  return st.result;
}

SearchResult random_search(const SearchSpaceSpec& space, const Evaluator& eval,
                           const EnergyWeights& weights,
                           const SearchConfig& cfg) {
  cfg.validate();
  weights.validate();
  space.validate();
  const std::uint64_t init_seed = mix_seed(cfg.seed, kInitStream);
  const std::uint64_t move_seed = mix_seed(cfg.seed, kMoveStream);

  LoopState st(eval, weights);
  Genome g = random_genome(space, init_seed);
  st.record(0, g, temperature_at(0, cfg), true, nullptr);

  for (int k = 1; k <= cfg.iterations; ++k) {
    const double temp = temperature_at(k, cfg);
    const Genome sample = random_genome(space, mix_seed(move_seed, k));
    const double before = st.best_energy;
    const double e = st.record(k, sample, temp, false, nullptr);
    // For random search "accepted" records strict improvements of the best.
    st.result.trace.back().accepted = e < before;
  }
  st.finish();
  return st.result;
}

SearchResult local_search(const SearchSpaceSpec& space, const Evaluator& eval,
                          const EnergyWeights& weights,
                          const SearchConfig& cfg) {
  cfg.validate();
  weights.validate();
  space.validate();
  const std::uint64_t init_seed = mix_seed(cfg.seed, kInitStream);
  const std::uint64_t move_seed = mix_seed(cfg.seed, kMoveStream);

  LoopState st(eval, weights);
  st.current = random_genome(space, init_seed);
  st.current_energy =
      st.record(0, st.current, temperature_at(0, cfg), true, nullptr);

  int stall = 0;
  for (int k = 1; k <= cfg.iterations; ++k) {
    const double temp = temperature_at(k, cfg);
    if (stall >= cfg.local_restart_patience) {
      // Restart: the fresh random genome is this step's (unconditional)
      // proposal, so it spends one unit of the evaluation budget like any
      // other step.
      const Genome restart = random_genome(space, mix_seed(init_seed, k));
      st.current_energy = st.record(k, restart, temp, true, nullptr);
      st.current = restart;
      stall = 0;
      continue;
    }
    const Genome proposal = mutate(st.current, space, mix_seed(move_seed, k));
    bool cached = false;
    const CandidateMetrics m = st.cache.lookup(proposal, &cached);
    const double e = energy(m, st.weights);
    const bool accepted = e < st.current_energy;
    if (e < st.best_energy) {
      st.best_energy = e;
      st.result.best_genome = proposal;
      st.result.best_metrics = m;
    }
    st.result.trace.push_back(
        TraceRecord{k, proposal, e, temp, accepted, st.best_energy, cached});
    if (accepted) {
      st.current = proposal;
      st.current_energy = e;
      stall = 0;
    } else {
      ++stall;
    }
  }
  st.finish();
  return st.result;
}

SearchResult run_search(SearchAlgo algo, const SearchSpaceSpec& space,
                        const Evaluator& eval, const EnergyWeights& weights,
                        const SearchConfig& cfg) {
  switch (algo) {
    case SearchAlgo::kMosa:
      return mosa_search(space, eval, weights, cfg);
    case SearchAlgo::kRandom:
      return random_search(space, eval, weights, cfg);
    case SearchAlgo::kLocal:
      return local_search(space, eval, weights, cfg);
  }
  throw InvalidParams("unknown search algorithm");
}

std::string format_csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_trace_csv(std::ostream& out,
                     const std::vector<TraceRecord>& trace) {
  out << "iteration,genome,energy,temperature,accepted,best_energy,cached\n";
  for (const TraceRecord& r : trace) {
    out << r.iteration << ",\"" << serialize(r.genome) << "\","
        << format_csv_double(r.energy) << ',' << format_csv_double(r.temperature)
        << ',' << (r.accepted ? 1 : 0) << ',' << format_csv_double(r.best_energy)
        << ',' << (r.cached ? 1 : 0) << '\n';
  }
}

}  // namespace trajnas
