#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajnas/energy.hpp"
#include "trajnas/genome.hpp"

namespace trajnas {

struct SearchConfig {
  double t_max = 2500.0;
  double t_min = 2.5;
  int iterations = 108;
  std::uint64_t seed = 1;
  // Consecutive non-improving proposals before local search restarts from a
  // fresh random genome.
  int local_restart_patience = 10;

  void validate() const;  // throws InvalidParams / InvalidTemperature
};

enum class SearchAlgo { kMosa, kRandom, kLocal };

const char* search_algo_name(SearchAlgo algo);
std::optional<SearchAlgo> search_algo_from_name(const std::string& name);

// min(1, exp(-delta/temperature)). Throws InvalidTemperature unless
// temperature > 0 and finite.
double acceptance_probability(double delta, double temperature);

// Geometric schedule: T_k = t_max * (t_min/t_max)^(k/iterations), so
// T_0 = t_max exactly and T_iterations = t_min up to rounding.
double temperature_at(int iteration, const SearchConfig& cfg);

struct TraceRecord {
  int iteration = 0;
  Genome genome;        // the candidate evaluated at this step
  double energy = 0.0;
  double temperature = 0.0;
  bool accepted = false;
  double best_energy = 0.0;  // best seen up to and including this step
  bool cached = false;       // candidate served from the evaluation cache
};

struct SearchResult {
  Genome best_genome;
  double best_energy = 0.0;
  CandidateMetrics best_metrics;
  std::vector<TraceRecord> trace;  // iterations + 1 records (step 0 = start)
  int evaluations_spent = 0;       // fresh evaluator invocations
  int cache_lookups = 0;           // total lookups, cached or fresh
};

using Evaluator = std::function<CandidateMetrics(const Genome&)>;

// Memoizes evaluator results by genome. Lookups are mutex-guarded so an
// evaluator that fans out internally can share the cache; the search loops
// themselves issue one evaluation at a time.
class EvaluationCache {
 public:
  explicit EvaluationCache(Evaluator evaluator);

  // Returns the metrics for g, evaluating at most once per distinct genome.
  // Sets *was_cached when the result was already present. Evaluator errors
  // are rethrown as EvaluatorError annotated with the genome text.
  CandidateMetrics lookup(const Genome& g, bool* was_cached = nullptr);

  int fresh_evaluations() const;
  int total_lookups() const;

 private:
  mutable std::mutex mu_;
  Evaluator evaluator_;
  std::unordered_map<Genome, CandidateMetrics, GenomeHash> entries_;
  int fresh_ = 0;
  int lookups_ = 0;
};

// All three searches share the budget discipline: one evaluation for the
// random starting genome (trace step 0) plus exactly cfg.iterations proposal
// evaluations. With equal cfg.seed they start from the same genome. The
// returned best is the best-ever candidate, not the final one.
//
// mosa_search: Metropolis acceptance at the geometric temperature schedule.
// random_search: independent uniform samples; "accepted" marks new bests.
// local_search: first-improvement hill climbing; after
//   cfg.local_restart_patience consecutive non-improving proposals the next
//   proposal is a fresh random genome, taken unconditionally.
SearchResult mosa_search(const SearchSpaceSpec& space, const Evaluator& eval,
                         const EnergyWeights& weights, const SearchConfig& cfg);
SearchResult random_search(const SearchSpaceSpec& space, const Evaluator& eval,
                           const EnergyWeights& weights,
                           const SearchConfig& cfg);
SearchResult local_search(const SearchSpaceSpec& space, const Evaluator& eval,
                          const EnergyWeights& weights,
                          const SearchConfig& cfg);

SearchResult run_search(SearchAlgo algo, const SearchSpaceSpec& space,
                        const Evaluator& eval, const EnergyWeights& weights,
                        const SearchConfig& cfg);

// CSV schema: iteration,genome,energy,temperature,accepted,best_energy,cached
// Floats are written with 6 significant digits; the genome field is quoted
// because the genome text itself contains commas.
void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace);

// Formats a double with 6 significant digits (the project-wide CSV float
// format).
std::string format_csv_double(double v);

}  // namespace trajnas
