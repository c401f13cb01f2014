// trajnas: dataset generation, architecture search, baseline comparison and
// metric scoring from one binary. See --help of each subcommand.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trajnas/config.hpp"
#include "trajnas/errors.hpp"
#include "trajnas/forecaster.hpp"
#include "trajnas/genome.hpp"
#include "trajnas/metrics.hpp"
#include "trajnas/search.hpp"
#include "trajnas/surrogate.hpp"
#include "trajnas/synthdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajnas;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitEvaluation = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof())
    throw IoError("failed reading '" + path + "'");
  return buf.str();
}

// Write-to-temp-then-rename so readers never observe a half-written file.
void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec)
      throw IoError("cannot create directory '" +
                    target.parent_path().string() + "': " + ec.message());
  }
  const fs::path tmp =
      target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw IoError("cannot move '" + tmp.string() + "' to '" + path +
                  "': " + ec.message());
}

std::string json_text(const json& j) { return j.dump(1) + "\n"; }

int thread_cap() {
  const char* env = std::getenv("TRAJNAS_THREADS");
  if (env != nullptr) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
      // Fall through to the hardware default on unparsable values.
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

json metrics_to_json(const CandidateMetrics& m) {
  return json{{"latency_s", m.latency_s},
              {"map_f", m.map_f},
              {"ade_m", m.ade_m},
              {"fde_m", m.fde_m},
              {"map_det", m.map_det}};
}

// Flag state shared by the subcommands; only values the user actually set
// override the config file.
struct CliOptions {
  std::string config_path;
  std::string out;
  std::string data;
  std::string algo;
  std::string genome;
  std::string save_model;
  std::string pred;
  std::string gt;
  std::uint64_t seed = 0;
  int scenes = 0;
  int val_scenes = 0;
  int agents = 0;
  int iterations = 0;
  int seeds_count = 0;
  int k_hypotheses = 0;
  int epochs = 0;
  double t_max = 0.0;
  double t_min = 0.0;
  double noise = 0.0;
  double ruggedness = 0.0;
  double threshold = 0.0;
  std::string evaluator;
  bool deterministic = false;
  bool full_split = false;
  bool full_eval_best = false;
  bool baseline_cv = false;
};

// Phase tag so main() can translate errors to the exit-code contract:
// problems while interpreting flags/config are usage errors, problems while
// doing the work are I/O or evaluation errors.
struct UsagePhaseError {
  std::string message;
};

RunConfig resolve_config(const CLI::App& cmd, const CliOptions& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) cfg = load_run_config(opt.config_path);

  // Safe lookup: subcommands carry different flag subsets.
  const auto set = [&cmd](const std::string& flag) {
    const CLI::Option* option = cmd.get_option_no_throw(flag);
    return option != nullptr && option->count() > 0;
  };
  if (set("--out")) cfg.output_dir = opt.out;
  if (set("--data")) cfg.data_path = opt.data;
  if (set("--algo")) {
    const auto algo = search_algo_from_name(opt.algo);
    if (!algo.has_value())
      throw ConfigError("unknown --algo '" + opt.algo +
                        "' (expected mosa, random or local)");
    cfg.algo = *algo;
  }
  if (set("--seed")) {
    cfg.search.seed = opt.seed;
    cfg.dataset.seed = opt.seed;
  }
  if (set("--scenes")) cfg.dataset.train_scenes = opt.scenes;
  if (set("--val-scenes")) cfg.dataset.val_scenes = opt.val_scenes;
  if (set("--agents")) cfg.dataset.agents_per_scene = opt.agents;
  if (set("--noise")) cfg.dataset.noise_sigma_m = opt.noise;
  if (set("--iterations")) cfg.search.iterations = opt.iterations;
  if (set("--t-max")) cfg.search.t_max = opt.t_max;
  if (set("--t-min")) cfg.search.t_min = opt.t_min;
  if (set("--ruggedness")) cfg.surrogate.ruggedness = opt.ruggedness;
  if (set("--k")) cfg.evaluation.k_hypotheses = opt.k_hypotheses;
  if (set("--epochs")) cfg.evaluation.train.epochs = opt.epochs;
  if (set("--threshold")) cfg.evaluation.match_threshold_m = opt.threshold;
  if (set("--evaluator")) {
    if (opt.evaluator == "surrogate") {
      cfg.evaluator = EvaluatorKind::kSurrogate;
    } else if (opt.evaluator == "trained") {
      cfg.evaluator = EvaluatorKind::kTrained;
    } else {
      throw ConfigError("unknown --evaluator '" + opt.evaluator +
                        "' (expected surrogate or trained)");
    }
  }
  if (opt.deterministic) cfg.evaluation.deterministic_latency = true;
  if (opt.full_split) cfg.evaluation.full_split = true;

  validate_run_config(cfg);
  return cfg;
}

struct PreparedEvaluator {
  Evaluator fn;
  std::shared_ptr<SurrogateModel> surrogate;  // keeps captures alive
  std::shared_ptr<Dataset> dataset;
};

PreparedEvaluator make_evaluator(const RunConfig& cfg,
                                 const SearchSpaceSpec& space) {
  PreparedEvaluator prepared;
  if (cfg.evaluator == EvaluatorKind::kSurrogate) {
    prepared.surrogate =
        std::make_shared<SurrogateModel>(build_surrogate(space, cfg.surrogate));
    auto model = prepared.surrogate;
    prepared.fn = [model](const Genome& g) {
      return surrogate_evaluate(*model, g);
    };
    return prepared;
  }
  if (cfg.data_path.empty())
    throw UsagePhaseError{
        "the trained evaluator needs a dataset: pass --data or set data_path"};
  prepared.dataset = std::make_shared<Dataset>(load_dataset(cfg.data_path));
  auto dataset = prepared.dataset;
  const EvalConfig eval_cfg = cfg.evaluation;
  const SearchSpaceSpec space_copy = space;
  prepared.fn = [dataset, eval_cfg, space_copy](const Genome& g) {
    return evaluate_candidate(g, space_copy, *dataset, eval_cfg);
  };
  return prepared;
}

json search_summary(const RunConfig& cfg, const SearchResult& result) {
  return json{{"run_id", cfg.run_id},
              {"algo", search_algo_name(cfg.algo)},
              {"seed", cfg.search.seed},
              {"iterations", cfg.search.iterations},
              {"best_genome", serialize(result.best_genome)},
              {"best_energy", result.best_energy},
              {"best_metrics", metrics_to_json(result.best_metrics)},
              {"evaluations_spent", result.evaluations_spent},
              {"cache_lookups", result.cache_lookups}};
}

int cmd_gen_data(const CLI::App& cmd, const CliOptions& opt) {
  RunConfig cfg;
  try {
    cfg = resolve_config(cmd, opt);
  } catch (const IoError&) {
    throw;  // missing config file is an I/O failure, not a usage error
  } catch (const Error& e) {
    throw UsagePhaseError{e.what()};
  }

  const Dataset dataset = generate_dataset(cfg.dataset);
  write_file_atomic(opt.out, serialize_dataset(dataset));

  const SubclassCounts counts = count_subclasses(dataset.splits.train);
  const double total = std::max(1, counts.total());
  std::printf(
      "wrote %s: %d train / %d val scenes, train subclass mix "
      "static %.1f%% linear %.1f%% nonlinear %.1f%%\n",
      opt.out.c_str(), cfg.dataset.train_scenes, cfg.dataset.val_scenes,
      100.0 * counts.static_n / total, 100.0 * counts.linear_n / total,
      100.0 * counts.nonlinear_n / total);
  return 0;
}

int cmd_search(const CLI::App& cmd, const CliOptions& opt) {
  RunConfig cfg;
  SearchSpaceSpec space;
  PreparedEvaluator evaluator;
  try {
    cfg = resolve_config(cmd, opt);
    space = cfg.space.resolve();
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw UsagePhaseError{e.what()};
  }
  if (opt.full_eval_best && cfg.data_path.empty())
    throw UsagePhaseError{
        "--full-eval-best needs a dataset: pass --data or set data_path"};
  evaluator = make_evaluator(cfg, space);

  const SearchResult result =
      run_search(cfg.algo, space, evaluator.fn, cfg.energy, cfg.search);

  std::ostringstream trace;
  write_trace_csv(trace, result.trace);
  const fs::path out_dir(cfg.output_dir);
  write_file_atomic((out_dir / "trace.csv").string(), trace.str());
  write_file_atomic((out_dir / "best_genome.txt").string(),
                    serialize(result.best_genome) + "\n");
  write_file_atomic((out_dir / "best_metrics.json").string(),
                    json_text(metrics_to_json(result.best_metrics)));
  json summary = search_summary(cfg, result);

  if (opt.full_eval_best) {
    // Step two of the two-step protocol: the winner gets a full-split
    // training run on the real dataset.
    std::shared_ptr<Dataset> dataset = evaluator.dataset;
    if (dataset == nullptr)
      dataset = std::make_shared<Dataset>(load_dataset(cfg.data_path));
    EvalConfig full_cfg = cfg.evaluation;
    full_cfg.full_split = true;
    const CandidateEvaluation full =
        evaluate_candidate_full(result.best_genome, space, *dataset, full_cfg);
    summary["full_eval"] = {
        {"metrics", metrics_to_json(full.metrics)},
        {"train_epoch_losses", full.train_report.epoch_losses}};
    write_file_atomic((out_dir / "full_eval.json").string(),
                      json_text(summary["full_eval"]));
  }

  write_file_atomic((out_dir / "summary.json").string(), json_text(summary));
  write_file_atomic((out_dir / "effective_config.json").string(),
                    json_text(run_config_to_json(cfg)));
  std::printf("%s seed %llu: best energy %.6g, %d evaluations\n",
              search_algo_name(cfg.algo),
              static_cast<unsigned long long>(cfg.search.seed),
              result.best_energy, result.evaluations_spent);
  return 0;
}

int cmd_compare(const CLI::App& cmd, const CliOptions& opt) {
  RunConfig cfg;
  SearchSpaceSpec space;
  try {
    cfg = resolve_config(cmd, opt);
    if (cmd.count("--seeds") > 0) {
      if (opt.seeds_count < 1)
        throw ConfigError("--seeds must be >= 1");
      cfg.compare.seeds.clear();
      for (int i = 0; i < opt.seeds_count; ++i)
        cfg.compare.seeds.push_back(static_cast<std::uint64_t>(i + 1));
    }
    space = cfg.space.resolve();
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw UsagePhaseError{e.what()};
  }
  const PreparedEvaluator evaluator = make_evaluator(cfg, space);

  struct Job {
    SearchAlgo algo;
    std::uint64_t seed;
    SearchResult result;
    std::exception_ptr error;
  };
  const std::array<SearchAlgo, 3> algos{SearchAlgo::kMosa, SearchAlgo::kRandom,
                                        SearchAlgo::kLocal};
  std::vector<Job> jobs;
  for (SearchAlgo algo : algos)
    for (std::uint64_t seed : cfg.compare.seeds)
      jobs.push_back(Job{algo, seed, {}, nullptr});

  // Independent runs fan out across a small pool; every run is internally
  // sequential and owns its deterministic seed, so the fan-out never alters
  // results.
  const int workers =
      std::min<int>(thread_cap(), static_cast<int>(jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= jobs.size()) return;
      Job& job = jobs[idx];
      try {
        SearchConfig run_cfg = cfg.search;
        run_cfg.seed = job.seed;
        job.result =
            run_search(job.algo, space, evaluator.fn, cfg.energy, run_cfg);
      } catch (...) {
        job.error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const Job& job : jobs)
    if (job.error) std::rethrow_exception(job.error);

  std::ostringstream csv;
  csv << "algo,seed,iteration,best_energy\n";
  for (const Job& job : jobs) {
    for (const TraceRecord& rec : job.result.trace) {
      if (rec.iteration == 0) continue;  // row budget: iterations per run
      csv << search_algo_name(job.algo) << "," << job.seed << ","
          << rec.iteration << "," << format_csv_double(rec.best_energy)
          << "\n";
    }
  }

  json summary = json::object();
  for (SearchAlgo algo : algos) {
    std::vector<double> energies;
    json runs = json::array();
    for (const Job& job : jobs) {
      if (job.algo != algo) continue;
      energies.push_back(job.result.best_energy);
      runs.push_back({{"seed", job.seed},
                      {"best_energy", job.result.best_energy},
                      {"best_genome", serialize(job.result.best_genome)}});
    }
    std::sort(energies.begin(), energies.end());
    const std::size_t mid = energies.size() / 2;
    const double median = energies.size() % 2 == 1
                              ? energies[mid]
                              : 0.5 * (energies[mid - 1] + energies[mid]);
    summary[search_algo_name(algo)] = {{"median_best_energy", median},
                                       {"runs", runs}};
  }

  const fs::path out_dir(cfg.output_dir);
  write_file_atomic((out_dir / "compare.csv").string(), csv.str());
  write_file_atomic((out_dir / "summary.json").string(), json_text(summary));
  write_file_atomic((out_dir / "effective_config.json").string(),
                    json_text(run_config_to_json(cfg)));
  for (SearchAlgo algo : algos)
    std::printf("%s median best energy %.6g\n", search_algo_name(algo),
                summary[search_algo_name(algo)]["median_best_energy"]
                    .get<double>());
  return 0;
}

int cmd_eval(const CLI::App& cmd, const CliOptions& opt) {
  RunConfig cfg;
  SearchSpaceSpec space;
  Genome genome;
  try {
    cfg = resolve_config(cmd, opt);
    space = cfg.space.resolve();
    if (!opt.baseline_cv) {
      if (opt.genome.empty())
        throw ConfigError("eval needs --genome (or --baseline-cv)");
      genome = deserialize(opt.genome, space);
    }
    if (cfg.data_path.empty())
      throw ConfigError("eval needs a dataset: pass --data or set data_path");
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw UsagePhaseError{e.what()};
  }

  const Dataset dataset = load_dataset(cfg.data_path);
  const std::vector<Scene>& val_scenes = cfg.evaluation.full_split
                                             ? dataset.splits.val
                                             : dataset.splits.mini_val;
  json output;
  if (opt.baseline_cv) {
    const std::vector<Detection> detections = constant_velocity_baseline(
        val_scenes, dataset.config.horizon, cfg.evaluation.k_hypotheses);
    const EvalReport report =
        forecasting_report(detections, val_scenes, cfg.evaluation.k_hypotheses,
                           cfg.evaluation.match_threshold_m);
    output = json{{"genome", "cv-baseline"},
                  {"report", json::parse(serialize_report(report))}};
  } else {
    const CandidateEvaluation eval =
        evaluate_candidate_full(genome, space, dataset, cfg.evaluation);
    output = json{{"genome", serialize(genome)},
                  {"metrics", metrics_to_json(eval.metrics)},
                  {"report", json::parse(serialize_report(eval.report))},
                  {"train_epoch_losses", eval.train_report.epoch_losses}};
    if (!opt.save_model.empty()) save_model(eval.model, opt.save_model);
  }

  const std::string text = json_text(output);
  std::fputs(text.c_str(), stdout);
  if (cmd.count("--out") > 0)
    write_file_atomic((fs::path(cfg.output_dir) / "eval.json").string(), text);
  return 0;
}

int cmd_metrics(const CLI::App& cmd, const CliOptions& opt) {
  int k_used = 5;
  double threshold = kMatchDistanceThreshold;
  if (cmd.count("--k") > 0) k_used = opt.k_hypotheses;
  if (cmd.count("--threshold") > 0) threshold = opt.threshold;
  if (k_used < 1) throw UsagePhaseError{"--k must be >= 1"};
  if (threshold <= 0.0) throw UsagePhaseError{"--threshold must be > 0"};

  const std::vector<Detection> detections =
      parse_detections(read_file(opt.pred));
  const std::vector<Scene> scenes = parse_scenes(read_file(opt.gt));
  const EvalReport report =
      forecasting_report(detections, scenes, k_used, threshold);
  const std::string text = serialize_report(report) + "\n";
  std::fputs(text.c_str(), stdout);
  if (cmd.count("--out") > 0) write_file_atomic(opt.out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "trajnas: latency-aware architecture search for trajectory forecasting"};
  app.require_subcommand(1);
  CliOptions opt;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic trajectory dataset file");
  gen->add_option("--config", opt.config_path, "JSON config file");
  gen->add_option("--seed", opt.seed, "dataset seed");
  gen->add_option("--scenes", opt.scenes, "training scenes")
      ->check(CLI::PositiveNumber);
  gen->add_option("--val-scenes", opt.val_scenes, "validation scenes")
      ->check(CLI::PositiveNumber);
  gen->add_option("--agents", opt.agents, "agents per scene")
      ->check(CLI::PositiveNumber);
  gen->add_option("--noise", opt.noise, "observation noise sigma in metres")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--out", opt.out, "output dataset path")->required();

  CLI::App* search = app.add_subcommand(
      "search", "Run one search algorithm and write its trace");
  search->add_option("--config", opt.config_path, "JSON config file")
      ->required();
  search->add_option("--algo", opt.algo, "mosa|random|local");
  search->add_option("--seed", opt.seed, "search seed");
  search->add_option("--iterations", opt.iterations, "proposal budget");
  search->add_option("--t-max", opt.t_max, "initial temperature");
  search->add_option("--t-min", opt.t_min, "final temperature");
  search->add_option("--evaluator", opt.evaluator, "surrogate|trained");
  search->add_option("--ruggedness", opt.ruggedness, "surrogate ruggedness");
  search->add_option("--data", opt.data, "dataset file (trained evaluator)");
  search->add_option("--out", opt.out, "output directory");
  search->add_flag("--deterministic", opt.deterministic,
                   "force deterministic evaluation (cost-model latency)");
  search->add_flag("--full-eval-best", opt.full_eval_best,
                   "re-evaluate the best genome on the full split");

  CLI::App* compare = app.add_subcommand(
      "compare", "Run mosa/random/local over N seeds at equal budgets");
  compare->add_option("--config", opt.config_path, "JSON config file")
      ->required();
  compare->add_option("--seeds", opt.seeds_count, "number of seeds (1..N)");
  compare->add_option("--iterations", opt.iterations, "proposal budget");
  compare->add_option("--t-max", opt.t_max, "initial temperature");
  compare->add_option("--t-min", opt.t_min, "final temperature");
  compare->add_option("--evaluator", opt.evaluator, "surrogate|trained");
  compare->add_option("--ruggedness", opt.ruggedness, "surrogate ruggedness");
  compare->add_option("--data", opt.data, "dataset file (trained evaluator)");
  compare->add_option("--out", opt.out, "output directory");
  compare->add_flag("--deterministic", opt.deterministic,
                    "force deterministic evaluation");

  CLI::App* eval = app.add_subcommand(
      "eval", "Train and score one genome (or the constant-velocity baseline)");
  eval->add_option("--config", opt.config_path, "JSON config file");
  eval->add_option("--genome", opt.genome, "genome text, e.g. desk:0,1,...");
  eval->add_option("--data", opt.data, "dataset file")->required();
  eval->add_option("--k", opt.k_hypotheses, "forecast hypotheses");
  eval->add_option("--epochs", opt.epochs, "training epochs");
  eval->add_option("--save-model", opt.save_model, "write trained weights");
  eval->add_option("--out", opt.out, "output directory for eval.json");
  eval->add_flag("--deterministic", opt.deterministic,
                 "cost-model latency instead of wall clock");
  eval->add_flag("--full-split", opt.full_split,
                 "train on the full train split, score the full val split");
  eval->add_flag("--baseline-cv", opt.baseline_cv,
                 "score the constant-velocity baseline instead of a genome");

  CLI::App* metrics = app.add_subcommand(
      "metrics", "Score a detection file against ground-truth scenes");
  metrics->add_option("--pred", opt.pred, "detections JSON file")->required();
  metrics->add_option("--gt", opt.gt, "scenes JSON file")->required();
  metrics->add_option("--k", opt.k_hypotheses, "hypotheses used for matching");
  metrics->add_option("--threshold", opt.threshold, "match gate in metres");
  metrics->add_option("--out", opt.out, "also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(*gen, opt);
    if (search->parsed()) return cmd_search(*search, opt);
    if (compare->parsed()) return cmd_compare(*compare, opt);
    if (eval->parsed()) return cmd_eval(*eval, opt);
    if (metrics->parsed()) return cmd_metrics(*metrics, opt);
    std::fprintf(stderr, "no subcommand selected\n");
    return kExitUsage;
  } catch (const UsagePhaseError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitEvaluation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
