#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajnas/energy.hpp"
#include "trajnas/forecaster.hpp"
#include "trajnas/genome.hpp"
#include "trajnas/search.hpp"
#include "trajnas/surrogate.hpp"
#include "trajnas/synthdata.hpp"

namespace trajnas {

// Either a builtin space name ("desk", "paper", "test18") or a fully custom
// spec carried inline.
struct SpaceConfig {
  bool builtin = true;
  std::string builtin_name = "desk";
  SearchSpaceSpec custom;

  SearchSpaceSpec resolve() const;
};

enum class EvaluatorKind { kSurrogate, kTrained };

const char* evaluator_kind_name(EvaluatorKind kind);

struct CompareConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

// One configuration object shared by every CLI subcommand; each command reads
// the sections it needs. Every field has a default, a JSON file overrides
// defaults, and command-line flags override the file.
struct RunConfig {
  std::string run_id = "run";
  std::string output_dir = "out";
  std::string data_path;  // dataset file for trained evaluation; may be empty
  SpaceConfig space;
  DatasetConfig dataset;
  SearchConfig search;
  SearchAlgo algo = SearchAlgo::kMosa;
  EnergyWeights energy;
  EvaluatorKind evaluator = EvaluatorKind::kSurrogate;
  SurrogateSpec surrogate;
  EvalConfig evaluation;
  CompareConfig compare;
};

// Builtin name (JSON string) or {"name", "cardinalities", "segments"} object;
// segments use {"kind", "begin", "end"} with the segment_kind_name strings.
// Throws ConfigError on anything else, including unknown keys.
SearchSpaceSpec space_from_json(const nlohmann::json& j);
nlohmann::json space_to_json(const SpaceConfig& space);

// Strict parse: unknown keys anywhere raise ConfigError naming the key and
// its section. Missing keys keep their defaults. Section validators run at
// the end, so a parsed config is always usable.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);  // IoError / ConfigError

// Full echo with every effective value; parse_run_config(run_config_to_json(c))
// reproduces c exactly.
nlohmann::json run_config_to_json(const RunConfig& cfg);

void validate_run_config(const RunConfig& cfg);

}  // namespace trajnas
