#include "trajnas/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string>

#include "trajnas/errors.hpp"

namespace trajnas {
namespace {

using json = nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + " must be a JSON object, got " +
                      std::string(j.type_name()));
}

// Strictness: any key outside the allow-list is a hard error so that typos
// never silently fall back to defaults.
void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known)
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, const std::string& where,
                T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where +
                      ": " + e.what());
  }
}

void parse_dataset(const json& j, DatasetConfig& out) {
  const std::string where = "'dataset'";
  require_object(j, where);
  check_keys(j, where,
             {"seed", "train_scenes", "val_scenes", "agents_per_scene",
              "history_len", "horizon", "dt_s", "noise_sigma_m"});
  read_field(j, "seed", where, out.seed);
  read_field(j, "train_scenes", where, out.train_scenes);
  read_field(j, "val_scenes", where, out.val_scenes);
  read_field(j, "agents_per_scene", where, out.agents_per_scene);
  read_field(j, "history_len", where, out.history_len);
  read_field(j, "horizon", where, out.horizon);
  read_field(j, "dt_s", where, out.dt_s);
  read_field(j, "noise_sigma_m", where, out.noise_sigma_m);
}

void parse_search(const json& j, SearchConfig& out, SearchAlgo& algo) {
  const std::string where = "'search'";
  require_object(j, where);
  check_keys(j, where,
             {"algo", "t_max", "t_min", "iterations", "seed",
              "local_restart_patience"});
  if (j.contains("algo")) {
    std::string name;
    read_field(j, "algo", where, name);
    const auto parsed = search_algo_from_name(name);
    if (!parsed.has_value())
      throw ConfigError("unknown search algo '" + name +
                        "' (expected mosa, random or local)");
    algo = *parsed;
  }
  read_field(j, "t_max", where, out.t_max);
  read_field(j, "t_min", where, out.t_min);
  read_field(j, "iterations", where, out.iterations);
  read_field(j, "seed", where, out.seed);
  read_field(j, "local_restart_patience", where, out.local_restart_patience);
}

void parse_energy(const json& j, EnergyWeights& out) {
  const std::string where = "'energy'";
  require_object(j, where);
  check_keys(j, where, {"alpha", "beta", "gamma"});
  read_field(j, "alpha", where, out.alpha);
  read_field(j, "beta", where, out.beta);
  read_field(j, "gamma", where, out.gamma);
}

void parse_surrogate(const json& j, SurrogateSpec& out) {
  const std::string where = "'surrogate'";
  require_object(j, where);
  check_keys(j, where, {"seed", "ruggedness"});
  read_field(j, "seed", where, out.seed);
  read_field(j, "ruggedness", where, out.ruggedness);
}

void parse_train(const json& j, TrainConfig& out) {
  const std::string where = "'evaluation.train'";
  require_object(j, where);
  check_keys(j, where,
             {"epochs", "learning_rate", "batch_size", "beta1", "beta2",
              "epsilon", "shuffle_seed"});
  read_field(j, "epochs", where, out.epochs);
  read_field(j, "learning_rate", where, out.learning_rate);
  read_field(j, "batch_size", where, out.batch_size);
  read_field(j, "beta1", where, out.beta1);
  read_field(j, "beta2", where, out.beta2);
  read_field(j, "epsilon", where, out.epsilon);
  read_field(j, "shuffle_seed", where, out.shuffle_seed);
}

void parse_evaluation(const json& j, EvalConfig& out) {
  const std::string where = "'evaluation'";
  require_object(j, where);
  check_keys(j, where,
             {"train", "k_hypotheses", "model_seed", "deterministic_latency",
              "latency_repetitions", "latency_warmup", "full_split",
              "match_threshold_m"});
  if (j.contains("train")) parse_train(j.at("train"), out.train);
  read_field(j, "k_hypotheses", where, out.k_hypotheses);
  read_field(j, "model_seed", where, out.model_seed);
  read_field(j, "deterministic_latency", where, out.deterministic_latency);
  read_field(j, "latency_repetitions", where, out.latency_repetitions);
  read_field(j, "latency_warmup", where, out.latency_warmup);
  read_field(j, "full_split", where, out.full_split);
  read_field(j, "match_threshold_m", where, out.match_threshold_m);
}

void parse_compare(const json& j, CompareConfig& out) {
  const std::string where = "'compare'";
  require_object(j, where);
  check_keys(j, where, {"seeds"});
  read_field(j, "seeds", where, out.seeds);
}

SpaceConfig parse_space(const json& j) {
  SpaceConfig cfg;
  if (j.is_string()) {
    cfg.builtin = true;
    cfg.builtin_name = j.get<std::string>();
    cfg.resolve();  // fail fast on an unknown builtin name
    return cfg;
  }
  cfg.builtin = false;
  cfg.custom = space_from_json(j);
  return cfg;
}

}  // namespace

SearchSpaceSpec space_from_json(const json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "desk") return default_space(SpaceScale::kDesk);
    if (name == "paper") return default_space(SpaceScale::kPaper);
    if (name == "test18") return enumerable_test_space();
    throw ConfigError("unknown builtin space '" + name +
                      "' (expected desk, paper or test18)");
  }
  const std::string where = "'space'";
  require_object(j, where);
  check_keys(j, where, {"name", "cardinalities", "segments"});
  SearchSpaceSpec space;
  read_field(j, "name", where, space.name);
  if (space.name.empty())
    throw ConfigError("custom space needs a non-empty 'name'");
  read_field(j, "cardinalities", where, space.cardinalities);
  if (!j.contains("segments"))
    throw ConfigError("custom space needs a 'segments' array");
  const json& segs = j.at("segments");
  if (!segs.is_array())
    throw ConfigError("'space.segments' must be an array");
  for (const json& sj : segs) {
    const std::string seg_where = "'space.segments' entry";
    require_object(sj, seg_where);
    check_keys(sj, seg_where, {"kind", "begin", "end"});
    std::string kind_name;
    read_field(sj, "kind", seg_where, kind_name);
    const auto kind = segment_kind_from_name(kind_name);
    if (!kind.has_value())
      throw ConfigError("unknown segment kind '" + kind_name + "'");
    SegmentRange seg;
    seg.kind = *kind;
    read_field(sj, "begin", seg_where, seg.begin);
    read_field(sj, "end", seg_where, seg.end);
    space.segments.push_back(seg);
  }
  try {
    space.validate();
  } catch (const Error& e) {
    throw ConfigError("invalid custom space: " + std::string(e.what()));
  }
  return space;
}

json space_to_json(const SpaceConfig& space) {
  if (space.builtin) return space.builtin_name;
  json segs = json::array();
  for (const SegmentRange& seg : space.custom.segments) {
    segs.push_back({{"kind", segment_kind_name(seg.kind)},
                    {"begin", seg.begin},
                    {"end", seg.end}});
  }
  return json{{"name", space.custom.name},
              {"cardinalities", space.custom.cardinalities},
              {"segments", segs}};
}

SearchSpaceSpec SpaceConfig::resolve() const {
  if (!builtin) return custom;
  if (builtin_name == "desk") return default_space(SpaceScale::kDesk);
  if (builtin_name == "paper") return default_space(SpaceScale::kPaper);
  if (builtin_name == "test18") return enumerable_test_space();
  throw ConfigError("unknown builtin space '" + builtin_name +
                    "' (expected desk, paper or test18)");
}

const char* evaluator_kind_name(EvaluatorKind kind) {
  return kind == EvaluatorKind::kSurrogate ? "surrogate" : "trained";
}

RunConfig parse_run_config(const json& j) {
  require_object(j, "the configuration root");
  check_keys(j, "the configuration root",
             {"run_id", "output_dir", "data_path", "space", "dataset", "search",
              "energy", "evaluator", "surrogate", "evaluation", "compare"});
  RunConfig cfg;
  read_field(j, "run_id", "the configuration root", cfg.run_id);
  read_field(j, "output_dir", "the configuration root", cfg.output_dir);
  read_field(j, "data_path", "the configuration root", cfg.data_path);
  if (j.contains("space")) cfg.space = parse_space(j.at("space"));
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
  if (j.contains("search")) parse_search(j.at("search"), cfg.search, cfg.algo);
  if (j.contains("energy")) parse_energy(j.at("energy"), cfg.energy);
  if (j.contains("evaluator")) {
    std::string name;
    read_field(j, "evaluator", "the configuration root", name);
    if (name == "surrogate") {
      cfg.evaluator = EvaluatorKind::kSurrogate;
    } else if (name == "trained") {
      cfg.evaluator = EvaluatorKind::kTrained;
    } else {
      throw ConfigError("unknown evaluator '" + name +
                        "' (expected surrogate or trained)");
    }
  }
  if (j.contains("surrogate")) parse_surrogate(j.at("surrogate"), cfg.surrogate);
  if (j.contains("evaluation")) parse_evaluation(j.at("evaluation"), cfg.evaluation);
  if (j.contains("compare")) parse_compare(j.at("compare"), cfg.compare);
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path +
                      "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"run_id", cfg.run_id},
      {"output_dir", cfg.output_dir},
      {"data_path", cfg.data_path},
      {"space", space_to_json(cfg.space)},
      {"dataset",
       {{"seed", cfg.dataset.seed},
        {"train_scenes", cfg.dataset.train_scenes},
        {"val_scenes", cfg.dataset.val_scenes},
        {"agents_per_scene", cfg.dataset.agents_per_scene},
        {"history_len", cfg.dataset.history_len},
        {"horizon", cfg.dataset.horizon},
        {"dt_s", cfg.dataset.dt_s},
        {"noise_sigma_m", cfg.dataset.noise_sigma_m}}},
      {"search",
       {{"algo", search_algo_name(cfg.algo)},
        {"t_max", cfg.search.t_max},
        {"t_min", cfg.search.t_min},
        {"iterations", cfg.search.iterations},
        {"seed", cfg.search.seed},
        {"local_restart_patience", cfg.search.local_restart_patience}}},
      {"energy",
       {{"alpha", cfg.energy.alpha},
        {"beta", cfg.energy.beta},
        {"gamma", cfg.energy.gamma}}},
      {"evaluator", evaluator_kind_name(cfg.evaluator)},
      {"surrogate",
       {{"seed", cfg.surrogate.seed},
        {"ruggedness", cfg.surrogate.ruggedness}}},
      {"evaluation",
       {{"train",
         {{"epochs", cfg.evaluation.train.epochs},
          {"learning_rate", cfg.evaluation.train.learning_rate},
          {"batch_size", cfg.evaluation.train.batch_size},
          {"beta1", cfg.evaluation.train.beta1},
          {"beta2", cfg.evaluation.train.beta2},
          {"epsilon", cfg.evaluation.train.epsilon},
          {"shuffle_seed", cfg.evaluation.train.shuffle_seed}}},
        {"k_hypotheses", cfg.evaluation.k_hypotheses},
        {"model_seed", cfg.evaluation.model_seed},
        {"deterministic_latency", cfg.evaluation.deterministic_latency},
        {"latency_repetitions", cfg.evaluation.latency_repetitions},
        {"latency_warmup", cfg.evaluation.latency_warmup},
        {"full_split", cfg.evaluation.full_split},
        {"match_threshold_m", cfg.evaluation.match_threshold_m}}},
      {"compare", {{"seeds", cfg.compare.seeds}}},
  };
}

void validate_run_config(const RunConfig& cfg) {
  try {
    cfg.space.resolve();
    cfg.dataset.validate();
    cfg.search.validate();
    cfg.energy.validate();
    cfg.surrogate.validate();
    cfg.evaluation.train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  if (cfg.evaluation.k_hypotheses < 1)
    throw ConfigError("evaluation.k_hypotheses must be >= 1");
  if (cfg.evaluation.latency_repetitions < 1)
    throw ConfigError("evaluation.latency_repetitions must be >= 1");
  if (cfg.evaluation.latency_warmup < 0)
    throw ConfigError("evaluation.latency_warmup must be >= 0");
  if (!std::isfinite(cfg.evaluation.match_threshold_m) ||
      cfg.evaluation.match_threshold_m <= 0.0)
    throw ConfigError("evaluation.match_threshold_m must be > 0");
  if (cfg.compare.seeds.empty())
    throw ConfigError("compare.seeds must not be empty");
}

}  // namespace trajnas
