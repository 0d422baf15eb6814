#pragma once

// RunConfig: the JSON document accepted by the CLI. Every key is optional;
// unknown keys are rejected so typos cannot silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "sild/errors.hpp"
#include "sild/model.hpp"
#include "sild/trainer.hpp"

namespace sild {

struct RunConfig {
  std::string dataset;       // dataset directory
  std::string dataset_name;  // label for results.csv; defaults to the directory name
  std::string out = "out";
  std::string shift;  // label for results.csv
  int precision = 64;
  TrainConfig train;
};

inline const char* to_string(Task t) { return t == Task::node ? "node" : "link"; }

inline Task parse_task(const std::string& s) {
  if (s == "node") return Task::node;
  if (s == "link") return Task::link;
  throw ConfigError("unknown task '" + s + "' (expected node or link)");
}

// Defaults that depend on the task: link runs use the 10/1/5 split and 50
// epochs; node runs keep the dataset's own split.
inline TrainConfig default_train_config(Task task) {
  TrainConfig c;
  c.task = task;
  return c;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "dataset", "dataset_name", "out", "shift", "precision", "task", "hidden_dim", "layers", "mask_hidden",
      "aggregator", "learning_rate", "weight_decay", "epochs", "lambda", "tau", "samples", "seed", "split",
      "eval_negative_seed", "no_invariance", "no_mask", "complement_trajectories", "variant_backprop_theta"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  RunConfig r;
  try {
    r.train = default_train_config(j.contains("task") ? parse_task(j.at("task").get<std::string>()) : Task::node);
    auto& t = r.train;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("dataset", r.dataset);
    get("dataset_name", r.dataset_name);
    get("out", r.out);
    if (j.contains("shift")) {
      const auto& s = j.at("shift");
      r.shift = s.is_string() ? s.get<std::string>() : s.dump();
    }
    get("precision", r.precision);
    get("hidden_dim", t.hidden);
    get("layers", t.layers);
    get("mask_hidden", t.mask_hidden);
    if (j.contains("aggregator")) t.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
    get("learning_rate", t.learning_rate);
    get("weight_decay", t.weight_decay);
    get("epochs", t.epochs);
    get("lambda", t.lambda);
    get("tau", t.tau);
    get("samples", t.samples);
    get("seed", t.seed);
    get("split", t.split);
    get("eval_negative_seed", t.eval_negative_seed);
    get("no_invariance", t.no_invariance);
    get("no_mask", t.no_mask);
    get("complement_trajectories", t.complement_trajectories);
    get("variant_backprop_theta", t.variant_backprop_theta);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return r;
}

inline nlohmann::ordered_json to_json(const RunConfig& r) {
  const auto& t = r.train;
  return {{"dataset", r.dataset},
          {"dataset_name", r.dataset_name},
          {"out", r.out},
          {"shift", r.shift},
          {"precision", r.precision},
          {"task", to_string(t.task)},
          {"hidden_dim", t.hidden},
          {"layers", t.layers},
          {"mask_hidden", t.mask_hidden},
          {"aggregator", to_string(t.aggregator)},
          {"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"epochs", t.epochs},
          {"lambda", t.lambda},
          {"tau", t.tau},
          {"samples", t.samples},
          {"seed", t.seed},
          {"split", t.split},
          {"eval_negative_seed", t.eval_negative_seed},
          {"no_invariance", t.no_invariance},
          {"no_mask", t.no_mask},
          {"complement_trajectories", t.complement_trajectories},
          {"variant_backprop_theta", t.variant_backprop_theta}};
}

inline RunConfig load_run_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config " + p.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + p.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// FNV-1a over the canonical serialization.
inline std::uint64_t config_hash(const RunConfig& r) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(r).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sild
