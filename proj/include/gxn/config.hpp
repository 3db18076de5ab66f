#pragma once

// JSON documents for GxnConfig and TrainConfig. Field names mirror the
// struct members; unknown keys are rejected so typos fail loudly.

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gxn/model.hpp"
#include "gxn/rng.hpp"

namespace gxn {

struct TrainConfig {
  int epochs = 60;
  double learning_rate = 0.005;
  int batch_size = 16;
  double alpha_start = 2.0;
  double alpha_end = 0.0;
  int negatives_per_positive = 1;
  int folds = 10;
  double validation_fraction = 0.1;
  int threads = 1;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (alpha_start < 0.0 || alpha_end < 0.0) throw std::invalid_argument("train config: alpha must be >= 0");
    if (negatives_per_positive < 1) throw std::invalid_argument("train config: negatives_per_positive must be >= 1");
    if (folds < 2) throw std::invalid_argument("train config: folds must be >= 2");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      throw std::invalid_argument("train config: validation_fraction must lie in [0, 1)");
    if (threads < 1) throw std::invalid_argument("train config: threads must be >= 1");
  }
};

inline constexpr Index kVertexTaskHidden = 128;

inline nlohmann::json to_json(const GxnConfig& c) {
  nlohmann::json j;
  j["scales"] = c.scales;
  j["keep_ratios"] = c.keep_ratios;
  j["hops"] = c.hops;
  j["hidden"] = c.hidden;
  j["layers_per_scale"] = c.layers_per_scale;
  j["crossing_positions"] = c.crossing_positions ? nlohmann::json(*c.crossing_positions) : nlohmann::json(nullptr);
  j["structure_pool"] = to_string(c.structure_pool);
  j["readout_mode"] = to_string(c.readout_mode);
  j["sortpool_k"] = c.sortpool_k;
  j["selector"] = to_string(c.selector);
  j["affinity"] = to_string(c.affinity);
  j["cross_boundary_scales"] = c.cross_boundary_scales;
  return j;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"alpha_start", c.alpha_start},
          {"alpha_end", c.alpha_end},
          {"negatives_per_positive", c.negatives_per_positive},
          {"folds", c.folds},
          {"validation_fraction", c.validation_fraction},
          {"threads", c.threads}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument(std::string(what) + ": unknown field '" + key + "'");
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace detail

// Missing fields keep their defaults; a vertex task without an explicit
// "hidden" uses the wider vertex default.
inline GxnConfig gxn_config_from_json(const nlohmann::json& j, Task task = Task::graph) {
  detail::reject_unknown(j,
                         {"scales", "keep_ratios", "hops", "hidden", "layers_per_scale", "crossing_positions",
                          "structure_pool", "readout_mode", "sortpool_k", "selector", "affinity",
                          "cross_boundary_scales"},
                         "model config");
  GxnConfig c;
  if (task == Task::vertex) c.hidden = kVertexTaskHidden;
  detail::read_field(j, "scales", c.scales);
  if (j.contains("keep_ratios")) {
    detail::read_field(j, "keep_ratios", c.keep_ratios);
  } else {
    const std::vector<double> defaults{0.8, 0.6, 0.5, 0.5, 0.5, 0.5};
    c.keep_ratios.assign(defaults.begin(), defaults.begin() + std::clamp(c.scales, 0, 6));
  }
  detail::read_field(j, "hops", c.hops);
  detail::read_field(j, "hidden", c.hidden);
  detail::read_field(j, "layers_per_scale", c.layers_per_scale);
  if (j.contains("crossing_positions") && !j.at("crossing_positions").is_null()) {
    std::vector<int> positions;
    detail::read_field(j, "crossing_positions", positions);
    c.crossing_positions = positions;
  }
  if (j.contains("structure_pool")) c.structure_pool = parse_structure_pool(j.at("structure_pool").get<std::string>());
  if (j.contains("readout_mode")) c.readout_mode = parse_readout_mode(j.at("readout_mode").get<std::string>());
  detail::read_field(j, "sortpool_k", c.sortpool_k);
  if (j.contains("selector")) c.selector = parse_selector(j.at("selector").get<std::string>());
  if (j.contains("affinity")) c.affinity = parse_affinity_form(j.at("affinity").get<std::string>());
  detail::read_field(j, "cross_boundary_scales", c.cross_boundary_scales);
  c.validate();
  return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"epochs", "learning_rate", "batch_size", "alpha_start", "alpha_end",
                          "negatives_per_positive", "folds", "validation_fraction", "threads"},
                         "train config");
  TrainConfig c;
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "alpha_start", c.alpha_start);
  detail::read_field(j, "alpha_end", c.alpha_end);
  detail::read_field(j, "negatives_per_positive", c.negatives_per_positive);
  detail::read_field(j, "folds", c.folds);
  detail::read_field(j, "validation_fraction", c.validation_fraction);
  detail::read_field(j, "threads", c.threads);
  c.validate();
  return c;
}

// A run configuration file holds {"model": {...}, "train": {...}}; either
// section may be omitted.
struct RunConfig {
  GxnConfig model;
  TrainConfig train;
};

inline RunConfig run_config_from_json(const nlohmann::json& j, Task task = Task::graph) {
  detail::reject_unknown(j, {"model", "train"}, "run config");
  RunConfig rc;
  rc.model = gxn_config_from_json(j.value("model", nlohmann::json::object()), task);
  rc.train = train_config_from_json(j.value("train", nlohmann::json::object()));
  return rc;
}

inline RunConfig load_run_config(const std::string& path, Task task = Task::graph) {
  if (path.empty()) return run_config_from_json(nlohmann::json::object(), task);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return run_config_from_json(j, task);
}

inline nlohmann::json to_json(const RunConfig& rc) { return {{"model", to_json(rc.model)}, {"train", to_json(rc.train)}}; }

// 16 hex digits of FNV-1a over the canonical (sorted-key) dump.
inline std::string config_hash(const nlohmann::json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical.dump())));
  return buf;
}

inline std::string config_hash(const GxnConfig& c) { return config_hash(to_json(c)); }

}  // namespace gxn
