#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gskan/bench.hpp"
#include "gskan/network.hpp"

namespace gskan {

inline constexpr int kConfigVersion = 1;

// All configuration problems (missing file, bad JSON, unknown keys, schema
// violations) surface as std::invalid_argument so the CLI can map them to the
// usage-error exit code.

namespace detail {

inline nlohmann::json parse_override_value(const std::string& text) {
  const nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return nlohmann::json(text);  // bare words are strings
}

}  // namespace detail

// Applies one "dotted.path=value" override onto a JSON document. Array
// elements are addressed by numeric tokens. The value is parsed as JSON when
// possible and treated as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' must look like path.to.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const nlohmann::json value = detail::parse_override_value(assignment.substr(eq + 1));

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  std::vector<std::string> tokens;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    tokens.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const std::string& token = tokens[i];
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(token);
      } catch (...) {
        throw std::invalid_argument("override '" + assignment + "': '" + token +
                                    "' is not an array index");
      }
      if (index >= node->size()) {
        throw std::invalid_argument("override '" + assignment + "': index " + token +
                                    " out of range");
      }
      node = &(*node)[index];
    } else {
      node = &(*node)[token];
    }
  }
  const std::string& leaf = tokens.back();
  if (node->is_array()) {
    std::size_t index = 0;
    try {
      index = std::stoul(leaf);
    } catch (...) {
      throw std::invalid_argument("override '" + assignment + "': '" + leaf +
                                  "' is not an array index");
    }
    if (index >= node->size()) {
      throw std::invalid_argument("override '" + assignment + "': index " + leaf +
                                  " out of range");
    }
    (*node)[index] = value;
  } else {
    (*node)[leaf] = value;
  }
}

inline TaskConfig task_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config.task: must be an object");
  detail::require_keys(
      j, {"name", "n", "noise_std", "test_fraction", "path", "target_columns", "header"},
      "config.task");
  if (!j.contains("name")) throw std::invalid_argument("config.task: 'name' is required");
  TaskConfig task;
  task.kind = task_from_string(j.at("name").get<std::string>());
  task.n = j.value("n", std::size_t{4096});
  task.noise_std = j.value("noise_std", 0.01);
  task.test_fraction = j.value("test_fraction", 0.2);
  task.path = j.value("path", std::string{});
  if (j.contains("target_columns")) {
    task.target_columns = j.at("target_columns").get<std::vector<std::size_t>>();
  }
  task.header = j.value("header", true);
  return task;
}

inline AdamHyper optimizer_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config.optimizer: must be an object");
  detail::require_keys(j, {"lr", "beta1", "beta2", "eps_hat"}, "config.optimizer");
  AdamHyper hyper;
  hyper.lr = j.value("lr", hyper.lr);
  hyper.beta1 = j.value("beta1", hyper.beta1);
  hyper.beta2 = j.value("beta2", hyper.beta2);
  hyper.eps_hat = j.value("eps_hat", hyper.eps_hat);
  return hyper;
}

// Parses one experiment body (everything except the version tag).
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: experiment must be an object");
  detail::require_keys(
      j, {"model", "task", "epochs", "batch_size", "optimizer", "seeds", "normalization"},
      "config");
  if (!j.contains("model") || !j.contains("task")) {
    throw std::invalid_argument("config: 'model' and 'task' are required");
  }
  ExperimentConfig config;
  config.model = model_spec_from_json(j.at("model"), "config.model");
  config.task = task_from_json(j.at("task"));
  config.epochs = j.value("epochs", std::size_t{150});
  config.batch_size = j.value("batch_size", std::size_t{64});
  if (j.contains("optimizer")) config.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("seeds")) config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("normalization")) {
    config.normalization = normalization_from_string(j.at("normalization").get<std::string>());
  }
  validate_experiment(config);
  return config;
}

namespace detail {

inline nlohmann::json load_config_document(const std::string& path,
                                           const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    throw std::invalid_argument("config: '" + path + "' is not valid JSON");
  }
  for (const std::string& assignment : overrides) apply_override(doc, assignment);
  if (!doc.is_object() || doc.value("version", -1) != kConfigVersion) {
    throw std::invalid_argument("config: '" + path + "' must carry \"version\": " +
                                std::to_string(kConfigVersion));
  }
  return doc;
}

}  // namespace detail

// Single-experiment config file: {"version": 1, <experiment body>}.
inline ExperimentConfig load_experiment_config(const std::string& path,
                                               const std::vector<std::string>& overrides = {}) {
  nlohmann::json doc = detail::load_config_document(path, overrides);
  doc.erase("version");
  try {
    return experiment_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: '" + path + "': " + e.what());
  }
}

// Suite config file: {"version": 1, "entries": [<experiment body>, ...]}.
inline std::vector<ExperimentConfig> load_suite_config(
    const std::string& path, const std::vector<std::string>& overrides = {}) {
  const nlohmann::json doc = detail::load_config_document(path, overrides);
  detail::require_keys(doc, {"version", "entries"}, "suite config");
  if (!doc.contains("entries") || !doc.at("entries").is_array() || doc.at("entries").empty()) {
    throw std::invalid_argument("suite config: 'entries' must be a nonempty array");
  }
  std::vector<ExperimentConfig> entries;
  for (std::size_t i = 0; i < doc.at("entries").size(); ++i) {
    try {
      entries.push_back(experiment_from_json(doc.at("entries")[i]));
    } catch (const std::exception& e) {
      throw std::invalid_argument("suite config: entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return entries;
}

}  // namespace gskan
