#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gskan/data.hpp"
#include "gskan/network.hpp"
#include "gskan/optim.hpp"

namespace gskan {

enum class TaskKind { kCrossedWave, kCsvRegression, kCsvClassification };
enum class Normalization { kNone, kZscore, kMinMax };

inline std::string task_to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kCrossedWave: return "crossed_wave";
    case TaskKind::kCsvRegression: return "csv_regression";
    case TaskKind::kCsvClassification: return "csv_classification";
  }
  return "?";
}

inline TaskKind task_from_string(const std::string& name) {
  if (name == "crossed_wave") return TaskKind::kCrossedWave;
  if (name == "csv_regression") return TaskKind::kCsvRegression;
  if (name == "csv_classification") return TaskKind::kCsvClassification;
  throw std::invalid_argument("unknown task: '" + name + "'");
}

inline std::string normalization_to_string(Normalization norm) {
  switch (norm) {
    case Normalization::kNone: return "none";
    case Normalization::kZscore: return "zscore";
    case Normalization::kMinMax: return "minmax";
  }
  return "?";
}

inline Normalization normalization_from_string(const std::string& name) {
  if (name == "none") return Normalization::kNone;
  if (name == "zscore") return Normalization::kZscore;
  if (name == "minmax") return Normalization::kMinMax;
  throw std::invalid_argument("unknown normalization: '" + name + "'");
}

struct TaskConfig {
  TaskKind kind = TaskKind::kCrossedWave;
  std::size_t n = 4096;          // synthetic tasks
  double noise_std = 0.01;       // synthetic tasks
  double test_fraction = 0.2;
  std::string path;              // csv tasks
  std::vector<std::size_t> target_columns;  // csv tasks
  bool header = true;            // csv tasks
};

struct ExperimentConfig {
  ModelSpec model;
  TaskConfig task;
  std::size_t epochs = 150;
  std::size_t batch_size = 64;
  AdamHyper optimizer{};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  Normalization normalization = Normalization::kNone;
};

inline void validate_experiment(const ExperimentConfig& config) {
  validate_spec(config.model);
  if (config.epochs < 1) throw std::invalid_argument("experiment: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("experiment: batch_size must be >= 1");
  if (config.seeds.empty()) throw std::invalid_argument("experiment: at least one seed required");
  if (!(config.task.test_fraction > 0.0 && config.task.test_fraction < 1.0)) {
    throw std::invalid_argument("experiment: test_fraction must be in (0, 1)");
  }
  if (config.task.kind == TaskKind::kCrossedWave) {
    if (config.task.n < 2) throw std::invalid_argument("experiment: crossed_wave needs n >= 2");
  } else {
    if (config.task.path.empty()) throw std::invalid_argument("experiment: csv task needs a path");
    if (config.task.target_columns.empty()) {
      throw std::invalid_argument("experiment: csv task needs target columns");
    }
  }
}

// Builds, splits and normalizes the task data. Sub-stream seeds are derived
// from the run seed, so dataset, split and shuffle order all follow it.
inline std::pair<Dataset, Dataset> prepare_task(const ExperimentConfig& config,
                                                std::uint64_t seed) {
  Dataset full;
  switch (config.task.kind) {
    case TaskKind::kCrossedWave:
      full = gen_crossed_wave(config.task.n, mix_seed(seed, 0xDA7A), config.task.noise_std);
      break;
    case TaskKind::kCsvRegression:
      full = load_csv(config.task.path, config.task.target_columns, config.task.header);
      break;
    case TaskKind::kCsvClassification:
      full = load_csv(config.task.path, config.task.target_columns, config.task.header,
                      TargetMode::kLabels);
      break;
  }
  auto [train, test] = train_test_split(full, config.task.test_fraction, mix_seed(seed, 0x5717));
  switch (config.normalization) {
    case Normalization::kNone: break;
    case Normalization::kZscore: {
      const NormStats stats = zscore_fit(train);
      train = zscore_apply(stats, std::move(train));
      test = zscore_apply(stats, std::move(test));
      break;
    }
    case Normalization::kMinMax: {
      const NormStats stats = minmax_fit(train);
      train = minmax_apply(stats, std::move(train), -1.0, 1.0);
      test = minmax_apply(stats, std::move(test), -1.0, 1.0);
      break;
    }
  }
  return {std::move(train), std::move(test)};
}

// Optimum of a per-epoch metric trace; epochs are reported 1-indexed and ties
// resolve to the earliest epoch.
inline std::pair<double, std::size_t> best_of_trace(std::span<const double> trace,
                                                    bool maximize) {
  if (trace.empty()) throw std::invalid_argument("best_of_trace: empty trace");
  double best = trace[0];
  std::size_t best_epoch = 1;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const bool better = maximize ? trace[i] > best : trace[i] < best;
    if (better) {
      best = trace[i];
      best_epoch = i + 1;
    }
  }
  return {best, best_epoch};
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<double> train_trace;  // mean training loss per epoch
  std::vector<double> test_trace;   // full-test metric per epoch
  double best_test = 0.0;
  std::size_t best_epoch = 0;  // 1-indexed
  bool maximize_metric = false;
  double wall_seconds = 0.0;  // informational; never serialized
  Model final_model;
};

// Trains one seed: per-epoch shuffled minibatches through Adam, full test
// evaluation after every epoch, best-test tracking.
inline RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  validate_experiment(config);
  const auto start = std::chrono::steady_clock::now();

  auto [train, test] = prepare_task(config, seed);
  const bool classify = config.task.kind == TaskKind::kCsvClassification;
  if (classify != train.has_labels()) {
    throw std::runtime_error("run_experiment: task kind and dataset targets disagree");
  }

  ModelSpec spec = config.model;
  spec.seed = seed;
  Model model = build_model(spec);
  AdamState state(model.param_count());
  std::vector<double> params = model.params();
  const std::uint64_t shuffle_seed = mix_seed(seed, 0xBA7C);

  RunResult result;
  result.seed = seed;
  result.maximize_metric = classify;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = batch_indices(train.size(), config.batch_size, shuffle_seed, epoch);
    double loss_sum = 0.0;
    std::size_t rows = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Dataset batch = gather_rows(train, batches[bi]);
      auto [pred, caches] = model_forward(model, batch.x);
      const auto [loss, d_pred] = classify ? softmax_cross_entropy(pred, batch.labels)
                                           : mse_loss(pred, batch.y);
      const ModelGrads grads = model_backward(model, caches, d_pred);
      try {
        adam_step(params, grads.params, state, config.optimizer);
      } catch (const std::exception& e) {
        throw std::runtime_error("run_experiment: seed " + std::to_string(seed) + ", epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(bi) + ": " +
                                 e.what());
      }
      model.set_params(params);
      if (config.model.kind == ModelKind::kWavKan) {
        project_parameters(model);
        params = model.params();
      }
      loss_sum += loss * static_cast<double>(batch.size());
      rows += batch.size();
    }
    result.train_trace.push_back(loss_sum / static_cast<double>(rows));

    const Matrix pred = model_forward(model, test.x).first;
    const double metric =
        classify ? accuracy(pred, test.labels) : mse_loss(pred, test.y).first;
    result.test_trace.push_back(metric);
  }

  std::tie(result.best_test, result.best_epoch) =
      best_of_trace(result.test_trace, result.maximize_metric);
  result.final_model = std::move(model);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

struct Aggregate {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_best;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1); 0 when only one seed
  bool single_seed = false;
  bool maximize_metric = false;
};

inline Aggregate aggregate_runs(const ExperimentConfig& config,
                                const std::vector<RunResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_runs: no runs");
  Aggregate agg;
  agg.config = config;
  agg.maximize_metric = runs.front().maximize_metric;
  for (const RunResult& run : runs) {
    agg.seeds.push_back(run.seed);
    agg.per_seed_best.push_back(run.best_test);
  }
  const double n = static_cast<double>(runs.size());
  for (double v : agg.per_seed_best) agg.mean += v;
  agg.mean /= n;
  if (runs.size() == 1) {
    agg.single_seed = true;
    agg.stddev = 0.0;
  } else {
    double acc = 0.0;
    for (double v : agg.per_seed_best) acc += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(acc / (n - 1.0));
  }
  return agg;
}

// One run per seed, sequentially, merged in seed order.
inline Aggregate run_suite(const ExperimentConfig& config) {
  validate_experiment(config);
  std::vector<RunResult> runs;
  for (std::uint64_t seed : config.seeds) {
    try {
      runs.push_back(run_experiment(config, seed));
    } catch (const std::exception& e) {
      throw std::runtime_error("run_suite: seed " + std::to_string(seed) + " failed: " +
                               e.what());
    }
  }
  return aggregate_runs(config, runs);
}

// ---------------------------------------------------------------------------
// Gradient-check harness
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kKinkMargin = 1e-3;

inline void classify_spline_arg(const KnotVector& kv, double t, std::vector<signed char>& out) {
  // 0 marks "too close to a breakpoint, skip"; otherwise the certificate must
  // agree between the two perturbed evaluations.
  if (std::abs(t - kv.domain_lo) < kKinkMargin || std::abs(t - kv.domain_hi) < kKinkMargin) {
    out.push_back(0);
    return;
  }
  if (kv.degree == 1) {
    for (double knot : kv.knots) {
      if (std::abs(t - knot) < kKinkMargin) {
        out.push_back(0);
        return;
      }
    }
  }
  out.push_back(kv.in_domain(t) ? 1 : -1);
}

// Smoothness certificate of one forward pass: signs of every ReLU
// pre-activation and in/out classification of every spline argument. Two
// evaluations whose certificates differ (or touch a 0 entry) straddle a kink.
inline std::vector<signed char> smoothness_certificate(const Model& model,
                                                       const std::vector<AnyCache>& caches) {
  std::vector<signed char> cert;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, DenseLayer>) {
            if (layer.activation == Activation::kRelu) {
              const auto& cache = std::get<DenseCache>(caches[l]);
              for (double u : cache.pre.values()) {
                cert.push_back(std::abs(u) < kKinkMargin ? 0 : (u > 0.0 ? 1 : -1));
              }
            }
          } else if constexpr (std::is_same_v<T, GsKanLayer>) {
            const auto& cache = std::get<GsKanCache>(caches[l]);
            for (std::size_t b = 0; b < cache.x.rows(); ++b) {
              for (int q = 0; q < layer.n_out; ++q) {
                for (int p = 0; p < layer.n_in; ++p) {
                  classify_spline_arg(layer.basis.kv, cache.x(b, p) + layer.eps[q], cert);
                }
              }
            }
          } else if constexpr (std::is_same_v<T, EdgeSplineKanLayer>) {
            const auto& cache = std::get<EdgeSplineCache>(caches[l]);
            for (double v : cache.x.values()) classify_spline_arg(layer.kv, v, cert);
          }
          // Wav-KAN layers are smooth everywhere.
        },
        model.layers[l]);
  }
  return cert;
}

inline bool certificates_compatible(const std::vector<signed char>& a,
                                    const std::vector<signed char>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0 || b[i] == 0 || a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace detail

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double tolerance = 0.0;
  bool pass = true;
};

// Compares the analytic gradient of the probe loss 0.5*||f(X)||^2 against
// central finite differences, slot by slot, for every parameter group and for
// the input. Slots whose +-step evaluations straddle a ReLU kink or a spline
// domain edge are skipped. `tamper` lets the harness's own sensitivity be
// tested by corrupting the analytic gradient before comparison.
inline GradCheckReport grad_check(
    const ModelSpec& spec, std::size_t probe_batch, double step, double tolerance,
    const std::function<void(const Model&, std::vector<double>&)>& tamper = {}) {
  validate_spec(spec);
  if (probe_batch < 1) throw std::invalid_argument("grad_check: probe_batch must be >= 1");
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");

  Model model = build_model(spec);
  Rng rng(mix_seed(spec.seed, 0x6C));
  Matrix x(probe_batch, spec.widths.front());
  for (auto& v : x.values()) {
    v = rng.uniform(0.8 * spec.domain_lo, 0.8 * spec.domain_hi);
  }

  const auto eval = [&]() -> std::pair<double, std::vector<signed char>> {
    auto [y, caches] = model_forward(model, x);
    double acc = 0.0;
    for (double v : y.values()) acc += v * v;
    return {0.5 * acc, detail::smoothness_certificate(model, caches)};
  };

  auto [y, caches] = model_forward(model, x);
  ModelGrads analytic = model_backward(model, caches, y);
  if (tamper) tamper(model, analytic.params);

  const double rel_floor = 1e-4;
  auto relative = [&](double a, double b) {
    return std::abs(a - b) / std::max({rel_floor, std::abs(a), std::abs(b)});
  };

  GradCheckReport report;
  report.tolerance = tolerance;

  std::vector<double> params = model.params();
  for (const ParamGroup& group : model.registry) {
    GradCheckGroup entry;
    entry.name = group.name;
    for (std::size_t i = group.offset; i < group.offset + group.size; ++i) {
      std::vector<double> perturbed = params;
      perturbed[i] = params[i] + step;
      model.set_params(perturbed);
      const auto [loss_hi, cert_hi] = eval();
      perturbed[i] = params[i] - step;
      model.set_params(perturbed);
      const auto [loss_lo, cert_lo] = eval();
      model.set_params(params);
      if (!detail::certificates_compatible(cert_hi, cert_lo)) {
        ++entry.skipped;
        continue;
      }
      const double fd = (loss_hi - loss_lo) / (2.0 * step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative(analytic.params[i], fd));
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < tolerance;
    report.pass = report.pass && entry.pass;
    report.groups.push_back(std::move(entry));
  }

  GradCheckGroup input;
  input.name = "input";
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + step;
    const auto [loss_hi, cert_hi] = eval();
    x.data()[i] = orig - step;
    const auto [loss_lo, cert_lo] = eval();
    x.data()[i] = orig;
    if (!detail::certificates_compatible(cert_hi, cert_lo)) {
      ++input.skipped;
      continue;
    }
    const double fd = (loss_hi - loss_lo) / (2.0 * step);
    input.max_rel_error = std::max(input.max_rel_error, relative(analytic.dx.data()[i], fd));
    ++input.checked;
  }
  input.pass = input.max_rel_error < tolerance;
  report.pass = report.pass && input.pass;
  report.groups.push_back(std::move(input));
  return report;
}

// Empirical Bayes floor for the crossed-wave task: the MSE of the exact
// target function against noisy labels on a fresh sample.
inline double noise_floor_estimate(std::size_t n, double noise_std, std::uint64_t seed) {
  const Dataset ds = gen_crossed_wave(n, seed, noise_std);
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double residual = ds.y(i, 0) - crossed_wave_target(ds.x(i, 0), ds.x(i, 1));
    acc += residual * residual;
  }
  return acc / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Results emission
// ---------------------------------------------------------------------------

inline std::string resolution_string(const ModelSpec& spec) {
  if (spec.kind == ModelKind::kGsKan) return "K=" + std::to_string(spec.spline_knots);
  if (spec.kind == ModelKind::kEdgeSpline) return "G=" + std::to_string(spec.grid_size);
  return "-";
}

inline std::string architecture_string(const std::vector<int>& widths) {
  std::string out = "[";
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(widths[i]);
  }
  return out + "]";
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& items, const char* sep, Fn&& to_string) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += to_string(items[i]);
  }
  return out;
}

}  // namespace detail

inline std::string results_to_csv(const std::vector<Aggregate>& aggregates) {
  std::string out =
      "model,architecture,resolution,params,metric,best_test_mean,best_test_std,n_seeds,seeds,"
      "per_seed_best\n";
  for (const Aggregate& agg : aggregates) {
    const ModelSpec& spec = agg.config.model;
    out += kind_to_string(spec.kind);
    out += ",\"" + architecture_string(spec.widths) + "\"";
    out += "," + resolution_string(spec);
    out += "," + std::to_string(count_params(spec).total);
    out += agg.maximize_metric ? ",accuracy" : ",mse";
    out += "," + detail::format_double(agg.mean);
    out += "," + detail::format_double(agg.stddev);
    out += "," + std::to_string(agg.seeds.size());
    out += "," + detail::join(agg.seeds, ";", [](std::uint64_t s) { return std::to_string(s); });
    out += "," + detail::join(agg.per_seed_best, ";", detail::format_double);
    out += "\n";
  }
  return out;
}

inline nlohmann::json results_to_json(const std::vector<Aggregate>& aggregates) {
  nlohmann::json rows = nlohmann::json::array();
  for (const Aggregate& agg : aggregates) {
    const ModelSpec& spec = agg.config.model;
    nlohmann::json row;
    row["model"] = kind_to_string(spec.kind);
    row["architecture"] = architecture_string(spec.widths);
    row["resolution"] = resolution_string(spec);
    row["params"] = count_params(spec).total;
    row["metric"] = agg.maximize_metric ? "accuracy" : "mse";
    row["best_test_mean"] = agg.mean;
    row["best_test_std"] = agg.stddev;
    row["n_seeds"] = agg.seeds.size();
    row["seeds"] = agg.seeds;
    row["per_seed_best"] = agg.per_seed_best;
    rows.push_back(std::move(row));
  }
  nlohmann::json doc;
  doc["format"] = "gskan-results";
  doc["version"] = 1;
  doc["rows"] = std::move(rows);
  return doc;
}

inline void emit_results(const std::vector<Aggregate>& aggregates, const std::string& format,
                         const std::string& path) {
  if (aggregates.empty()) throw std::invalid_argument("emit_results: no aggregates");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_results: cannot open '" + path + "' for writing");
  if (format == "csv") {
    out << results_to_csv(aggregates);
  } else if (format == "json") {
    out << results_to_json(aggregates).dump(2) << "\n";
  } else {
    throw std::invalid_argument("emit_results: format must be 'csv' or 'json'");
  }
  if (!out) throw std::runtime_error("emit_results: write failed for '" + path + "'");
}

// Per-seed run record for result files. Wall time is deliberately left out so
// identical configurations rewrite byte-identical files.
inline nlohmann::json run_result_to_json(const RunResult& result) {
  nlohmann::json j;
  j["format"] = "gskan-run";
  j["version"] = 1;
  j["seed"] = result.seed;
  j["metric"] = result.maximize_metric ? "accuracy" : "mse";
  j["train_trace"] = result.train_trace;
  j["test_trace"] = result.test_trace;
  j["best_test"] = result.best_test;
  j["best_epoch"] = result.best_epoch;
  return j;
}

}  // namespace gskan
