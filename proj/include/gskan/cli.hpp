#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gskan/bench.hpp"
#include "gskan/config.hpp"
#include "gskan/data.hpp"
#include "gskan/network.hpp"

namespace gskan {

namespace cli_detail {

inline std::vector<int> parse_arch(const std::string& text) {
  std::vector<int> widths;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string token = text.substr(start, comma == std::string::npos ? comma : comma - start);
    if (token.empty()) {
      throw std::invalid_argument("architecture '" + text + "' has an empty width entry");
    }
    std::size_t used = 0;
    int width = 0;
    try {
      width = std::stoi(token, &used);
    } catch (...) {
      throw std::invalid_argument("architecture '" + text + "': '" + token + "' is not a width");
    }
    if (used != token.size() || width < 1) {
      throw std::invalid_argument("architecture '" + text + "': '" + token + "' is not a width");
    }
    widths.push_back(width);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return widths;
}

inline ModelSpec spec_from_flags(const std::string& kind, const std::string& arch, int knots,
                                 int grid, int degree, const std::string& activation,
                                 double domain_lo, double domain_hi, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = kind_from_string(kind);
  spec.widths = parse_arch(arch);
  spec.spline_knots = knots;
  spec.grid_size = grid;
  spec.degree = degree;
  spec.domain_lo = domain_lo;
  spec.domain_hi = domain_hi;
  spec.activation = activation_from_string(activation);
  spec.seed = seed;
  validate_spec(spec);
  return spec;
}

inline std::string metric_name(bool maximize) { return maximize ? "accuracy" : "mse"; }

inline int cmd_count_params(const ModelSpec& spec) {
  const ParamReport report = count_params(spec);
  std::printf("model: %s  architecture: %s  resolution: %s\n", kind_to_string(spec.kind).c_str(),
              architecture_string(spec.widths).c_str(), resolution_string(spec).c_str());
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    std::printf("layer %zu:", l);
    for (const auto& [name, count] : report.layers[l].groups) {
      std::printf(" %s=%zu", name.c_str(), count);
    }
    std::printf("  (%zu)\n", report.layers[l].total);
  }
  std::printf("total: %zu\n", report.total);
  return 0;
}

inline int cmd_gen_data(const std::string& task, std::size_t n, std::uint64_t seed, double noise,
                        const std::string& out_path) {
  Dataset ds;
  if (task == "crossed_wave") {
    ds = gen_crossed_wave(n, seed, noise);
  } else if (task == "tabular8") {
    ds = gen_tabular8(n, seed, noise);
  } else {
    throw std::invalid_argument("gen-data: unknown task '" + task +
                                "' (expected crossed_wave or tabular8)");
  }
  save_csv(ds, out_path);
  std::printf("wrote %zu rows to %s\n", ds.size(), out_path.c_str());
  return 0;
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_dir) {
  const ExperimentConfig config = load_experiment_config(config_path, overrides);
  std::filesystem::create_directories(out_dir);

  std::vector<RunResult> runs;
  for (std::uint64_t seed : config.seeds) {
    RunResult result = run_experiment(config, seed);
    const std::string tag = "seed" + std::to_string(seed);
    const std::string checkpoint_name = "checkpoint_" + tag + ".json";
    save_checkpoint(result.final_model, (std::filesystem::path(out_dir) / checkpoint_name).string());

    nlohmann::json j = run_result_to_json(result);
    j["checkpoint"] = checkpoint_name;
    std::ofstream out(std::filesystem::path(out_dir) / ("result_" + tag + ".json"));
    if (!out) throw std::runtime_error("train: cannot write result file for " + tag);
    out << j.dump(2) << "\n";

    std::printf("seed %llu: best test %s %.6g at epoch %zu; final %.6g  (%.1fs)\n",
                static_cast<unsigned long long>(seed),
                metric_name(result.maximize_metric).c_str(), result.best_test, result.best_epoch,
                result.test_trace.back(), result.wall_seconds);
    runs.push_back(std::move(result));
  }
  if (runs.size() > 1) {
    const Aggregate agg = aggregate_runs(config, runs);
    std::printf("mean best test %s: %.6g +- %.6g over %zu seeds\n",
                metric_name(agg.maximize_metric).c_str(), agg.mean, agg.stddev,
                agg.seeds.size());
  }
  return 0;
}

inline int cmd_bench(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_prefix, const std::string& format) {
  if (format != "csv" && format != "json" && format != "both") {
    throw std::invalid_argument("bench: --format must be csv, json or both");
  }
  const std::vector<ExperimentConfig> entries = load_suite_config(config_path, overrides);
  std::vector<Aggregate> aggregates;
  for (const ExperimentConfig& entry : entries) {
    std::printf("running %s %s %s (%zu seeds x %zu epochs)...\n",
                kind_to_string(entry.model.kind).c_str(),
                architecture_string(entry.model.widths).c_str(),
                resolution_string(entry.model).c_str(), entry.seeds.size(), entry.epochs);
    std::fflush(stdout);
    aggregates.push_back(run_suite(entry));
    const Aggregate& agg = aggregates.back();
    std::printf("  best test %s: %.6g +- %.6g\n", metric_name(agg.maximize_metric).c_str(),
                agg.mean, agg.stddev);
  }
  if (format == "csv" || format == "both") {
    emit_results(aggregates, "csv", out_prefix + ".csv");
    std::printf("wrote %s.csv\n", out_prefix.c_str());
  }
  if (format == "json" || format == "both") {
    emit_results(aggregates, "json", out_prefix + ".json");
    std::printf("wrote %s.json\n", out_prefix.c_str());
  }
  return 0;
}

inline int cmd_grad_check(const ModelSpec& spec, std::size_t batch, double step,
                          double tolerance) {
  const GradCheckReport report = grad_check(spec, batch, step, tolerance);
  for (const GradCheckGroup& group : report.groups) {
    std::printf("%-12s max rel error %.3e  (checked %zu, skipped %zu)  %s\n", group.name.c_str(),
                group.max_rel_error, group.checked, group.skipped,
                group.pass ? "ok" : "FAIL");
  }
  std::printf("grad-check %s at tolerance %.1e\n", report.pass ? "PASS" : "FAIL",
              report.tolerance);
  return report.pass ? 0 : 1;
}

}  // namespace cli_detail

// Command-line entry point. Exit codes: 0 success, 1 runtime/training
// failure, 2 usage or configuration error.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"GS-KAN function-approximation benchmark harness"};
  app.require_subcommand(1);

  // count-params
  auto* count = app.add_subcommand("count-params", "Print the parameter inventory of a model");
  std::string kind, arch = "2,16,16,1", activation = "silu";
  int knots = 0, grid = 0, degree = 3;
  double domain_lo = -1.0, domain_hi = 1.0;
  std::uint64_t seed = 0;
  count->add_option("--kind", kind, "gskan|mlp|wavkan|edgespline")->required();
  count->add_option("--arch", arch, "comma-separated widths, e.g. 2,16,16,1")->required();
  count->add_option("--knots", knots, "spline knot count K (gskan)");
  count->add_option("--grid", grid, "grid size G (edgespline)");
  count->add_option("--degree", degree, "spline degree");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  std::string task = "crossed_wave", out_path = "data.csv";
  std::size_t n = 4096;
  double noise = 0.01;
  gen->add_option("--task", task, "crossed_wave|tabular8");
  gen->add_option("--n", n, "number of samples");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--noise", noise, "target noise stddev");
  gen->add_option("--out", out_path, "output CSV path")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one experiment config");
  std::string config_path, out_dir = "runs";
  std::vector<std::string> overrides;
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--set", overrides, "override, e.g. --set optimizer.lr=0.01");
  train->add_option("--out", out_dir, "output directory for results and checkpoints");

  // bench
  auto* bench = app.add_subcommand("bench", "Run a suite config and emit the results table");
  std::string suite_path, out_prefix = "results", format = "both";
  std::vector<std::string> bench_overrides;
  bench->add_option("--config", suite_path, "suite config JSON")->required();
  bench->add_option("--set", bench_overrides, "override, e.g. --set entries.0.epochs=10");
  bench->add_option("--out", out_prefix, "output path prefix (writes <prefix>.csv/.json)");
  bench->add_option("--format", format, "csv|json|both");

  // grad-check
  auto* check = app.add_subcommand("grad-check", "Finite-difference check of all gradients");
  std::string check_kind, check_arch = "2,4,1", check_activation = "silu";
  int check_knots = 0, check_grid = 0, check_degree = 3;
  double tolerance = 1e-4, step = 1e-5;
  std::size_t batch = 4;
  std::uint64_t check_seed = 0;
  check->add_option("--kind", check_kind, "gskan|mlp|wavkan|edgespline")->required();
  check->add_option("--arch", check_arch, "comma-separated widths");
  check->add_option("--knots", check_knots, "spline knot count K (gskan)");
  check->add_option("--grid", check_grid, "grid size G (edgespline)");
  check->add_option("--degree", check_degree, "spline degree");
  check->add_option("--activation", check_activation, "mlp activation: relu|silu");
  check->add_option("--tolerance", tolerance, "max relative error");
  check->add_option("--step", step, "finite difference step");
  check->add_option("--batch", batch, "probe batch size");
  check->add_option("--seed", check_seed, "probe seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (count->parsed()) {
      return cli_detail::cmd_count_params(cli_detail::spec_from_flags(
          kind, arch, knots, grid, degree, activation, domain_lo, domain_hi, seed));
    }
    if (gen->parsed()) {
      return cli_detail::cmd_gen_data(task, n, seed, noise, out_path);
    }
    if (train->parsed()) {
      return cli_detail::cmd_train(config_path, overrides, out_dir);
    }
    if (bench->parsed()) {
      return cli_detail::cmd_bench(suite_path, bench_overrides, out_prefix, format);
    }
    if (check->parsed()) {
      return cli_detail::cmd_grad_check(
          cli_detail::spec_from_flags(check_kind, check_arch, check_knots, check_grid,
                                      check_degree, check_activation, domain_lo, domain_hi,
                                      check_seed),
          batch, step, tolerance);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

inline int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("gskan");
  for (const std::string& arg : args) argv.push_back(arg.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gskan
