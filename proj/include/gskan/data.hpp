#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gskan/matrix.hpp"
#include "gskan/rng.hpp"

namespace gskan {

// Feature matrix plus either regression targets or integer class labels.
struct Dataset {
  Matrix x;                 // [N x D]
  Matrix y;                 // [N x T]; empty when labels are used
  std::vector<int> labels;  // [N]; empty for regression
  std::vector<std::string> feature_names;

  std::size_t size() const { return x.rows(); }
  bool has_labels() const { return !labels.empty(); }
};

inline double crossed_wave_target(double x, double y) {
  constexpr double three_pi = 3.0 * 3.14159265358979323846;
  return std::sin(three_pi * x) * std::cos(three_pi * y);
}

// 2D crossed-wave regression data: inputs uniform over [-1,1]^2, targets
// sin(3*pi*x)*cos(3*pi*y) plus Gaussian noise.
inline Dataset gen_crossed_wave(std::size_t n, std::uint64_t seed, double noise_std) {
  if (n < 1) throw std::invalid_argument("gen_crossed_wave: n must be >= 1");
  if (noise_std < 0.0) throw std::invalid_argument("gen_crossed_wave: noise_std must be >= 0");
  Rng rng(seed);
  Dataset ds;
  ds.x = Matrix(n, 2);
  ds.y = Matrix(n, 1);
  ds.feature_names = {"x", "y", "target"};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    ds.x(i, 0) = a;
    ds.x(i, 1) = b;
    ds.y(i, 0) = crossed_wave_target(a, b);
    if (noise_std > 0.0) ds.y(i, 0) += rng.normal(0.0, noise_std);
  }
  return ds;
}

// Synthetic 8-feature tabular regression task; a hermetic stand-in for
// real-world housing-style data in CSV pipeline tests.
inline Dataset gen_tabular8(std::size_t n, std::uint64_t seed, double noise_std) {
  if (n < 1) throw std::invalid_argument("gen_tabular8: n must be >= 1");
  Rng rng(seed);
  Dataset ds;
  ds.x = Matrix(n, 8);
  ds.y = Matrix(n, 1);
  ds.feature_names = {"f0", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "target"};
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 8; ++j) ds.x(i, j) = rng.uniform(-2.0, 2.0);
    const double* f = &ds.x(i, 0);
    double target = std::sin(f[0]) + 0.5 * f[1] * f[2] + 0.3 * f[3] * f[3] -
                    0.7 * std::tanh(f[4]) + 0.2 * f[5] - 0.4 * f[6] * std::sin(f[7]);
    if (noise_std > 0.0) target += rng.normal(0.0, noise_std);
    ds.y(i, 0) = target;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

enum class NormKind { kZscore, kMinMax };

// Per-feature statistics, always fitted on training data only.
struct NormStats {
  NormKind kind = NormKind::kZscore;
  std::vector<double> a;  // mean (zscore) or min (minmax)
  std::vector<double> b;  // stddev (zscore) or max (minmax)
};

inline NormStats zscore_fit(const Dataset& train) {
  if (train.size() == 0) throw std::invalid_argument("zscore_fit: empty dataset");
  const std::size_t d = train.x.cols();
  NormStats stats;
  stats.kind = NormKind::kZscore;
  stats.a.assign(d, 0.0);
  stats.b.assign(d, 0.0);
  const double n = static_cast<double>(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) mean += train.x(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double diff = train.x(i, j) - mean;
      var += diff * diff;
    }
    var /= n;
    if (var <= 0.0) {
      throw std::invalid_argument("zscore_fit: feature " + std::to_string(j) +
                                  " has zero variance");
    }
    stats.a[j] = mean;
    stats.b[j] = std::sqrt(var);
  }
  return stats;
}

inline Dataset zscore_apply(const NormStats& stats, Dataset ds) {
  if (stats.kind != NormKind::kZscore) {
    throw std::invalid_argument("zscore_apply: stats were not fitted by zscore_fit");
  }
  if (stats.a.size() != ds.x.cols()) {
    throw std::invalid_argument("zscore_apply: feature count mismatch");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.x.cols(); ++j) {
      ds.x(i, j) = (ds.x(i, j) - stats.a[j]) / stats.b[j];
    }
  }
  return ds;
}

inline NormStats minmax_fit(const Dataset& train) {
  if (train.size() == 0) throw std::invalid_argument("minmax_fit: empty dataset");
  NormStats stats;
  stats.kind = NormKind::kMinMax;
  const std::size_t d = train.x.cols();
  stats.a.assign(d, 0.0);
  stats.b.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double lo = train.x(0, j), hi = train.x(0, j);
    for (std::size_t i = 1; i < train.size(); ++i) {
      lo = std::min(lo, train.x(i, j));
      hi = std::max(hi, train.x(i, j));
    }
    stats.a[j] = lo;
    stats.b[j] = hi;
  }
  return stats;
}

// Affine map of each feature into [lo, hi] using the fitted extremes.
// Constant features map to the midpoint.
inline Dataset minmax_apply(const NormStats& stats, Dataset ds, double lo, double hi) {
  if (stats.kind != NormKind::kMinMax) {
    throw std::invalid_argument("minmax_apply: stats were not fitted by minmax_fit");
  }
  if (stats.a.size() != ds.x.cols()) {
    throw std::invalid_argument("minmax_apply: feature count mismatch");
  }
  const double mid = 0.5 * (lo + hi);
  for (std::size_t j = 0; j < ds.x.cols(); ++j) {
    const double span = stats.b[j] - stats.a[j];
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ds.x(i, j) = (span > 0.0) ? lo + (hi - lo) * (ds.x(i, j) - stats.a[j]) / span : mid;
    }
  }
  return ds;
}

// Self-fitting variant: scales each feature by its own observed range.
inline Dataset minmax_apply(Dataset ds, double lo, double hi) {
  const NormStats stats = minmax_fit(ds);
  return minmax_apply(stats, std::move(ds), lo, hi);
}

// ---------------------------------------------------------------------------
// Splitting & batching
// ---------------------------------------------------------------------------

inline Dataset gather_rows(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.x = Matrix(indices.size(), ds.x.cols());
  out.feature_names = ds.feature_names;
  if (ds.has_labels()) {
    out.labels.resize(indices.size());
  } else {
    out.y = Matrix(indices.size(), ds.y.cols());
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    for (std::size_t j = 0; j < ds.x.cols(); ++j) out.x(r, j) = ds.x(src, j);
    if (ds.has_labels()) {
      out.labels[r] = ds.labels[src];
    } else {
      for (std::size_t j = 0; j < ds.y.cols(); ++j) out.y(r, j) = ds.y(src, j);
    }
  }
  return out;
}

// Seeded permutation, then partition into (train, test).
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("train_test_split: test_fraction must be in (0, 1)");
  }
  const std::size_t n = ds.size();
  if (n < 2) throw std::invalid_argument("train_test_split: need at least 2 rows");
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5917));
  rng.shuffle(order);

  const std::span<const std::size_t> test_idx(order.data(), n_test);
  const std::span<const std::size_t> train_idx(order.data() + n_test, n - n_test);
  return {gather_rows(ds, train_idx), gather_rows(ds, test_idx)};
}

// Per-epoch shuffled batch index lists; the final partial batch is kept.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed,
                                                           std::uint64_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch_indices: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------
// Format: comma-separated decimal floats, optional single header row, UTF-8.

enum class TargetMode { kRegression, kLabels };

inline void save_csv(const Dataset& ds, const std::string& path, bool header = true) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open '" + path + "' for writing");
  const std::size_t d = ds.x.cols();
  const std::size_t t = ds.has_labels() ? 1 : ds.y.cols();
  if (header) {
    for (std::size_t j = 0; j < d + t; ++j) {
      if (j) out << ",";
      if (j < ds.feature_names.size()) {
        out << ds.feature_names[j];
      } else {
        out << (j < d ? "f" + std::to_string(j) : "target" + std::to_string(j - d));
      }
    }
    out << "\n";
  }
  char buf[40];
  auto write_double = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) out << ",";
      write_double(ds.x(i, j));
    }
    if (ds.has_labels()) {
      out << "," << ds.labels[i];
    } else {
      for (std::size_t j = 0; j < ds.y.cols(); ++j) {
        out << ",";
        write_double(ds.y(i, j));
      }
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_csv: write failed for '" + path + "'");
}

// Loads a rectangular numeric CSV and splits the listed target columns out of
// the feature block. Errors carry 1-based line and column numbers.
inline Dataset load_csv(const std::string& path, const std::vector<std::size_t>& target_columns,
                        bool header, TargetMode mode = TargetMode::kRegression) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_fields = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && rows.empty() && names.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }

    if (header && names.empty() && rows.empty()) {
      names = fields;
      expected_fields = fields.size();
      continue;
    }
    if (expected_fields == 0) expected_fields = fields.size();
    if (fields.size() != expected_fields) {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(expected_fields) + " fields, got " +
                               std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string& cell = fields[j];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ", column " +
                                 std::to_string(j + 1) + ": not a number: '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ", column " +
                                 std::to_string(j + 1) + ": non-finite value");
      }
      row[j] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: '" + path + "' has no data rows");

  const std::size_t total_cols = rows[0].size();
  for (std::size_t col : target_columns) {
    if (col >= total_cols) {
      throw std::runtime_error("load_csv: target column " + std::to_string(col) +
                               " out of range (file has " + std::to_string(total_cols) +
                               " columns)");
    }
  }
  if (target_columns.empty()) throw std::invalid_argument("load_csv: no target columns given");
  if (mode == TargetMode::kLabels && target_columns.size() != 1) {
    throw std::invalid_argument("load_csv: label mode takes exactly one target column");
  }

  std::vector<bool> is_target(total_cols, false);
  for (std::size_t col : target_columns) is_target[col] = true;

  Dataset ds;
  const std::size_t n = rows.size();
  const std::size_t d = total_cols - target_columns.size();
  ds.x = Matrix(n, d);
  if (mode == TargetMode::kLabels) {
    ds.labels.resize(n);
  } else {
    ds.y = Matrix(n, target_columns.size());
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t fj = 0, tj = 0;
    for (std::size_t j = 0; j < total_cols; ++j) {
      if (is_target[j]) {
        if (mode == TargetMode::kLabels) {
          const double v = rows[i][j];
          const int label = static_cast<int>(std::llround(v));
          if (std::abs(v - label) > 1e-9) {
            throw std::runtime_error("load_csv: line " + std::to_string(header ? i + 2 : i + 1) +
                                     ": label column holds non-integer value");
          }
          ds.labels[i] = label;
        } else {
          ds.y(i, tj++) = rows[i][j];
        }
      } else {
        ds.x(i, fj++) = rows[i][j];
      }
    }
  }
  if (!names.empty()) ds.feature_names = names;
  return ds;
}

}  // namespace gskan
