#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gskan/layers.hpp"
#include "gskan/matrix.hpp"
#include "gskan/rng.hpp"
#include "gskan/spline.hpp"

namespace gskan {

enum class ModelKind { kGsKan, kMlp, kWavKan, kEdgeSpline };

inline std::string kind_to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGsKan: return "gskan";
    case ModelKind::kMlp: return "mlp";
    case ModelKind::kWavKan: return "wavkan";
    case ModelKind::kEdgeSpline: return "edgespline";
  }
  return "?";
}

inline ModelKind kind_from_string(const std::string& name) {
  if (name == "gskan") return ModelKind::kGsKan;
  if (name == "mlp") return ModelKind::kMlp;
  if (name == "wavkan") return ModelKind::kWavKan;
  if (name == "edgespline") return ModelKind::kEdgeSpline;
  throw std::invalid_argument("unknown model kind: '" + name + "'");
}

inline std::string activation_to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSilu: return "silu";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "silu") return Activation::kSilu;
  throw std::invalid_argument("unknown activation: '" + name + "'");
}

// Architecture description. `spline_knots` (K) applies to gskan only and
// `grid_size` (G) to edgespline only; the unused field stays 0.
struct ModelSpec {
  ModelKind kind = ModelKind::kGsKan;
  std::vector<int> widths;
  int spline_knots = 0;
  int grid_size = 0;
  int degree = 3;
  double domain_lo = -1.0;
  double domain_hi = 1.0;
  Activation activation = Activation::kSilu;  // hidden layers, mlp only
  std::uint64_t seed = 0;
};

inline void validate_spec(const ModelSpec& spec) {
  if (spec.widths.size() < 2) {
    throw std::invalid_argument("model spec: widths must list at least input and output");
  }
  for (int w : spec.widths) {
    if (w < 1) throw std::invalid_argument("model spec: widths must be >= 1");
  }
  if (spec.degree < 1 || spec.degree > kMaxDegree) {
    throw std::invalid_argument("model spec: degree out of range");
  }
  if (!(spec.domain_lo < spec.domain_hi)) {
    throw std::invalid_argument("model spec: domain must satisfy lo < hi");
  }
  switch (spec.kind) {
    case ModelKind::kGsKan:
      if (spec.spline_knots < 2 * spec.degree + 2) {
        throw std::invalid_argument("model spec: gskan requires spline_knots >= 2*degree+2");
      }
      if (spec.grid_size != 0) {
        throw std::invalid_argument("model spec: grid_size is not a gskan field");
      }
      break;
    case ModelKind::kEdgeSpline:
      if (spec.grid_size < 1) {
        throw std::invalid_argument("model spec: edgespline requires grid_size >= 1");
      }
      if (spec.spline_knots != 0) {
        throw std::invalid_argument("model spec: spline_knots is not an edgespline field");
      }
      break;
    case ModelKind::kMlp:
      if (spec.activation != Activation::kRelu && spec.activation != Activation::kSilu) {
        throw std::invalid_argument("model spec: mlp activation must be relu or silu");
      }
      [[fallthrough]];
    case ModelKind::kWavKan:
      if (spec.spline_knots != 0 || spec.grid_size != 0) {
        throw std::invalid_argument("model spec: resolution fields apply to spline kinds only");
      }
      break;
  }
}

// ---------------------------------------------------------------------------
// Parameter counting
// ---------------------------------------------------------------------------

struct LayerParamCount {
  std::vector<std::pair<std::string, std::size_t>> groups;
  std::size_t total = 0;
};

struct ParamReport {
  std::vector<LayerParamCount> layers;
  std::size_t total = 0;
};

inline ParamReport count_params(const ModelSpec& spec) {
  validate_spec(spec);
  ParamReport report;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t n_in = static_cast<std::size_t>(spec.widths[l]);
    const std::size_t n_out = static_cast<std::size_t>(spec.widths[l + 1]);
    LayerParamCount layer;
    switch (spec.kind) {
      case ModelKind::kGsKan: {
        const std::size_t coeffs = static_cast<std::size_t>(spec.spline_knots - spec.degree - 1);
        layer.groups = {{"lambda", n_in * n_out}, {"eps", n_out}, {"coeffs", coeffs}};
        break;
      }
      case ModelKind::kMlp:
        layer.groups = {{"weight", n_in * n_out}, {"bias", n_out}};
        break;
      case ModelKind::kWavKan:
        layer.groups = {{"w", n_in * n_out}, {"s", n_in * n_out}, {"t", n_in * n_out}};
        break;
      case ModelKind::kEdgeSpline: {
        const std::size_t basis = static_cast<std::size_t>(spec.grid_size + spec.degree);
        layer.groups = {{"base_w", n_in * n_out},
                        {"scale", n_in * n_out},
                        {"coeffs", n_in * n_out * basis}};
        break;
      }
    }
    for (const auto& [name, count] : layer.groups) layer.total += count;
    report.total += layer.total;
    report.layers.push_back(std::move(layer));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

using AnyLayer = std::variant<GsKanLayer, DenseLayer, WavKanLayer, EdgeSplineKanLayer>;
using AnyCache = std::variant<GsKanCache, DenseCache, WavKanCache, EdgeSplineCache>;

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Mutable views of a layer's parameter groups, in registry order.
inline std::vector<std::pair<std::string, std::span<double>>> layer_param_groups(AnyLayer& layer) {
  using Group = std::pair<std::string, std::span<double>>;
  return std::visit(
      [](auto& l) -> std::vector<Group> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GsKanLayer>) {
          return {{"lambda", l.lambda.values()}, {"eps", l.eps}, {"coeffs", l.basis.coeffs}};
        } else if constexpr (std::is_same_v<T, DenseLayer>) {
          return {{"weight", l.weights.values()}, {"bias", l.biases}};
        } else if constexpr (std::is_same_v<T, WavKanLayer>) {
          return {{"w", l.weight.values()}, {"s", l.scale.values()}, {"t", l.shift.values()}};
        } else {
          return {{"base_w", l.base_weight.values()},
                  {"scale", l.spline_scale.values()},
                  {"coeffs", l.coeffs}};
        }
      },
      layer);
}

inline std::vector<std::pair<std::string, std::span<const double>>> layer_param_groups(
    const AnyLayer& layer) {
  // Read-only view over the same storage.
  auto groups = layer_param_groups(const_cast<AnyLayer&>(layer));
  std::vector<std::pair<std::string, std::span<const double>>> out;
  out.reserve(groups.size());
  for (auto& [name, span] : groups) out.emplace_back(name, span);
  return out;
}

// A realized layer stack plus a flat registry mapping every learnable scalar
// to one slot. Optimizers work on the flat vector; gather/scatter moves
// values between the two representations.
struct Model {
  ModelSpec spec;
  std::vector<AnyLayer> layers;
  std::vector<ParamGroup> registry;

  std::size_t param_count() const {
    return registry.empty() ? 0 : registry.back().offset + registry.back().size;
  }

  std::vector<double> params() const {
    std::vector<double> flat(param_count());
    std::size_t g = 0;
    for (const auto& layer : layers) {
      for (const auto& [name, span] : layer_param_groups(layer)) {
        const ParamGroup& group = registry[g++];
        for (std::size_t i = 0; i < span.size(); ++i) flat[group.offset + i] = span[i];
      }
    }
    return flat;
  }

  void set_params(std::span<const double> flat) {
    if (flat.size() != param_count()) {
      throw std::invalid_argument("Model::set_params: length mismatch");
    }
    std::size_t g = 0;
    for (auto& layer : layers) {
      for (auto& [name, span] : layer_param_groups(layer)) {
        const ParamGroup& group = registry[g++];
        for (std::size_t i = 0; i < span.size(); ++i) span[i] = flat[group.offset + i];
      }
    }
  }
};

namespace detail {

inline void build_registry(Model& model) {
  std::size_t offset = 0;
  int index = 0;
  for (auto& layer : model.layers) {
    for (const auto& [name, span] : layer_param_groups(layer)) {
      model.registry.push_back(
          ParamGroup{"L" + std::to_string(index) + "." + name, offset, span.size()});
      offset += span.size();
    }
    ++index;
  }
}

}  // namespace detail

// Builds a model with the documented initialization: one RNG seeded from
// spec.seed drives all draws, layer by layer, group by group, row-major.
//   gskan:      lambda ~ U(-sqrt(1/n_in), sqrt(1/n_in)); eps ~ U(+-5% of the
//               domain width); psi coefficients = silu at the Greville points
//               (so the initial map is a smooth MLP-like function).
//   mlp:        weights ~ U(-sqrt(1/n_in), sqrt(1/n_in)); biases 0.
//   wavkan:     w as lambda; s = 1; t ~ U(domain).
//   edgespline: base weights as mlp; scalers 1; coefficients ~ N(0, 0.1).
inline Model build_model(const ModelSpec& spec) {
  validate_spec(spec);
  Model model;
  model.spec = spec;
  Rng rng(spec.seed);

  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const int n_in = spec.widths[l];
    const int n_out = spec.widths[l + 1];
    const double weight_bound = std::sqrt(1.0 / n_in);
    switch (spec.kind) {
      case ModelKind::kGsKan: {
        GsKanLayer layer;
        layer.n_in = n_in;
        layer.n_out = n_out;
        layer.lambda = Matrix(n_out, n_in);
        const double lambda_bound = std::sqrt(3.0 / n_in);
        for (auto& v : layer.lambda.values()) v = rng.uniform(-lambda_bound, lambda_bound);
        layer.eps.resize(n_out);
        const double shift_bound = 0.05 * (spec.domain_hi - spec.domain_lo);
        for (auto& e : layer.eps) e = rng.uniform(-shift_bound, shift_bound);
        KnotVector kv =
            build_uniform_knots(spec.domain_lo, spec.domain_hi, spec.spline_knots, spec.degree);
        std::vector<double> coeffs = greville_abscissae(kv);
        for (auto& c : coeffs) c = silu(c) + rng.normal(0.0, 0.1);
        layer.basis = make_shared_basis(std::move(kv), std::move(coeffs));
        model.layers.emplace_back(std::move(layer));
        break;
      }
      case ModelKind::kMlp: {
        DenseLayer layer;
        layer.n_in = n_in;
        layer.n_out = n_out;
        layer.weights = Matrix(n_out, n_in);
        for (auto& v : layer.weights.values()) v = rng.uniform(-weight_bound, weight_bound);
        layer.biases.assign(n_out, 0.0);
        const bool last = (l + 2 == spec.widths.size());
        layer.activation = last ? Activation::kIdentity : spec.activation;
        model.layers.emplace_back(std::move(layer));
        break;
      }
      case ModelKind::kWavKan: {
        WavKanLayer layer;
        layer.n_in = n_in;
        layer.n_out = n_out;
        layer.weight = Matrix(n_out, n_in);
        for (auto& v : layer.weight.values()) v = rng.uniform(-weight_bound, weight_bound);
        layer.scale = Matrix(n_out, n_in, 1.0);
        layer.shift = Matrix(n_out, n_in);
        for (auto& v : layer.shift.values()) v = rng.uniform(spec.domain_lo, spec.domain_hi);
        model.layers.emplace_back(std::move(layer));
        break;
      }
      case ModelKind::kEdgeSpline: {
        EdgeSplineKanLayer layer;
        layer.n_in = n_in;
        layer.n_out = n_out;
        layer.kv = build_uniform_knots(spec.domain_lo, spec.domain_hi,
                                       spec.grid_size + 2 * spec.degree + 1, spec.degree);
        layer.base_weight = Matrix(n_out, n_in);
        for (auto& v : layer.base_weight.values()) v = rng.uniform(-weight_bound, weight_bound);
        layer.spline_scale = Matrix(n_out, n_in, 1.0);
        layer.coeffs.resize(static_cast<std::size_t>(n_out) * n_in * layer.kv.basis_count());
        for (auto& c : layer.coeffs) c = rng.normal(0.0, 0.1);
        model.layers.emplace_back(std::move(layer));
        break;
      }
    }
  }

  detail::build_registry(model);
  if (model.param_count() != count_params(spec).total) {
    throw std::logic_error("build_model: realized parameter count disagrees with count_params");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward over the stack
// ---------------------------------------------------------------------------

inline std::pair<Matrix, std::vector<AnyCache>> model_forward(const Model& model, const Matrix& x) {
  require_cols(x, static_cast<std::size_t>(model.spec.widths.front()), "model_forward");
  std::vector<AnyCache> caches;
  caches.reserve(model.layers.size());
  Matrix current = x;
  for (const auto& layer : model.layers) {
    std::visit(
        [&](const auto& l) {
          auto [y, cache] = [&] {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, GsKanLayer>) return gskan_forward(l, current);
            else if constexpr (std::is_same_v<T, DenseLayer>) return dense_forward(l, current);
            else if constexpr (std::is_same_v<T, WavKanLayer>) return wavkan_forward(l, current);
            else return edgespline_forward(l, current);
          }();
          current = std::move(y);
          caches.emplace_back(std::move(cache));
        },
        layer);
  }
  return {std::move(current), std::move(caches)};
}

struct ModelGrads {
  std::vector<double> params;  // aligned with the registry
  Matrix dx;                   // gradient w.r.t. the network input
};

inline ModelGrads model_backward(const Model& model, const std::vector<AnyCache>& caches,
                                 const Matrix& dy) {
  if (caches.size() != model.layers.size()) {
    throw std::invalid_argument("model_backward: cache count does not match layer count");
  }
  ModelGrads out;
  out.params.assign(model.param_count(), 0.0);

  const std::size_t groups_per_layer = model.registry.size() / model.layers.size();
  auto slot = [&](std::size_t layer_index, std::size_t group_index) -> double* {
    return out.params.data() + model.registry[layer_index * groups_per_layer + group_index].offset;
  };
  auto copy_into = [](std::span<const double> src, double* dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  };

  Matrix current = dy;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, GsKanLayer>) {
            GsKanGrads g = gskan_backward(layer, std::get<GsKanCache>(caches[l]), current);
            copy_into(g.d_lambda.values(), slot(l, 0));
            copy_into(g.d_eps, slot(l, 1));
            copy_into(g.d_coeffs, slot(l, 2));
            current = std::move(g.dx);
          } else if constexpr (std::is_same_v<T, DenseLayer>) {
            DenseGrads g = dense_backward(layer, std::get<DenseCache>(caches[l]), current);
            copy_into(g.d_weights.values(), slot(l, 0));
            copy_into(g.d_biases, slot(l, 1));
            current = std::move(g.dx);
          } else if constexpr (std::is_same_v<T, WavKanLayer>) {
            WavKanGrads g = wavkan_backward(layer, std::get<WavKanCache>(caches[l]), current);
            copy_into(g.d_weight.values(), slot(l, 0));
            copy_into(g.d_scale.values(), slot(l, 1));
            copy_into(g.d_shift.values(), slot(l, 2));
            current = std::move(g.dx);
          } else {
            EdgeSplineGrads g =
                edgespline_backward(layer, std::get<EdgeSplineCache>(caches[l]), current);
            copy_into(g.d_base_weight.values(), slot(l, 0));
            copy_into(g.d_spline_scale.values(), slot(l, 1));
            copy_into(g.d_coeffs, slot(l, 2));
            current = std::move(g.dx);
          }
        },
        model.layers[l]);
  }
  out.dx = std::move(current);
  return out;
}

// Post-step constraint projection. Wav-KAN scales must stay bounded away
// from zero; other kinds are unconstrained.
inline void project_parameters(Model& model) {
  if (model.spec.kind != ModelKind::kWavKan) return;
  for (auto& layer : model.layers) {
    auto& wav = std::get<WavKanLayer>(layer);
    for (auto& s : wav.scale.values()) {
      if (std::abs(s) < kWavKanScaleFloor) s = (s < 0.0) ? -kWavKanScaleFloor : kWavKanScaleFloor;
    }
  }
}

// ---------------------------------------------------------------------------
// Spec JSON and checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const auto& a : allowed) {
      if (key == a) known = true;
    }
    if (!known) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

inline std::string double_to_hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double hex_to_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + s.size() || s.empty()) {
    throw std::invalid_argument(where + ": malformed float literal '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["kind"] = kind_to_string(spec.kind);
  j["widths"] = spec.widths;
  j["degree"] = spec.degree;
  j["domain"] = {spec.domain_lo, spec.domain_hi};
  j["seed"] = spec.seed;
  if (spec.kind == ModelKind::kGsKan) j["spline_knots"] = spec.spline_knots;
  if (spec.kind == ModelKind::kEdgeSpline) j["grid_size"] = spec.grid_size;
  if (spec.kind == ModelKind::kMlp) j["activation"] = activation_to_string(spec.activation);
  return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": model spec must be an object");
  detail::require_keys(
      j, {"kind", "widths", "spline_knots", "grid_size", "degree", "domain", "activation", "seed"},
      where);
  ModelSpec spec;
  if (!j.contains("kind") || !j.contains("widths")) {
    throw std::invalid_argument(where + ": model spec requires 'kind' and 'widths'");
  }
  spec.kind = kind_from_string(j.at("kind").get<std::string>());
  spec.widths = j.at("widths").get<std::vector<int>>();
  spec.spline_knots = j.value("spline_knots", 0);
  spec.grid_size = j.value("grid_size", 0);
  spec.degree = j.value("degree", 3);
  if (j.contains("domain")) {
    const auto domain = j.at("domain").get<std::vector<double>>();
    if (domain.size() != 2) throw std::invalid_argument(where + ": domain must be [lo, hi]");
    spec.domain_lo = domain[0];
    spec.domain_hi = domain[1];
  }
  if (j.contains("activation")) {
    spec.activation = activation_from_string(j.at("activation").get<std::string>());
  }
  spec.seed = j.value("seed", std::uint64_t{0});
  validate_spec(spec);
  return spec;
}

inline constexpr const char* kCheckpointFormat = "gskan-model";
inline constexpr int kCheckpointVersion = 1;

// Versioned JSON checkpoint. Parameters are stored as hex-float strings so
// the round trip is bit-exact.
inline void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["spec"] = model_spec_to_json(model.spec);
  j["param_count"] = model.param_count();
  nlohmann::json params = nlohmann::json::object();
  std::size_t g = 0;
  for (const auto& layer : model.layers) {
    for (const auto& [name, span] : layer_param_groups(layer)) {
      nlohmann::json values = nlohmann::json::array();
      for (double v : span) values.push_back(detail::double_to_hex(v));
      params[model.registry[g++].name] = std::move(values);
    }
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: '" + path + "' is not valid JSON: " + e.what());
  }
  detail::require_keys(j, {"format", "version", "spec", "param_count", "params"}, "checkpoint");
  if (j.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("load_checkpoint: unexpected format tag");
  }
  if (j.value("version", -1) != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version");
  }
  const ModelSpec spec = model_spec_from_json(j.at("spec"), "checkpoint.spec");
  Model model = build_model(spec);
  if (j.at("param_count").get<std::size_t>() != model.param_count()) {
    throw std::runtime_error("load_checkpoint: declared param_count does not match the spec");
  }
  const auto& params = j.at("params");
  if (!params.is_object() || params.size() != model.registry.size()) {
    throw std::runtime_error("load_checkpoint: params must hold one array per registry group");
  }
  std::size_t g = 0;
  for (auto& layer : model.layers) {
    for (auto& [name, span] : layer_param_groups(layer)) {
      const std::string& group_name = model.registry[g++].name;
      if (!params.contains(group_name)) {
        throw std::runtime_error("load_checkpoint: missing parameter group '" + group_name + "'");
      }
      const auto& values = params.at(group_name);
      if (!values.is_array() || values.size() != span.size()) {
        throw std::runtime_error("load_checkpoint: group '" + group_name + "' has wrong length");
      }
      for (std::size_t i = 0; i < span.size(); ++i) {
        span[i] = detail::hex_to_double(values[i].get<std::string>(), "checkpoint." + group_name);
        if (!std::isfinite(span[i])) {
          throw std::runtime_error("load_checkpoint: non-finite value in '" + group_name + "'");
        }
      }
    }
  }
  return model;
}

inline Model load_checkpoint(const std::string& path, ModelKind expected) {
  Model model = load_checkpoint(path);
  if (model.spec.kind != expected) {
    throw std::runtime_error("load_checkpoint: checkpoint holds a " +
                             kind_to_string(model.spec.kind) + " model, expected " +
                             kind_to_string(expected));
  }
  return model;
}

}  // namespace gskan
