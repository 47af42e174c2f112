#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prism/autodiff.hpp"
#include "prism/filter_bank.hpp"
#include "prism/router.hpp"
#include "prism/tree.hpp"

namespace prism {

/// Full model configuration: one binary time partition, a filter bank,
/// a router, and M x K forecast heads shared across channels.
struct PrismConfig {
  std::size_t t_context = 336;
  std::size_t t_forecast = 96;
  std::size_t overlap = 8;
  std::size_t depth = 1;  // split iterations; M = 2^depth leaves
  FilterSpec filter;      // haar K=6 by default
  RouterConfig router;
  std::size_t head_hidden = 64;

  std::size_t leaf_count() const { return std::size_t(1) << depth; }
  std::size_t chunk_length() const { return t_context / leaf_count(); }
  PartitionPlan make_plan() const;
  void validate() const;
};

/// All trainable tensors. Deterministically initialized from a seed;
/// iteration order (routers, then heads row-major by (m, k)) is the
/// canonical parameter order for gradients, Adam state, and checkpoints.
struct ModelParams {
  std::vector<MlpParams> routers;
  std::vector<MlpParams> heads;  // index m * K + k
};

ModelParams init_params(const PrismConfig& cfg, std::uint64_t seed);
ModelParams zero_params(const PrismConfig& cfg);  // shapes only
ModelParams zeros_like(const ModelParams& p);
std::size_t param_count(const ModelParams& p);
std::vector<Tensor*> param_tensors(ModelParams& p);
std::vector<const Tensor*> param_tensors(const ModelParams& p);
std::vector<std::string> param_names(const ModelParams& p);

/// Tape ids of bound parameters, same layout as ModelParams.
struct MlpVars {
  VarId w1, b1, w2, b2;
};
struct BoundParams {
  std::vector<MlpVars> routers;
  std::vector<MlpVars> heads;
};
BoundParams bind_params(Tape& t, const ModelParams& p);

/// Reads accumulated gradients for bound parameters into a params-shaped
/// map (zeros where a parameter was never touched).
ModelParams read_grads(const Tape& t, const BoundParams& bound,
                       const ModelParams& shape);

/// Values captured during a forward pass for tracing and export.
struct ForwardCapture {
  std::vector<ImportanceWeights> node_weights;
  std::vector<Tensor> leaf_weighted_bands;  // per leaf, [K, L, C]
  std::vector<Tensor> head_outputs;         // per (m, k) leaf-major, [C x H]
};

/// The forward pass: split to leaves with per-node weighting, per-band
/// cross-fade stitching to full length, then M x K additive heads.
/// Returns the forecast node, shaped [C x T_forecast].
VarId forward(Tape& t, const Tensor& context, const BoundParams& bound,
              const PrismConfig& cfg, ForwardCapture* capture = nullptr);

/// Convenience: forecast values only, no gradient bookkeeping.
Tensor predict(const Tensor& context, const ModelParams& params,
               const PrismConfig& cfg, ForwardCapture* capture = nullptr);

double mse(const Tensor& a, const Tensor& b);
double mae(const Tensor& a, const Tensor& b);
Tensor transpose2(const Tensor& m);

/// Per-(leaf, band) additive breakdown of one forecast.
struct TraceComponent {
  std::size_t leaf = 0;
  std::size_t band = 0;
  double mean_weight = 0.0;  // average router weight over channels
  Tensor context_part;       // [T_context x C], cross-fade envelope applied
  Tensor forecast_part;      // [T_forecast x C]
};

struct ForecastTrace {
  std::vector<TraceComponent> components;   // leaf-major, then band
  std::vector<Tensor> context_cumulative;   // running sums, same order
  std::vector<Tensor> forecast_cumulative;
  Tensor forecast;  // [T_forecast x C]; equals the cumulative's last entry
};

ForecastTrace decompose_trace(const Tensor& context, const ModelParams& params,
                              const PrismConfig& cfg);

}  // namespace prism
