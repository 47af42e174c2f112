#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prism/tensor.hpp"

namespace prism {

/// Summary statistics of one band of one channel, the router MLP's input.
struct BandStats {
  double mu = 0.0;     // mean
  double sigma = 0.0;  // population standard deviation
  double a_max = 0.0;  // max |x|
  double d1 = 0.0;     // mean |first difference|
  double d2 = 0.0;     // mean |second difference|
  double crest = 0.0;  // a_max / (sigma + 1e-8)
};

constexpr double kStatsEps = 1e-8;
constexpr double kCrestClamp = 1e6;

/// L must be >= 3 so the second difference is defined.
BandStats band_stats(std::span<const double> x, bool clamp_crest = false);

enum class RouterMode {
  per_level,   // one MLP per tree level (default)
  shared_all,  // one MLP for the whole tree
  per_node,    // one MLP per (level, node)
  uniform,     // no MLP; weights 1/K
  passthrough  // no MLP; weights 1 (plain reconstruction)
};

RouterMode router_mode_from_string(const std::string& s);
std::string to_string(RouterMode m);

struct RouterConfig {
  RouterMode mode = RouterMode::per_level;
  std::size_t hidden = 32;
  double temperature = 1.0;
  bool clamp_crest = false;

  bool has_mlp() const {
    return mode != RouterMode::uniform && mode != RouterMode::passthrough;
  }
  void validate() const;
};

/// Two-layer MLP parameters (shared shape for routers and forecast heads).
struct MlpParams {
  Tensor w1, b1, w2, b2;
};

struct NodeId {
  std::size_t level = 0;  // 1..depth (children levels)
  std::size_t index = 0;  // 0..2^level - 1
};

/// Scores and softmax weights for one tree node; both are [K x C].
struct ImportanceWeights {
  Tensor scores;
  Tensor weights;
  NodeId node;
};

/// Number of parameter groups the sharing mode requires for a tree of the
/// given depth. Children levels 1..depth are scored; a depth-0 tree scores
/// its single root node.
std::size_t router_group_count(RouterMode mode, std::size_t depth);

/// Which group scores the node, per sharing mode.
std::size_t router_group_index(RouterMode mode, NodeId node,
                               std::size_t depth);

/// Reference scorer: s[k][c] = MLP(stats[k][c]), w[.][c] = softmax over k of
/// s/tau. In uniform mode w = 1/K and s = 0; in passthrough mode w = 1.
/// `mlp` may be null for the no-MLP modes.
ImportanceWeights score_and_weight(const std::vector<std::vector<BandStats>>& stats,
                                   const MlpParams* mlp,
                                   const RouterConfig& config, NodeId node);

}  // namespace prism
