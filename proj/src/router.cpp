#include "prism/router.hpp"

#include <algorithm>
#include <cmath>

namespace prism {

BandStats band_stats(std::span<const double> x, bool clamp_crest) {
  const std::size_t L = x.size();
  if (L < 3) {
    throw ConfigError("band_stats: need at least 3 samples, got " +
                      std::to_string(L));
  }
  BandStats s;
  double acc = 0.0;
  for (double v : x) acc += v;
  s.mu = acc / double(L);
  double var = 0.0;
  for (double v : x) {
    var += (v - s.mu) * (v - s.mu);
    s.a_max = std::max(s.a_max, std::abs(v));
  }
  s.sigma = std::sqrt(var / double(L));
  for (std::size_t i = 0; i + 1 < L; ++i) {
    s.d1 += std::abs(x[i + 1] - x[i]);
  }
  s.d1 /= double(L - 1);
  for (std::size_t i = 0; i + 2 < L; ++i) {
    s.d2 += std::abs(x[i + 2] - 2.0 * x[i + 1] + x[i]);
  }
  s.d2 /= double(L - 2);
  s.crest = s.a_max / (s.sigma + kStatsEps);
  if (clamp_crest) s.crest = std::min(s.crest, kCrestClamp);
  return s;
}

RouterMode router_mode_from_string(const std::string& s) {
  if (s == "per_level") return RouterMode::per_level;
  if (s == "shared_all") return RouterMode::shared_all;
  if (s == "per_node") return RouterMode::per_node;
  if (s == "uniform") return RouterMode::uniform;
  if (s == "passthrough") return RouterMode::passthrough;
  throw ConfigError("unknown router mode '" + s +
                    "' (expected per_level|shared_all|per_node|uniform|"
                    "passthrough)");
}

std::string to_string(RouterMode m) {
  switch (m) {
    case RouterMode::per_level: return "per_level";
    case RouterMode::shared_all: return "shared_all";
    case RouterMode::per_node: return "per_node";
    case RouterMode::uniform: return "uniform";
    case RouterMode::passthrough: return "passthrough";
  }
  return "?";
}

void RouterConfig::validate() const {
  if (has_mlp() && hidden < 1) {
    throw ConfigError("router: hidden width must be >= 1");
  }
  if (temperature <= 0.0) {
    throw ConfigError("router: temperature must be > 0");
  }
}

std::size_t router_group_count(RouterMode mode, std::size_t depth) {
  switch (mode) {
    case RouterMode::per_level: return std::max<std::size_t>(depth, 1);
    case RouterMode::shared_all: return 1;
    case RouterMode::per_node:
      return depth == 0 ? 1 : (std::size_t(1) << (depth + 1)) - 2;
    default: return 0;
  }
}

std::size_t router_group_index(RouterMode mode, NodeId node,
                               std::size_t depth) {
  if (depth == 0) {
    if (mode == RouterMode::uniform || mode == RouterMode::passthrough) {
      throw UsageError("router_group_index: mode has no parameters");
    }
    return 0;  // the root is the only scored node
  }
  switch (mode) {
    case RouterMode::per_level:
      return node.level - 1;
    case RouterMode::shared_all:
      return 0;
    case RouterMode::per_node:
      // levels 1..l-1 contribute 2^1 + ... + 2^(l-1) = 2^l - 2 groups
      return ((std::size_t(1) << node.level) - 2) + node.index;
    default:
      throw UsageError("router_group_index: mode has no parameters");
  }
}

namespace {

double mlp_score(const MlpParams& p, const BandStats& s) {
  const double in[6] = {s.mu, s.sigma, s.a_max, s.d1, s.d2, s.crest};
  const std::size_t h = p.b1.dim(0);
  double score = p.b2[0];
  for (std::size_t r = 0; r < h; ++r) {
    double a = p.b1[r];
    for (std::size_t j = 0; j < 6; ++j) a += p.w1.at(r, j) * in[j];
    if (a > 0.0) score += p.w2.at(0, r) * a;
  }
  return score;
}

}  // namespace

ImportanceWeights score_and_weight(const std::vector<std::vector<BandStats>>& stats,
                                   const MlpParams* mlp,
                                   const RouterConfig& config, NodeId node) {
  config.validate();
  const std::size_t K = stats.size();
  if (K == 0) throw ConfigError("score_and_weight: no bands");
  const std::size_t C = stats[0].size();
  ImportanceWeights out;
  out.node = node;
  out.scores = Tensor({K, C});
  out.weights = Tensor({K, C});
  if (config.mode == RouterMode::uniform) {
    out.weights.fill(1.0 / double(K));
    return out;
  }
  if (config.mode == RouterMode::passthrough) {
    out.weights.fill(1.0);
    return out;
  }
  if (mlp == nullptr) {
    throw UsageError("score_and_weight: mode " + to_string(config.mode) +
                     " requires MLP parameters");
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (stats[k].size() != C) {
      throw ConfigError("score_and_weight: ragged stats matrix");
    }
    for (std::size_t c = 0; c < C; ++c) {
      out.scores.at(k, c) = mlp_score(*mlp, stats[k][c]);
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    double mx = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
      mx = std::max(mx, out.scores.at(k, c) / config.temperature);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = std::exp(out.scores.at(k, c) / config.temperature - mx);
      out.weights.at(k, c) = e;
      z += e;
    }
    for (std::size_t k = 0; k < K; ++k) out.weights.at(k, c) /= z;
  }
  return out;
}

}  // namespace prism
