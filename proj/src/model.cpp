#include "prism/model.hpp"

#include <cmath>
#include <cstring>

#include "prism/rng.hpp"

namespace prism {

PartitionPlan PrismConfig::make_plan() const {
  return plan(t_context, overlap, depth, filter);
}

void PrismConfig::validate() const {
  filter.validate();
  router.validate();
  make_plan();  // throws on geometry violations
  if (t_forecast < 1) throw ConfigError("config: t_forecast must be >= 1");
  if (head_hidden < 1) throw ConfigError("config: head_hidden must be >= 1");
  if (t_context % leaf_count() != 0) {
    throw ConfigError("config: t_context " + std::to_string(t_context) +
                      " must be divisible by leaf count " +
                      std::to_string(leaf_count()));
  }
  const std::size_t leaf_len = make_plan().leaf_length();
  if (router.has_mlp() && leaf_len < 3) {
    throw ConfigError("config: leaf length " + std::to_string(leaf_len) +
                      " too short for summary statistics (needs >= 3)");
  }
}

namespace {

MlpParams init_mlp(std::size_t in, std::size_t hidden, std::size_t out,
                   Rng& rng) {
  MlpParams p;
  p.w1 = Tensor({hidden, in});
  p.b1 = Tensor({hidden});
  p.w2 = Tensor({out, hidden});
  p.b2 = Tensor({out});
  const double bound1 = 1.0 / std::sqrt(double(in));
  for (std::size_t i = 0; i < p.w1.size(); ++i) {
    p.w1[i] = rng.uniform(-bound1, bound1);
  }
  for (std::size_t i = 0; i < p.b1.size(); ++i) {
    p.b1[i] = rng.uniform(-bound1, bound1);
  }
  const double bound2 = 1.0 / std::sqrt(double(hidden));
  for (std::size_t i = 0; i < p.w2.size(); ++i) {
    p.w2[i] = rng.uniform(-bound2, bound2);
  }
  for (std::size_t i = 0; i < p.b2.size(); ++i) {
    p.b2[i] = rng.uniform(-bound2, bound2);
  }
  return p;
}

}  // namespace

ModelParams init_params(const PrismConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  const std::size_t groups = router_group_count(cfg.router.mode, cfg.depth);
  for (std::size_t g = 0; g < groups; ++g) {
    p.routers.push_back(init_mlp(6, cfg.router.hidden, 1, rng));
  }
  const std::size_t M = cfg.leaf_count(), K = cfg.filter.bands;
  for (std::size_t i = 0; i < M * K; ++i) {
    p.heads.push_back(
        init_mlp(cfg.chunk_length(), cfg.head_hidden, cfg.t_forecast, rng));
  }
  return p;
}

ModelParams zero_params(const PrismConfig& cfg) {
  cfg.validate();
  ModelParams p;
  const std::size_t groups = router_group_count(cfg.router.mode, cfg.depth);
  const std::size_t h = cfg.router.hidden;
  for (std::size_t g = 0; g < groups; ++g) {
    p.routers.push_back({Tensor({h, 6}), Tensor({h}), Tensor({1, h}),
                         Tensor({1})});
  }
  const std::size_t M = cfg.leaf_count(), K = cfg.filter.bands;
  const std::size_t hh = cfg.head_hidden;
  for (std::size_t i = 0; i < M * K; ++i) {
    p.heads.push_back({Tensor({hh, cfg.chunk_length()}), Tensor({hh}),
                       Tensor({cfg.t_forecast, hh}), Tensor({cfg.t_forecast})});
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  for (const MlpParams& m : p.routers) {
    z.routers.push_back({Tensor::zeros_like(m.w1), Tensor::zeros_like(m.b1),
                         Tensor::zeros_like(m.w2), Tensor::zeros_like(m.b2)});
  }
  for (const MlpParams& m : p.heads) {
    z.heads.push_back({Tensor::zeros_like(m.w1), Tensor::zeros_like(m.b1),
                       Tensor::zeros_like(m.w2), Tensor::zeros_like(m.b2)});
  }
  return z;
}

std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const Tensor* t : param_tensors(p)) n += t->size();
  return n;
}

std::vector<Tensor*> param_tensors(ModelParams& p) {
  std::vector<Tensor*> out;
  for (MlpParams& m : p.routers) {
    out.push_back(&m.w1);
    out.push_back(&m.b1);
    out.push_back(&m.w2);
    out.push_back(&m.b2);
  }
  for (MlpParams& m : p.heads) {
    out.push_back(&m.w1);
    out.push_back(&m.b1);
    out.push_back(&m.w2);
    out.push_back(&m.b2);
  }
  return out;
}

std::vector<const Tensor*> param_tensors(const ModelParams& p) {
  std::vector<const Tensor*> out;
  for (const MlpParams& m : p.routers) {
    out.push_back(&m.w1);
    out.push_back(&m.b1);
    out.push_back(&m.w2);
    out.push_back(&m.b2);
  }
  for (const MlpParams& m : p.heads) {
    out.push_back(&m.w1);
    out.push_back(&m.b1);
    out.push_back(&m.w2);
    out.push_back(&m.b2);
  }
  return out;
}

std::vector<std::string> param_names(const ModelParams& p) {
  std::vector<std::string> out;
  for (std::size_t g = 0; g < p.routers.size(); ++g) {
    const std::string base = "router" + std::to_string(g) + ".";
    out.push_back(base + "w1");
    out.push_back(base + "b1");
    out.push_back(base + "w2");
    out.push_back(base + "b2");
  }
  for (std::size_t i = 0; i < p.heads.size(); ++i) {
    const std::string base = "head" + std::to_string(i) + ".";
    out.push_back(base + "w1");
    out.push_back(base + "b1");
    out.push_back(base + "w2");
    out.push_back(base + "b2");
  }
  return out;
}

BoundParams bind_params(Tape& t, const ModelParams& p) {
  BoundParams b;
  for (const MlpParams& m : p.routers) {
    b.routers.push_back({t.leaf(m.w1), t.leaf(m.b1), t.leaf(m.w2),
                         t.leaf(m.b2)});
  }
  for (const MlpParams& m : p.heads) {
    b.heads.push_back({t.leaf(m.w1), t.leaf(m.b1), t.leaf(m.w2),
                       t.leaf(m.b2)});
  }
  return b;
}

ModelParams read_grads(const Tape& t, const BoundParams& bound,
                       const ModelParams& shape) {
  ModelParams g = zeros_like(shape);
  const auto copy = [&t](Tensor& dst, VarId id) {
    if (const Tensor* gr = t.grad_if(id)) dst = *gr;
  };
  for (std::size_t i = 0; i < bound.routers.size(); ++i) {
    copy(g.routers[i].w1, bound.routers[i].w1);
    copy(g.routers[i].b1, bound.routers[i].b1);
    copy(g.routers[i].w2, bound.routers[i].w2);
    copy(g.routers[i].b2, bound.routers[i].b2);
  }
  for (std::size_t i = 0; i < bound.heads.size(); ++i) {
    copy(g.heads[i].w1, bound.heads[i].w1);
    copy(g.heads[i].b1, bound.heads[i].b1);
    copy(g.heads[i].w2, bound.heads[i].w2);
    copy(g.heads[i].b2, bound.heads[i].b2);
  }
  return g;
}

namespace {

Tensor reshape_kc(const Tensor& flat, std::size_t K, std::size_t C) {
  Tensor out({K, C});
  std::memcpy(out.data(), flat.data(), K * C * sizeof(double));
  return out;
}

/// weights for the bands of one node: constant for the no-MLP modes, the
/// stats -> MLP -> softmax chain otherwise
VarId node_weights(Tape& t, VarId bands, const BoundParams& bound,
                   const PrismConfig& cfg, NodeId node,
                   ForwardCapture* capture) {
  const std::size_t K = t.val(bands).dim(0), C = t.val(bands).dim(2);
  VarId w;
  Tensor scores({K, C});
  if (cfg.router.mode == RouterMode::uniform ||
      cfg.router.mode == RouterMode::passthrough) {
    Tensor wt({K * C});
    wt.fill(cfg.router.mode == RouterMode::uniform ? 1.0 / double(K) : 1.0);
    w = t.leaf(std::move(wt), /*needs_grad=*/false);
  } else {
    const std::size_t g = router_group_index(cfg.router.mode, node, cfg.depth);
    const MlpVars& mlp = bound.routers.at(g);
    const VarId stats = band_stats_op(t, bands, cfg.router.clamp_crest);
    const VarId hidden = relu(t, linear(t, stats, mlp.w1, mlp.b1));
    const VarId s = linear(t, hidden, mlp.w2, mlp.b2);  // [K*C x 1]
    w = softmax_bands(t, s, K, C, cfg.router.temperature);
    if (capture) scores = reshape_kc(t.val(s), K, C);
  }
  if (capture) {
    capture->node_weights.push_back(
        {std::move(scores), reshape_kc(t.val(w), K, C), node});
  }
  return w;
}

}  // namespace

VarId forward(Tape& t, const Tensor& context, const BoundParams& bound,
              const PrismConfig& cfg, ForwardCapture* capture) {
  const PartitionPlan pl = cfg.make_plan();
  if (context.rank() != 2 || context.dim(0) != cfg.t_context) {
    throw ConfigError("forward: context must be [" +
                      std::to_string(cfg.t_context) + " x C], got " +
                      shape_str(context.shape()));
  }
  const std::size_t K = cfg.filter.bands;
  const std::size_t M = cfg.leaf_count();
  const VarId ctx = t.leaf(context, /*needs_grad=*/false);

  // walk the tree: intermediate children are recombined into joint signals,
  // leaf children keep their weighted bands for per-band stitching
  std::vector<VarId> level_nodes{ctx};
  std::vector<VarId> leaf_weighted;
  leaf_weighted.reserve(M);
  if (cfg.depth == 0) {
    const VarId bands = decompose_op(t, ctx, cfg.filter);
    const VarId w = node_weights(t, bands, bound, cfg, {0, 0}, capture);
    leaf_weighted.push_back(scale_bands(t, bands, w));
  }
  for (std::size_t level = 0; level < cfg.depth; ++level) {
    const std::size_t t_child = pl.level_lengths[level + 1];
    const std::size_t t_cur = pl.level_lengths[level];
    const bool child_is_leaf = (level + 1 == cfg.depth);
    std::vector<VarId> next;
    next.reserve(level_nodes.size() * 2);
    for (std::size_t j = 0; j < level_nodes.size(); ++j) {
      const VarId node = level_nodes[j];
      const VarId kids[2] = {
          slice_rows(t, node, 0, t_child),
          slice_rows(t, node, t_cur - t_child, t_child)};
      for (std::size_t side = 0; side < 2; ++side) {
        const NodeId id{level + 1, 2 * j + side};
        const VarId bands = decompose_op(t, kids[side], cfg.filter);
        const VarId w = node_weights(t, bands, bound, cfg, id, capture);
        const VarId weighted = scale_bands(t, bands, w);
        if (child_is_leaf) {
          leaf_weighted.push_back(weighted);
        } else {
          next.push_back(sum_bands(t, weighted));
        }
      }
    }
    level_nodes = std::move(next);
  }
  if (capture) {
    for (VarId v : leaf_weighted) capture->leaf_weighted_bands.push_back(t.val(v));
  }

  // per-band bottom-up stitching to full context length
  std::vector<VarId> stitched(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<VarId> sigs;
    sigs.reserve(M);
    for (std::size_t m = 0; m < M; ++m) {
      sigs.push_back(band_of(t, leaf_weighted[m], k));
    }
    while (sigs.size() > 1) {
      std::vector<VarId> up;
      up.reserve(sigs.size() / 2);
      for (std::size_t i = 0; i < sigs.size(); i += 2) {
        up.push_back(stitch_op(t, sigs[i], sigs[i + 1], cfg.overlap));
      }
      sigs = std::move(up);
    }
    stitched[k] = sigs.front();
  }

  // M x K heads on contiguous chunks, contributions summed
  const std::size_t chunk = cfg.chunk_length();
  VarId fc{};
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      const MlpVars& head = bound.heads.at(m * K + k);
      const VarId xin = rows_transposed(t, stitched[k], m * chunk, chunk);
      const VarId h = relu(t, linear(t, xin, head.w1, head.b1));
      const VarId y = linear(t, h, head.w2, head.b2);  // [C x H]
      if (capture) capture->head_outputs.push_back(t.val(y));
      fc = fc.valid() ? add(t, fc, y) : y;
    }
  }
  return fc;
}

Tensor predict(const Tensor& context, const ModelParams& params,
               const PrismConfig& cfg, ForwardCapture* capture) {
  Tape t(/*recording=*/false);
  const BoundParams bound = bind_params(t, params);
  const VarId fc = forward(t, context, bound, cfg, capture);
  return transpose2(t.val(fc));  // [T_forecast x C]
}

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ConfigError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / double(a.size());
}

double mae(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ConfigError("mae: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / double(a.size());
}

Tensor transpose2(const Tensor& m) {
  if (m.rank() != 2) {
    throw UsageError("transpose2: expected rank-2, got " +
                     shape_str(m.shape()));
  }
  const std::size_t R = m.dim(0), C = m.dim(1);
  Tensor out({C, R});
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) out.at(c, r) = m.at(r, c);
  }
  return out;
}

ForecastTrace decompose_trace(const Tensor& context, const ModelParams& params,
                              const PrismConfig& cfg) {
  ForwardCapture capture;
  ForecastTrace tr;
  tr.forecast = predict(context, params, cfg, &capture);

  const PartitionPlan pl = cfg.make_plan();
  const std::size_t M = cfg.leaf_count(), K = cfg.filter.bands;
  const std::size_t C = context.dim(1);
  const std::size_t leaf_len = pl.leaf_length();

  // leaf weights for annotation: the deepest M entries of node_weights
  const std::size_t first_leaf_node = capture.node_weights.size() - M;

  Tensor ctx_running({cfg.t_context, C});
  Tensor fc_running({cfg.t_forecast, C});
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      TraceComponent comp;
      comp.leaf = m;
      comp.band = k;
      const ImportanceWeights& iw = capture.node_weights[first_leaf_node + m];
      double wsum = 0.0;
      for (std::size_t c = 0; c < C; ++c) wsum += iw.weights.at(k, c);
      comp.mean_weight = wsum / double(C);

      // context side: this leaf's weighted band placed on the full timeline
      // through the stitch tree (all other leaves zero), so components sum
      // to the stitched band signals exactly
      std::vector<Tensor> basis(M, Tensor({leaf_len, C}));
      const Tensor& bands = capture.leaf_weighted_bands[m];
      Tensor bandsig({leaf_len, C});
      std::memcpy(bandsig.data(), bands.data() + k * leaf_len * C,
                  leaf_len * C * sizeof(double));
      basis[m] = std::move(bandsig);
      comp.context_part = stitch_tree(basis, pl);

      comp.forecast_part = transpose2(capture.head_outputs[m * K + k]);

      add_into(ctx_running, comp.context_part);
      add_into(fc_running, comp.forecast_part);
      tr.context_cumulative.push_back(ctx_running);
      tr.forecast_cumulative.push_back(fc_running);
      tr.components.push_back(std::move(comp));
    }
  }
  return tr;
}

}  // namespace prism
