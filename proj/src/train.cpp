#include "prism/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "prism/rng.hpp"

namespace prism {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: learning rate must be > 0");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (min_delta < 0.0) throw ConfigError("train: min_delta must be >= 0");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (validate_every < 1) throw ConfigError("train: validate_every must be >= 1");
}

DatasetWindows prepare_dataset(const TimeSeries& raw, const SplitSpec& split,
                               std::size_t t_context, std::size_t t_forecast,
                               std::size_t stride,
                               const NormStats* fixed_stats) {
  const std::size_t T = raw.length();
  DatasetWindows d;
  d.sizes = split_sizes(T, split);
  if (fixed_stats) {
    d.stats = *fixed_stats;
  } else {
    const TimeSeries train_slice = slice_series(raw, 0, d.sizes.train_end());
    d.stats = fit_norm(train_slice);
  }
  d.normalized = apply_norm(raw, d.stats);

  const std::size_t need = t_context + t_forecast;
  const auto origins_in = [&](std::size_t lo, std::size_t hi) {
    // window origins with the target inside [lo + t_context, hi]
    WindowIndex idx;
    idx.t_context = t_context;
    idx.t_forecast = t_forecast;
    for (std::size_t o = lo; o + need <= hi; o += stride) {
      idx.origins.push_back(o);
    }
    return idx;
  };
  if (d.sizes.train < need) {
    throw ConfigError("prepare_dataset: train slice of " +
                      std::to_string(d.sizes.train) +
                      " rows cannot hold one window of " +
                      std::to_string(need));
  }
  d.train = origins_in(0, d.sizes.train_end());
  // validation/test contexts may reach back into the previous split
  const std::size_t val_lo = d.sizes.train_end() - std::min(d.sizes.train_end(), t_context);
  d.val = origins_in(val_lo, d.sizes.val_end());
  const std::size_t test_lo = d.sizes.val_end() - std::min(d.sizes.val_end(), t_context);
  d.test = origins_in(test_lo, T);
  if (d.val.count() == 0 || d.test.count() == 0) {
    throw ConfigError(
        "prepare_dataset: validation or test slice too short for one window");
  }
  return d;
}

namespace {

void accumulate_params(ModelParams& dst, const ModelParams& src) {
  auto d = param_tensors(dst);
  auto s = param_tensors(src);
  for (std::size_t i = 0; i < d.size(); ++i) add_into(*d[i], *s[i]);
}

void scale_params(ModelParams& p, double s) {
  for (Tensor* t : param_tensors(p)) {
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= s;
  }
}

/// forward + backward for one window; adds the window's gradient into
/// `accum`. Out-of-line so the serial and parallel drivers execute the
/// exact same code.
double window_gradient(const PrismConfig& cfg, const ModelParams& params,
                       const TimeSeries& series, const WindowIndex& idx,
                       std::size_t window, ModelParams& accum) {
  const WindowPair w = materialize(series, idx, window);
  Tape tape;
  const BoundParams bound = bind_params(tape, params);
  const VarId fc = forward(tape, w.context, bound, cfg);
  const VarId loss = mse_loss(tape, fc, transpose2(w.target));
  tape.backward(loss);
  accumulate_params(accum, read_grads(tape, bound, params));
  return tape.val(loss)[0];
}

struct ChunkSums {
  std::vector<ModelParams> grads;
  std::vector<double> loss;
};

int resolve_threads(int threads) {
#ifdef _OPENMP
  return threads > 0 ? threads : omp_get_max_threads();
#else
  (void)threads;
  return 1;
#endif
}

}  // namespace

double batch_gradient_serial(const PrismConfig& cfg, const ModelParams& params,
                             const TimeSeries& series, const WindowIndex& idx,
                             std::span<const std::size_t> batch,
                             ModelParams& grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw UsageError("batch_gradient: empty batch");
  const std::size_t nchunks = (n + kGradChunk - 1) / kGradChunk;
  ChunkSums sums;
  sums.grads.assign(nchunks, zeros_like(params));
  sums.loss.assign(nchunks, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c) {
    const std::size_t lo = c * kGradChunk;
    const std::size_t hi = std::min(n, lo + kGradChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      sums.loss[c] +=
          window_gradient(cfg, params, series, idx, batch[i], sums.grads[c]);
    }
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < nchunks; ++c) {
    accumulate_params(grads, sums.grads[c]);
    loss += sums.loss[c];
  }
  scale_params(grads, 1.0 / double(n));
  return loss / double(n);
}

double batch_gradient_parallel(const PrismConfig& cfg,
                               const ModelParams& params,
                               const TimeSeries& series,
                               const WindowIndex& idx,
                               std::span<const std::size_t> batch,
                               ModelParams& grads, int threads) {
  const std::size_t n = batch.size();
  if (n == 0) throw UsageError("batch_gradient: empty batch");
  const std::size_t nchunks = (n + kGradChunk - 1) / kGradChunk;
  ChunkSums sums;
  sums.grads.assign(nchunks, zeros_like(params));
  sums.loss.assign(nchunks, 0.0);
  const int nt = resolve_threads(threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
  for (long long ci = 0; ci < (long long)nchunks; ++ci) {
    const std::size_t c = (std::size_t)ci;
    const std::size_t lo = c * kGradChunk;
    const std::size_t hi = std::min(n, lo + kGradChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      sums.loss[c] +=
          window_gradient(cfg, params, series, idx, batch[i], sums.grads[c]);
    }
  }
  (void)nt;
  // chunk partials combine in chunk order: same reduction tree as serial
  double loss = 0.0;
  for (std::size_t c = 0; c < nchunks; ++c) {
    accumulate_params(grads, sums.grads[c]);
    loss += sums.loss[c];
  }
  scale_params(grads, 1.0 / double(n));
  return loss / double(n);
}

Metrics evaluate(const ModelParams& params, const PrismConfig& cfg,
                 const TimeSeries& series, const WindowIndex& windows,
                 int threads) {
  const std::size_t n = windows.count();
  if (n == 0) throw ConfigError("evaluate: no windows");
  std::vector<double> w_mse(n), w_mae(n);
  const int nt = resolve_threads(threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(nt)
#endif
  for (long long i = 0; i < (long long)n; ++i) {
    const WindowPair w = materialize(series, windows, (std::size_t)i);
    const Tensor pred = predict(w.context, params, cfg);
    w_mse[(std::size_t)i] = mse(pred, w.target);
    w_mae[(std::size_t)i] = mae(pred, w.target);
  }
  (void)nt;
  Metrics m;
  for (std::size_t i = 0; i < n; ++i) {
    m.mse += w_mse[i];
    m.mae += w_mae[i];
  }
  m.mse /= double(n);
  m.mae /= double(n);
  return m;
}

Metrics repeat_last_baseline(const TimeSeries& series,
                             const WindowIndex& windows) {
  const std::size_t n = windows.count();
  if (n == 0) throw ConfigError("repeat_last_baseline: no windows");
  Metrics m;
  for (std::size_t i = 0; i < n; ++i) {
    const WindowPair w = materialize(series, windows, i);
    const std::size_t C = w.context.dim(1);
    const double* last = w.context.data() + (windows.t_context - 1) * C;
    double se = 0.0, ae = 0.0;
    for (std::size_t t = 0; t < windows.t_forecast; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        const double d = last[c] - w.target.at(t, c);
        se += d * d;
        ae += std::abs(d);
      }
    }
    const double cnt = double(windows.t_forecast * C);
    m.mse += se / cnt;
    m.mae += ae / cnt;
  }
  m.mse /= double(n);
  m.mae /= double(n);
  return m;
}

TrainResult train(const PrismConfig& cfg, const DatasetWindows& data,
                  const TrainConfig& tc, std::uint64_t seed) {
  cfg.validate();
  tc.validate();
  using clock = std::chrono::steady_clock;

  ModelParams params = init_params(cfg, seed);
  AdamState adam;
  adam.lr = tc.lr;

  // every stochastic choice flows from the run seed; init and shuffling use
  // decoupled streams
  Rng shuffle_rng(seed ^ 0x5DEECE66DULL);

  std::vector<std::size_t> order(data.train.count());
  std::iota(order.begin(), order.end(), std::size_t(0));

  TrainResult res;
  res.best_params = params;
  res.best_val_mse = std::numeric_limits<double>::infinity();
  double patience_best = std::numeric_limits<double>::infinity();
  std::size_t since_improve = 0;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = clock::now();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += tc.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + tc.batch_size);
      ModelParams grads = zeros_like(params);
      double batch_loss = 0.0;
      try {
        batch_loss = batch_gradient_parallel(
            cfg, params, data.normalized, data.train,
            std::span<const std::size_t>(order.data() + lo, hi - lo), grads,
            tc.threads);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(lo / tc.batch_size) + ": " +
                           e.what());
      }
      loss_sum += batch_loss * double(hi - lo);
      seen += hi - lo;
      auto ptrs = param_tensors(params);
      const ModelParams& g = grads;
      auto gptrs = param_tensors(g);
      adam_step(ptrs, gptrs, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / double(seen);
    if (epoch % tc.validate_every == 0 || epoch == tc.max_epochs) {
      rec.val_mse =
          evaluate(params, cfg, data.normalized, data.val, tc.threads).mse;
    } else {
      rec.val_mse = std::numeric_limits<double>::quiet_NaN();
    }
    rec.seconds =
        std::chrono::duration<double>(clock::now() - t0).count();
    res.history.push_back(rec);
    res.epochs_run = epoch;

    if (!std::isnan(rec.val_mse)) {
      if (rec.val_mse < res.best_val_mse) {
        res.best_val_mse = rec.val_mse;
        res.best_params = params;
      }
      // strict improvement beyond min_delta resets patience
      if (patience_best - rec.val_mse > tc.min_delta) {
        patience_best = rec.val_mse;
        since_improve = 0;
      } else {
        since_improve += 1;
        if (since_improve >= tc.patience) {
          res.early_stopped = true;
          break;
        }
      }
    }
  }
  return res;
}

std::vector<ImportanceRow> export_importance(const ModelParams& params,
                                             const PrismConfig& cfg,
                                             const TimeSeries& series,
                                             const WindowIndex& windows,
                                             std::size_t max_windows) {
  const std::size_t n = windows.count();
  if (n == 0) throw ConfigError("export_importance: no windows");
  const std::size_t take = std::min(n, max_windows);
  const std::size_t step = n / take;
  const std::size_t K = cfg.filter.bands;
  const std::size_t C = series.channels();

  // accumulate weights per (node, band, channel)
  std::vector<ImportanceWeights> acc;
  std::size_t used = 0;
  for (std::size_t i = 0; i < take; ++i) {
    const WindowPair w = materialize(series, windows, i * step);
    ForwardCapture cap;
    (void)predict(w.context, params, cfg, &cap);
    if (acc.empty()) {
      acc = cap.node_weights;
    } else {
      for (std::size_t j = 0; j < acc.size(); ++j) {
        add_into(acc[j].weights, cap.node_weights[j].weights);
      }
    }
    ++used;
  }
  std::vector<ImportanceRow> rows;
  for (const ImportanceWeights& iw : acc) {
    for (std::size_t k = 0; k < K; ++k) {
      double all = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double wv = iw.weights.at(k, c) / double(used);
        rows.push_back({iw.node.level, iw.node.index, long(c), k, wv});
        all += wv;
      }
      rows.push_back({iw.node.level, iw.node.index, -1, k, all / double(C)});
    }
  }
  return rows;
}

}  // namespace prism
