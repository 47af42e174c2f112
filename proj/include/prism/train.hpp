#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prism/adam.hpp"
#include "prism/model.hpp"
#include "prism/series.hpp"

namespace prism {

struct TrainConfig {
  std::size_t batch_size = 512;
  double lr = 1e-4;
  std::size_t patience = 15;      // epochs without improvement > min_delta
  double min_delta = 2e-4;
  std::size_t max_epochs = 100;
  std::size_t validate_every = 1;  // validation cadence in epochs
  int threads = 0;                 // 0 = all available
  void validate() const;
};

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochRecord> history;
  double best_val_mse = 0.0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
};

/// Normalized series plus window indices per split. Train windows live
/// fully inside the train slice; validation/test windows may draw context
/// from the preceding split's tail so that every *target* lies inside its
/// split (standard border handling).
struct DatasetWindows {
  TimeSeries normalized;
  NormStats stats;
  SplitSizes sizes;
  WindowIndex train, val, test;
};

/// fixed_stats, when given, replaces fitting on the train slice (used when
/// evaluating a checkpoint with its stored normalization).
DatasetWindows prepare_dataset(const TimeSeries& raw, const SplitSpec& split,
                               std::size_t t_context, std::size_t t_forecast,
                               std::size_t stride = 1,
                               const NormStats* fixed_stats = nullptr);

/// One full pass over shuffled training windows per epoch, batches of
/// batch_size (last partial batch kept), Adam updates, per-epoch validation,
/// early stopping on validation MSE. Returns the parameters of the best
/// validation epoch.
TrainResult train(const PrismConfig& cfg, const DatasetWindows& data,
                  const TrainConfig& tc, std::uint64_t seed);

/// Mean of per-window metrics over all windows; invariant to ordering.
Metrics evaluate(const ModelParams& params, const PrismConfig& cfg,
                 const TimeSeries& series, const WindowIndex& windows,
                 int threads = 0);

/// Naive floor: repeats each context's last value across the horizon.
Metrics repeat_last_baseline(const TimeSeries& series,
                             const WindowIndex& windows);

// --- batch gradient kernels ------------------------------------------------
// Both kernels accumulate the batch-mean gradient into `grads` and return
// the batch-mean loss. They share one reduction tree: windows are summed
// serially inside fixed chunks of kGradChunk, chunk partials are combined
// in chunk order. The parallel kernel farms chunks out to OpenMP threads,
// which leaves the summation order (and hence every bit of the result)
// identical to the serial reference.
inline constexpr std::size_t kGradChunk = 16;

double batch_gradient_serial(const PrismConfig& cfg, const ModelParams& params,
                             const TimeSeries& series, const WindowIndex& idx,
                             std::span<const std::size_t> batch,
                             ModelParams& grads);

double batch_gradient_parallel(const PrismConfig& cfg,
                               const ModelParams& params,
                               const TimeSeries& series,
                               const WindowIndex& idx,
                               std::span<const std::size_t> batch,
                               ModelParams& grads, int threads);

/// Mean router weight per (level, node, band[, channel]) over a sample of
/// windows. channel == -1 rows aggregate across channels.
struct ImportanceRow {
  std::size_t level = 0;
  std::size_t node = 0;
  long channel = -1;
  std::size_t band = 0;
  double mean_weight = 0.0;
};

std::vector<ImportanceRow> export_importance(const ModelParams& params,
                                             const PrismConfig& cfg,
                                             const TimeSeries& series,
                                             const WindowIndex& windows,
                                             std::size_t max_windows = 256);

}  // namespace prism
