#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prism/tensor.hpp"

namespace prism {

/// A C-channel series: values is [T x C], channels in file order.
struct TimeSeries {
  Tensor values;
  std::vector<std::int64_t> timestamps;  // epoch seconds; empty = absent
  std::vector<std::string> channel_names;
  double sampling_period = 0.0;  // seconds; 0 = unknown

  std::size_t length() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
};

struct CsvSchema {
  std::string date_column = "date";  // ETT convention
  bool has_date = true;              // false: every column is a channel
};

/// Header row required; comma separated; '.' decimal. Rejects files with
/// fewer than 2 data rows and any blank or non-numeric cell (reports
/// row/column).
TimeSeries load_csv(const std::string& path, const CsvSchema& schema = {});

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  void validate() const;  // nonnegative, sums to 1 within 1e-9
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t train_end() const { return train; }
  std::size_t val_end() const { return train + val; }
};

/// Chronological boundaries at floor(frac * T); slices cover [0, T).
SplitSizes split_sizes(std::size_t T, const SplitSpec& spec);

/// Contiguous chronological slices, no shuffling.
struct SplitResult {
  TimeSeries train, val, test;
};
SplitResult chrono_split(const TimeSeries& ts, const SplitSpec& spec);

struct NormStats {
  std::vector<double> mean;  // per channel
  std::vector<double> std;   // floored at 1e-8
};

/// Per-channel population statistics; fit on the training slice only.
NormStats fit_norm(const TimeSeries& train);
TimeSeries apply_norm(const TimeSeries& ts, const NormStats& stats);

/// One supervised sample: target starts exactly where context ends.
struct WindowPair {
  Tensor context;  // [T_context x C]
  Tensor target;   // [T_forecast x C]
  std::size_t origin_index = 0;
};

/// Lazy window enumeration: origins 0, stride, 2*stride, ...
struct WindowIndex {
  std::size_t t_context = 0;
  std::size_t t_forecast = 0;
  std::vector<std::size_t> origins;
  std::size_t count() const { return origins.size(); }
};

WindowIndex make_windows(const TimeSeries& ts, std::size_t t_context,
                         std::size_t t_forecast, std::size_t stride = 1);

WindowPair materialize(const TimeSeries& ts, const WindowIndex& idx,
                       std::size_t i);

/// Copies rows [start, end) with their metadata.
TimeSeries slice_series(const TimeSeries& ts, std::size_t start,
                        std::size_t end);

}  // namespace prism
