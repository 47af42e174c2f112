// Throughput comparison of the serial reference kernels against the
// OpenMP-parallel ones: batch gradients, evaluation sweeps, and raw
// filter-bank decompositions.

#include <chrono>
#include <cstdio>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "prism/synthetic.hpp"
#include "prism/train.hpp"

using namespace prism;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t batch = 128;
  std::size_t channels = 7;
  if (argc > 1) batch = std::size_t(std::atoll(argv[1]));
  if (argc > 2) channels = std::size_t(std::atoll(argv[2]));

#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
#else
  const int max_threads = 1;
#endif
  std::printf("bench: batch=%zu channels=%zu max_threads=%d\n", batch,
              channels, max_threads);

  // multichannel synthetic series long enough for the default geometry
  TimeSeries ts = make_synthetic_series(4000, 7);
  if (channels > 1) {
    Tensor wide({ts.length(), channels});
    Rng rng(11);
    for (std::size_t t = 0; t < ts.length(); ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        wide.at(t, c) = ts.values.at(t, 0) + 0.1 * rng.normal();
      }
    }
    ts.values = std::move(wide);
    ts.channel_names.assign(channels, "y");
  }

  PrismConfig cfg;  // defaults: ctx 336, h 96, haar K=6, depth 1, o 8
  DatasetWindows data = prepare_dataset(ts, SplitSpec{}, cfg.t_context,
                                        cfg.t_forecast);
  ModelParams params = init_params(cfg, 0);

  std::vector<std::size_t> ids(std::min(batch, data.train.count()));
  std::iota(ids.begin(), ids.end(), std::size_t(0));

  std::printf("%-28s %10s %12s %10s\n", "kernel", "threads", "windows/s",
              "speedup");

  double serial_rate = 0.0;
  {
    ModelParams grads = zeros_like(params);
    const auto t0 = std::chrono::steady_clock::now();
    batch_gradient_serial(cfg, params, data.normalized, data.train, ids,
                          grads);
    const double dt = seconds_since(t0);
    serial_rate = double(ids.size()) / dt;
    std::printf("%-28s %10s %12.1f %10s\n", "batch_gradient (reference)",
                "serial", serial_rate, "1.00x");
  }
  for (int nt = 1; nt <= max_threads; nt *= 2) {
    ModelParams grads = zeros_like(params);
    const auto t0 = std::chrono::steady_clock::now();
    batch_gradient_parallel(cfg, params, data.normalized, data.train, ids,
                            grads, nt);
    const double dt = seconds_since(t0);
    const double rate = double(ids.size()) / dt;
    std::printf("%-28s %10d %12.1f %9.2fx\n", "batch_gradient (openmp)", nt,
                rate, rate / serial_rate);
  }

  {
    const auto t0 = std::chrono::steady_clock::now();
    (void)evaluate(params, cfg, data.normalized, data.val, 1);
    const double dt1 = seconds_since(t0);
    const auto t1 = std::chrono::steady_clock::now();
    (void)evaluate(params, cfg, data.normalized, data.val, max_threads);
    const double dtn = seconds_since(t1);
    std::printf("%-28s %10d %12.1f %10s\n", "evaluate", 1,
                double(data.val.count()) / dt1, "1.00x");
    std::printf("%-28s %10d %12.1f %9.2fx\n", "evaluate", max_threads,
                double(data.val.count()) / dtn, dt1 / dtn);
  }

  // raw decomposition throughput per family on leaf-sized segments
  const std::size_t L = cfg.make_plan().leaf_length();
  Tensor seg({L, channels});
  Rng rng(3);
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = rng.normal();
  for (const FilterFamily fam :
       {FilterFamily::haar, FilterFamily::fft, FilterFamily::ema,
        FilterFamily::dog, FilterFamily::binomial}) {
    const FilterSpec fspec = FilterSpec::defaults(fam);
    const std::size_t reps = 2000;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < reps; ++r) (void)decompose(seg, fspec);
    const double dt = seconds_since(t0);
    std::printf("%-28s %10s %12.1f %10s\n",
                ("decompose " + to_string(fam)).c_str(), "serial",
                double(reps) / dt, "-");
  }
  return 0;
}
