#pragma once

#include <cstdint>

#include "prism/rng.hpp"
#include "prism/series.hpp"

namespace prism {

/// Single-channel benchmark series: sinusoids at the given periods plus a
/// linear trend and Gaussian noise. Deterministic per seed.
inline TimeSeries make_synthetic_series(std::size_t T, std::uint64_t seed,
                                        double noise_sigma = 0.1,
                                        double period_a = 24.0,
                                        double period_b = 168.0,
                                        double trend_rise = 2.0) {
  Rng rng(seed);
  TimeSeries ts;
  ts.channel_names = {"y"};
  ts.values = Tensor({T, 1});
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::size_t t = 0; t < T; ++t) {
    const double x = double(t);
    ts.values.at(t, 0) = std::sin(kTwoPi * x / period_a) +
                         std::sin(kTwoPi * x / period_b) +
                         trend_rise * x / double(T) +
                         noise_sigma * rng.normal();
  }
  return ts;
}

}  // namespace prism
