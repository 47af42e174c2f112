#pragma once

#include <cstdint>
#include <string>

#include "prism/model.hpp"
#include "prism/series.hpp"

namespace prism {

/// Trained model container. The binary layout (all integers little-endian):
///   bytes 0..7   magic "PRISMCK1"
///   u64          length J of the config JSON
///   J bytes      UTF-8 JSON: {"model": <config>, "channels": C, "seed": s}
///   u64          tensor count N
///   N records:   u32 name length, name bytes,
///                u32 rank, rank x u64 dims, prod(dims) x f64 data
/// Tensors are norm.mean, norm.std, then parameters in canonical order.
struct Checkpoint {
  PrismConfig config;
  std::size_t channels = 0;
  std::uint64_t seed = 0;
  NormStats norm;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);

/// Throws CheckpointError on a missing file, bad magic, truncation, or
/// shape mismatches against the embedded config.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prism
