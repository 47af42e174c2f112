#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "prism/filter_bank.hpp"
#include "prism/tensor.hpp"

namespace prism {

/// Geometry of the overlapping binary time partition. Level 0 is the full
/// context; each split halves with overlap o: T(i+1) = (T(i)+o)/2. `depth`
/// counts split iterations, so depth=1 gives M=2 leaf segments.
struct PartitionPlan {
  std::size_t t_context = 0;
  std::size_t overlap = 0;
  std::size_t depth = 0;
  std::vector<std::size_t> level_lengths;  // size depth+1
  std::size_t leaf_count = 1;              // 2^depth

  std::size_t leaf_length() const { return level_lengths.back(); }
};

/// Validates parity and length constraints at every level; throws
/// ConfigError naming the first violated level.
PartitionPlan plan(std::size_t t_context, std::size_t overlap,
                   std::size_t depth, const FilterSpec& filter);

/// left = segment[0 : T(i+1)], right = segment[T(i)-T(i+1) : T(i)]; they
/// share exactly `overlap` central samples.
std::pair<Tensor, Tensor> split_segment(const Tensor& segment,
                                        const PartitionPlan& plan,
                                        std::size_t level);

/// Inverse of split_segment: concatenation with a linear cross-fade over the
/// o shared samples, ramp alpha_j = (j+1)/(o+1).
Tensor stitch(const Tensor& left, const Tensor& right, std::size_t overlap);

/// Stitches 2^d leaf segments back to full length, pairing bottom-up.
Tensor stitch_tree(const std::vector<Tensor>& leaves,
                   const PartitionPlan& plan);

}  // namespace prism
