#include "prism/tree.hpp"

#include <cstring>
#include <string>

namespace prism {

PartitionPlan plan(std::size_t t_context, std::size_t overlap,
                   std::size_t depth, const FilterSpec& filter) {
  if (t_context < 2) throw ConfigError("plan: context length must be >= 2");
  PartitionPlan p;
  p.t_context = t_context;
  p.overlap = overlap;
  p.depth = depth;
  p.level_lengths.push_back(t_context);
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t ti = p.level_lengths.back();
    if ((ti + overlap) % 2 != 0) {
      throw ConfigError("plan: level " + std::to_string(i) + " length " +
                        std::to_string(ti) + " + overlap " +
                        std::to_string(overlap) + " is odd; cannot split");
    }
    const std::size_t next = (ti + overlap) / 2;
    if (next >= ti) {
      throw ConfigError("plan: level " + std::to_string(i + 1) +
                        " does not shrink (overlap too large for length " +
                        std::to_string(ti) + ")");
    }
    p.level_lengths.push_back(next);
  }
  p.leaf_count = std::size_t(1) << depth;
  const std::size_t leaf = p.level_lengths.back();
  if (overlap >= leaf && depth > 0) {
    throw ConfigError("plan: overlap " + std::to_string(overlap) +
                      " must be smaller than leaf length " +
                      std::to_string(leaf));
  }
  if (leaf < filter.min_length()) {
    throw ConfigError("plan: leaf length " + std::to_string(leaf) +
                      " too short for filter family " +
                      to_string(filter.family) + " with K=" +
                      std::to_string(filter.bands) + " (needs >= " +
                      std::to_string(filter.min_length()) + ")");
  }
  return p;
}

std::pair<Tensor, Tensor> split_segment(const Tensor& segment,
                                        const PartitionPlan& plan,
                                        std::size_t level) {
  if (level >= plan.depth) {
    throw UsageError("split_segment: level " + std::to_string(level) +
                     " has no children (depth " + std::to_string(plan.depth) +
                     ")");
  }
  const std::size_t ti = plan.level_lengths[level];
  const std::size_t tn = plan.level_lengths[level + 1];
  if (segment.rank() != 2 || segment.dim(0) != ti) {
    throw ConfigError("split_segment: expected [" + std::to_string(ti) +
                      " x C] segment, got " + shape_str(segment.shape()));
  }
  const std::size_t C = segment.dim(1);
  Tensor left({tn, C}), right({tn, C});
  std::memcpy(left.data(), segment.data(), tn * C * sizeof(double));
  std::memcpy(right.data(), segment.data() + (ti - tn) * C,
              tn * C * sizeof(double));
  return {std::move(left), std::move(right)};
}

Tensor stitch(const Tensor& left, const Tensor& right, std::size_t overlap) {
  if (left.rank() != 2 || !left.same_shape(right)) {
    throw ConfigError("stitch: children must be equal-shape [L x C], got " +
                      shape_str(left.shape()) + " vs " +
                      shape_str(right.shape()));
  }
  const std::size_t L = left.dim(0), C = left.dim(1);
  if (overlap >= L) throw ConfigError("stitch: overlap must be < child length");
  const std::size_t out_len = 2 * L - overlap;
  Tensor out({out_len, C});
  std::memcpy(out.data(), left.data(), (L - overlap) * C * sizeof(double));
  for (std::size_t j = 0; j < overlap; ++j) {
    const double a = double(j + 1) / double(overlap + 1);
    const double* lrow = left.data() + (L - overlap + j) * C;
    const double* rrow = right.data() + j * C;
    double* orow = out.data() + (L - overlap + j) * C;
    for (std::size_t c = 0; c < C; ++c) {
      orow[c] = (1.0 - a) * lrow[c] + a * rrow[c];
    }
  }
  std::memcpy(out.data() + L * C, right.data() + overlap * C,
              (L - overlap) * C * sizeof(double));
  return out;
}

Tensor stitch_tree(const std::vector<Tensor>& leaves,
                   const PartitionPlan& plan) {
  if (leaves.size() != plan.leaf_count) {
    throw UsageError("stitch_tree: expected " +
                     std::to_string(plan.leaf_count) + " leaves, got " +
                     std::to_string(leaves.size()));
  }
  std::vector<Tensor> level = leaves;
  while (level.size() > 1) {
    std::vector<Tensor> up;
    up.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      up.push_back(stitch(level[i], level[i + 1], plan.overlap));
    }
    level = std::move(up);
  }
  return std::move(level.front());
}

}  // namespace prism
