#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "prism/filter_bank.hpp"
#include "prism/tensor.hpp"

namespace prism {

struct VarId {
  std::uint32_t i = UINT32_MAX;
  bool valid() const { return i != UINT32_MAX; }
};

/// Define-by-run reverse-mode tape. Nodes are appended in execution order,
/// so every op appears after its inputs; backward replays the records once
/// in reverse. Rebuilt for every forward pass.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// needs_grad=false marks constant inputs (data windows, fixed weights);
  /// backward work never flows into them or their dead subtrees.
  VarId leaf(Tensor value, bool needs_grad = true);

  const Tensor& val(VarId id) const { return nodes_[id.i].value; }
  bool needs(VarId id) const { return nodes_[id.i].needs; }

  /// Gradient accumulator for a node; allocated (zero) on first access.
  Tensor& grad(VarId id);
  /// Gradient if any contribution was recorded, else nullptr.
  const Tensor* grad_if(VarId id) const;

  /// Reverse sweep from a scalar loss node. Gradients accumulate additively
  /// across fan-out. May be called once per tape.
  void backward(VarId loss);

  // --- op plumbing -------------------------------------------------------
  VarId push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    std::function<void(Tape&)> back;
    bool needs = true;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
  bool backward_done_ = false;
};

// ---- primitive ops ------------------------------------------------------
// All ops validate shapes (ConfigError) and check their outputs are finite
// (NumericError). Local derivatives are registered when the tape records.

/// Wx + b for a vector x: x [n_in], W [n_out x n_in], b [n_out].
VarId affine(Tape& t, VarId x, VarId W, VarId b);

/// Row-batched affine: X [n x in], W [out x in], b [out] -> [n x out].
VarId linear(Tape& t, VarId X, VarId W, VarId b);

VarId relu(Tape& t, VarId x);
VarId add(Tape& t, VarId a, VarId b);
VarId sub(Tape& t, VarId a, VarId b);
VarId mul(Tape& t, VarId a, VarId b);  // elementwise
VarId scale(Tape& t, VarId x, double s);
VarId sum(Tape& t, VarId x);   // -> scalar
VarId mean(Tape& t, VarId x);  // -> scalar

/// Mean squared error against a constant target (no gradient to target).
VarId mse_loss(Tape& t, VarId pred, const Tensor& target);

/// rows [start, start+len) of x as [len x C]
VarId slice_rows(Tape& t, VarId x, std::size_t start, std::size_t len);

/// rows [start, start+len) of x, transposed to [C x len]
VarId rows_transposed(Tape& t, VarId x, std::size_t start, std::size_t len);

/// cross-fade concatenation of two [L x C] children sharing `overlap`
/// samples -> [(2L - overlap) x C]
VarId stitch_op(Tape& t, VarId left, VarId right, std::size_t overlap);

/// frequency decomposition of [L x C] -> [K, L, C]; gradient is the adjoint
/// of the (linear) analysis map
VarId decompose_op(Tape& t, VarId x, const FilterSpec& spec);

/// band k of a [K, L, C] tensor as [L x C]
VarId band_of(Tape& t, VarId bands, std::size_t k);

/// Per-(band, channel) summary statistics of a [K, L, C] tensor:
/// row r = k*C + c holds (mu, sigma, a_max, d1, d2, crest) of that band
/// channel. Subgradients at |.| and max kinks; sigma's backward uses an
/// epsilon-guarded denominator.
VarId band_stats_op(Tape& t, VarId bands, bool clamp_crest);

/// Softmax over the K band scores of each channel: scores [K*C x 1] with
/// row k*C + c -> weights of the same shape; temperature tau.
VarId softmax_bands(Tape& t, VarId scores, std::size_t K, std::size_t C,
                    double tau);

/// bands [K, L, C] scaled per (band, channel) by w [K*C x 1]
VarId scale_bands(Tape& t, VarId bands, VarId w);

/// sum over k of a [K, L, C] tensor -> [L x C]
VarId sum_bands(Tape& t, VarId bands);

}  // namespace prism
