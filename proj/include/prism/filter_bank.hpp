#pragma once

#include <cstddef>
#include <string>

#include "prism/tensor.hpp"

namespace prism {

enum class FilterFamily { haar, fft, ema, dog, binomial };

FilterFamily filter_family_from_string(const std::string& s);
std::string to_string(FilterFamily f);

/// Configuration of one K-band decomposition. Band 0 is the highest-frequency
/// band, band K-1 the coarsest. All families produce same-length bands that
/// sum exactly to the input segment.
struct FilterSpec {
  FilterFamily family = FilterFamily::haar;
  std::size_t bands = 6;  // K

  // family parameters
  double ema_tau0 = 8.0;
  double ema_grow = 3.0;
  double dog_sigma0 = 1.0;
  double dog_ratio = 1.6;
  std::size_t binom_k0 = 3;
  std::size_t binom_grow = 2;
  bool fft_equal_width = false;  // default masks are dyadic octaves

  static FilterSpec defaults(FilterFamily family);

  /// Shortest segment the family accepts. haar needs every dyadic scale to
  /// fit; the others only need two samples. K=1 is the degenerate identity
  /// bank (band 0 = input).
  std::size_t min_length() const;

  void validate() const;
  void validate_for_length(std::size_t segment_len) const;
};

/// K same-length band signals of one segment, bands[k] is L x C, flattened
/// into a [K, L, C] tensor. Sum over k reproduces the segment.
struct BandSet {
  Tensor bands;  // shape [K, L, C]
  FilterSpec spec;

  std::size_t band_count() const { return bands.dim(0); }
  std::size_t length() const { return bands.dim(1); }
  std::size_t channels() const { return bands.dim(2); }
  Tensor band(std::size_t k) const;  // copy of band k as [L x C]
};

BandSet decompose(const Tensor& segment, const FilterSpec& spec);

/// weights is [K x C]; output[t][c] = sum_k weights[k][c] * bands[k][t][c].
Tensor recombine(const BandSet& bands, const Tensor& weights);

namespace fb {

// Raw kernels shared by the public API and the autodiff op. Layout of
// `bands` is [K, L, C] row-major; `x` is [L, C].
void decompose_values(const FilterSpec& spec, const double* x, std::size_t L,
                      std::size_t C, double* bands);

// Accumulates the adjoint (transpose) of the decomposition into gx:
// gx += A^T gbands. The decomposition is linear, so this is its exact
// gradient.
void decompose_adjoint(const FilterSpec& spec, const double* gbands,
                       std::size_t L, std::size_t C, double* gx);

// Symmetric (whole-sample reflection) index folding used by the FIR
// families.
std::size_t reflect_index(long long i, std::size_t n);

}  // namespace fb

}  // namespace prism
