#include "prism/filter_bank.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace prism {

FilterFamily filter_family_from_string(const std::string& s) {
  if (s == "haar") return FilterFamily::haar;
  if (s == "fft") return FilterFamily::fft;
  if (s == "ema") return FilterFamily::ema;
  if (s == "dog") return FilterFamily::dog;
  if (s == "binomial") return FilterFamily::binomial;
  throw ConfigError("unknown filter family '" + s +
                    "' (expected haar|fft|ema|dog|binomial)");
}

std::string to_string(FilterFamily f) {
  switch (f) {
    case FilterFamily::haar: return "haar";
    case FilterFamily::fft: return "fft";
    case FilterFamily::ema: return "ema";
    case FilterFamily::dog: return "dog";
    case FilterFamily::binomial: return "binomial";
  }
  return "?";
}

FilterSpec FilterSpec::defaults(FilterFamily family) {
  FilterSpec s;
  s.family = family;
  switch (family) {
    case FilterFamily::haar: s.bands = 6; break;
    case FilterFamily::fft: s.bands = 4; break;
    case FilterFamily::ema: s.bands = 4; break;
    case FilterFamily::dog: s.bands = 6; break;
    case FilterFamily::binomial: s.bands = 4; break;
  }
  return s;
}

std::size_t FilterSpec::min_length() const {
  if (bands == 1) return 1;
  if (family == FilterFamily::haar) {
    return std::size_t(1) << (bands - 1);  // largest moving-average kernel
  }
  return 2;
}

void FilterSpec::validate() const {
  if (bands < 1) throw ConfigError("filter: band count must be >= 1");
  switch (family) {
    case FilterFamily::ema:
      if (ema_tau0 < 1.0) throw ConfigError("filter: ema tau0 must be >= 1");
      if (ema_grow < 1.0) throw ConfigError("filter: ema grow must be >= 1");
      break;
    case FilterFamily::dog:
      if (dog_sigma0 <= 0.0) throw ConfigError("filter: dog sigma0 must be > 0");
      if (dog_ratio <= 1.0) throw ConfigError("filter: dog ratio must be > 1");
      break;
    case FilterFamily::binomial:
      if (binom_k0 < 1) throw ConfigError("filter: binomial k0 must be >= 1");
      if (binom_grow < 1) throw ConfigError("filter: binomial k_grow must be >= 1");
      break;
    default: break;
  }
}

void FilterSpec::validate_for_length(std::size_t segment_len) const {
  validate();
  if (segment_len < min_length()) {
    throw ConfigError("filter: segment length " + std::to_string(segment_len) +
                      " below minimum " + std::to_string(min_length()) +
                      " for family " + to_string(family) + " with K=" +
                      std::to_string(bands));
  }
}

Tensor BandSet::band(std::size_t k) const {
  const std::size_t L = length(), C = channels();
  Tensor out({L, C});
  std::memcpy(out.data(), bands.data() + k * L * C, L * C * sizeof(double));
  return out;
}

namespace fb {

std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long m = static_cast<long long>(n);
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

namespace {

struct FirKernel {
  std::vector<double> taps;
  std::vector<long long> offsets;
};

// out[t][c] = sum_i taps[i] * x[reflect(t + off[i])][c]
void smooth_fir(const double* x, std::size_t L, std::size_t C,
                const FirKernel& k, double* out) {
  for (std::size_t t = 0; t < L; ++t) {
    double* orow = out + t * C;
    for (std::size_t c = 0; c < C; ++c) orow[c] = 0.0;
    for (std::size_t i = 0; i < k.taps.size(); ++i) {
      const double w = k.taps[i];
      const double* xrow =
          x + reflect_index(static_cast<long long>(t) + k.offsets[i], L) * C;
      for (std::size_t c = 0; c < C; ++c) orow[c] += w * xrow[c];
    }
  }
}

// gx[reflect(t + off[i])][c] += taps[i] * g[t][c]
void smooth_fir_adjoint(const double* g, std::size_t L, std::size_t C,
                        const FirKernel& k, double* gx) {
  for (std::size_t t = 0; t < L; ++t) {
    const double* grow = g + t * C;
    for (std::size_t i = 0; i < k.taps.size(); ++i) {
      const double w = k.taps[i];
      double* xrow =
          gx + reflect_index(static_cast<long long>(t) + k.offsets[i], L) * C;
      for (std::size_t c = 0; c < C; ++c) xrow[c] += w * grow[c];
    }
  }
}

FirKernel haar_kernel(std::size_t j) {
  const std::size_t m = std::size_t(1) << (j + 1);
  FirKernel k;
  k.taps.assign(m, 1.0 / static_cast<double>(m));
  k.offsets.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    k.offsets[i] = static_cast<long long>(i) - static_cast<long long>(m / 2);
  }
  return k;
}

FirKernel dog_kernel(double sigma) {
  const long long r = static_cast<long long>(std::ceil(4.0 * sigma));
  FirKernel k;
  double sum = 0.0;
  for (long long o = -r; o <= r; ++o) {
    const double w = std::exp(-0.5 * (o / sigma) * (o / sigma));
    k.taps.push_back(w);
    k.offsets.push_back(o);
    sum += w;
  }
  for (double& w : k.taps) w /= sum;  // keeps constants exactly
  return k;
}

FirKernel binomial_kernel(std::size_t order) {
  std::vector<double> taps{1.0};
  for (std::size_t i = 0; i < order; ++i) {
    std::vector<double> next(taps.size() + 1, 0.0);
    for (std::size_t j = 0; j < taps.size(); ++j) {
      next[j] += 0.5 * taps[j];
      next[j + 1] += 0.5 * taps[j];
    }
    taps = std::move(next);
  }
  FirKernel k;
  k.taps = std::move(taps);
  const long long half = static_cast<long long>((order + 1) / 2);
  for (std::size_t i = 0; i < k.taps.size(); ++i) {
    k.offsets.push_back(static_cast<long long>(i) - half);
  }
  return k;
}

// s[0] = x[0]; s[t] = a*x[t] + (1-a)*s[t-1]
void smooth_ema(const double* x, std::size_t L, std::size_t C, double alpha,
                double* out) {
  for (std::size_t c = 0; c < C; ++c) out[c] = x[c];
  for (std::size_t t = 1; t < L; ++t) {
    const double* xrow = x + t * C;
    const double* prev = out + (t - 1) * C;
    double* orow = out + t * C;
    for (std::size_t c = 0; c < C; ++c) {
      orow[c] = alpha * xrow[c] + (1.0 - alpha) * prev[c];
    }
  }
}

// adjoint of smooth_ema: gx[t] += alpha * acc[t] (t >= 1), gx[0] += acc[0],
// where acc[t] = g[t] + (1-alpha) * acc[t+1].
void smooth_ema_adjoint(const double* g, std::size_t L, std::size_t C,
                        double alpha, double* gx) {
  std::vector<double> acc(g + (L - 1) * C, g + L * C);
  for (std::size_t c = 0; c < C; ++c) {
    gx[(L - 1) * C + c] += (L == 1 ? 1.0 : alpha) * acc[c];
  }
  for (std::size_t t = L - 1; t-- > 0;) {
    const double* grow = g + t * C;
    for (std::size_t c = 0; c < C; ++c) {
      acc[c] = grow[c] + (1.0 - alpha) * acc[c];
    }
    double* xrow = gx + t * C;
    const double scale = (t == 0) ? 1.0 : alpha;
    for (std::size_t c = 0; c < C; ++c) xrow[c] += scale * acc[c];
  }
}

double ema_alpha(const FilterSpec& spec, std::size_t j) {
  const double tau = spec.ema_tau0 * std::pow(spec.ema_grow, double(j));
  return 1.0 / tau;
}

FirKernel fir_kernel_for(const FilterSpec& spec, std::size_t j) {
  switch (spec.family) {
    case FilterFamily::haar: return haar_kernel(j);
    case FilterFamily::dog:
      return dog_kernel(spec.dog_sigma0 * std::pow(spec.dog_ratio, double(j)));
    case FilterFamily::binomial: {
      std::size_t order = spec.binom_k0;
      for (std::size_t i = 0; i < j; ++i) order *= spec.binom_grow;
      return binomial_kernel(order);
    }
    default: throw UsageError("fir_kernel_for: not a FIR family");
  }
}

// ---- real DFT with cached twiddle tables (segment lengths recur) ----

struct DftTables {
  std::size_t L = 0;
  std::size_t nbins = 0;
  std::vector<double> cos_t;  // [nbins * L]
  std::vector<double> sin_t;
};

std::shared_ptr<const DftTables> dft_tables(std::size_t L) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const DftTables>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(L);
  if (it != cache.end()) return it->second;
  auto t = std::make_shared<DftTables>();
  t->L = L;
  t->nbins = L / 2 + 1;
  t->cos_t.resize(t->nbins * L);
  t->sin_t.resize(t->nbins * L);
  const double w = 2.0 * 3.14159265358979323846 / static_cast<double>(L);
  for (std::size_t b = 0; b < t->nbins; ++b) {
    for (std::size_t n = 0; n < L; ++n) {
      const double ph = w * static_cast<double>(b) * static_cast<double>(n);
      t->cos_t[b * L + n] = std::cos(ph);
      t->sin_t[b * L + n] = std::sin(ph);
    }
  }
  cache.emplace(L, t);
  return t;
}

/// bin -> band assignment; every bin belongs to exactly one band so the
/// masked inverses always sum back to the input.
std::size_t fft_band_of_bin(std::size_t b, std::size_t L, std::size_t K,
                            bool equal_width) {
  const std::size_t nbins = L / 2 + 1;
  if (equal_width) {
    const std::size_t r = b * K / nbins;  // range index, low freq = 0
    return K - 1 - std::min(r, K - 1);
  }
  if (b == 0) return K - 1;
  // dyadic octaves down from Nyquist: band k covers ratios in
  // (2^-(k+1), 2^-k] of L/2
  const double ratio = static_cast<double>(b) / (static_cast<double>(L) / 2.0);
  const double k = std::floor(-std::log2(ratio));
  if (k < 0.0) return 0;
  return std::min(static_cast<std::size_t>(k), K - 1);
}

// Projection onto one band's bins: out = irdft(mask_k . rdft(x)), one
// channel at a time. Symmetric as a matrix, so it is its own adjoint.
void fft_band_project(const DftTables& t, const FilterSpec& spec,
                      std::size_t k, const double* x, std::size_t L,
                      std::size_t C, double* out) {
  const std::size_t nb = t.nbins;
  std::vector<double> re(nb), im(nb);
  std::vector<double> xc(L);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t n = 0; n < L; ++n) xc[n] = x[n * C + c];
    for (std::size_t b = 0; b < nb; ++b) {
      if (fft_band_of_bin(b, L, spec.bands, spec.fft_equal_width) != k) {
        re[b] = im[b] = 0.0;
        continue;
      }
      const double* ct = &t.cos_t[b * L];
      const double* st = &t.sin_t[b * L];
      double sr = 0.0, si = 0.0;
      for (std::size_t n = 0; n < L; ++n) {
        sr += xc[n] * ct[n];
        si -= xc[n] * st[n];
      }
      re[b] = sr;
      im[b] = si;
    }
    const bool even = (L % 2 == 0);
    for (std::size_t n = 0; n < L; ++n) {
      double acc = re[0];
      for (std::size_t b = 1; b < nb; ++b) {
        const bool nyquist = even && b == nb - 1;
        const double scale = nyquist ? 1.0 : 2.0;
        acc += scale * (re[b] * t.cos_t[b * L + n] - im[b] * t.sin_t[b * L + n]);
      }
      out[n * C + c] = acc / static_cast<double>(L);
    }
  }
}

}  // namespace

void decompose_values(const FilterSpec& spec, const double* x, std::size_t L,
                      std::size_t C, double* bands) {
  const std::size_t K = spec.bands;
  const std::size_t plane = L * C;
  if (K == 1) {
    std::memcpy(bands, x, plane * sizeof(double));
    return;
  }
  if (spec.family == FilterFamily::fft) {
    auto t = dft_tables(L);
    for (std::size_t k = 0; k < K; ++k) {
      fft_band_project(*t, spec, k, x, L, C, bands + k * plane);
    }
    return;
  }
  // telescoping: band_j = s_{j-1} - s_j with s_{-1} = x, band_{K-1} = s_{K-2};
  // each smoothing is applied to the original segment
  std::vector<double> prev(x, x + plane);
  std::vector<double> smooth(plane);
  for (std::size_t j = 0; j + 1 < K; ++j) {
    if (spec.family == FilterFamily::ema) {
      smooth_ema(x, L, C, ema_alpha(spec, j), smooth.data());
    } else {
      smooth_fir(x, L, C, fir_kernel_for(spec, j), smooth.data());
    }
    double* b = bands + j * plane;
    for (std::size_t i = 0; i < plane; ++i) b[i] = prev[i] - smooth[i];
    prev = smooth;
  }
  std::memcpy(bands + (K - 1) * plane, prev.data(), plane * sizeof(double));
}

void decompose_adjoint(const FilterSpec& spec, const double* gbands,
                       std::size_t L, std::size_t C, double* gx) {
  const std::size_t K = spec.bands;
  const std::size_t plane = L * C;
  if (K == 1) {
    for (std::size_t i = 0; i < plane; ++i) gx[i] += gbands[i];
    return;
  }
  if (spec.family == FilterFamily::fft) {
    // each band projection is symmetric, so the adjoint applies it again
    auto t = dft_tables(L);
    std::vector<double> tmp(plane);
    for (std::size_t k = 0; k < K; ++k) {
      fft_band_project(*t, spec, k, gbands + k * plane, L, C, tmp.data());
      for (std::size_t i = 0; i < plane; ++i) gx[i] += tmp[i];
    }
    return;
  }
  // gx += g_0 + sum_j S_j^T (g_{j+1} - g_j); S_j applied to x directly
  const double* g0 = gbands;
  for (std::size_t i = 0; i < plane; ++i) gx[i] += g0[i];
  std::vector<double> diff(plane);
  for (std::size_t j = 0; j + 1 < K; ++j) {
    const double* gj = gbands + j * plane;
    const double* gj1 = gbands + (j + 1) * plane;
    for (std::size_t i = 0; i < plane; ++i) diff[i] = gj1[i] - gj[i];
    if (spec.family == FilterFamily::ema) {
      smooth_ema_adjoint(diff.data(), L, C, ema_alpha(spec, j), gx);
    } else {
      smooth_fir_adjoint(diff.data(), L, C, fir_kernel_for(spec, j), gx);
    }
  }
}

}  // namespace fb

BandSet decompose(const Tensor& segment, const FilterSpec& spec) {
  if (segment.rank() != 2) {
    throw ConfigError("decompose: segment must be [L x C], got " +
                      shape_str(segment.shape()));
  }
  const std::size_t L = segment.dim(0), C = segment.dim(1);
  spec.validate_for_length(L);
  BandSet out;
  out.spec = spec;
  out.bands = Tensor({spec.bands, L, C});
  fb::decompose_values(spec, segment.data(), L, C, out.bands.data());
  return out;
}

Tensor recombine(const BandSet& set, const Tensor& weights) {
  const std::size_t K = set.band_count(), L = set.length(), C = set.channels();
  if (weights.rank() != 2 || weights.dim(0) != K || weights.dim(1) != C) {
    throw ConfigError("recombine: weights must be [K x C] = [" +
                      std::to_string(K) + " x " + std::to_string(C) +
                      "], got " + shape_str(weights.shape()));
  }
  Tensor out({L, C});
  const double* b = set.bands.data();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        out.at(t, c) += weights.at(k, c) * b[(k * L + t) * C + c];
      }
    }
  }
  return out;
}

}  // namespace prism
