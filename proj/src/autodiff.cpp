#include "prism/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "prism/router.hpp"

namespace prism {

namespace {

constexpr double kSigmaGuard = 1e-8;  // backward denominator floor for std

void check_finite(const Tensor& v, const char* op) {
  if (!v.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

VarId Tape::leaf(Tensor value, bool needs_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, needs_grad});
  return VarId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(VarId id) {
  Node& n = nodes_[id.i];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

const Tensor* Tape::grad_if(VarId id) const {
  const Node& n = nodes_[id.i];
  return n.grad.empty() ? nullptr : &n.grad;
}

VarId Tape::push(Tensor value, bool needs_grad,
                 std::function<void(Tape&)> back) {
  const bool keep = recording_ && needs_grad;
  nodes_.push_back(
      Node{std::move(value), Tensor{}, keep ? std::move(back) : nullptr,
           needs_grad});
  return VarId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(VarId loss) {
  if (backward_done_) {
    throw UsageError("backward: tape already replayed; rebuild the forward");
  }
  if (!recording_) {
    throw UsageError("backward: tape was created in no-record mode");
  }
  if (val(loss).size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " +
                     shape_str(val(loss).shape()));
  }
  backward_done_ = true;
  grad(loss)[0] = 1.0;
  for (std::size_t i = loss.i + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && !n.grad.empty()) n.back(*this);
  }
  for (std::size_t i = 0; i <= loss.i; ++i) {
    if (!nodes_[i].grad.empty() && !nodes_[i].grad.all_finite()) {
      throw NumericError("backward: non-finite gradient at node " +
                         std::to_string(i));
    }
  }
}

// --------------------------------------------------------------------------
// Each op computes its value eagerly and registers a closure that pulls the
// output gradient and scatters into the inputs that need one. `out` is the
// id the push below will take (nodes append one at a time).

VarId linear(Tape& t, VarId X, VarId W, VarId b) {
  const Tensor& x = t.val(X);
  const Tensor& w = t.val(W);
  const Tensor& bias = t.val(b);
  if (x.rank() != 2 || w.rank() != 2 || bias.rank() != 1 ||
      x.dim(1) != w.dim(1) || bias.dim(0) != w.dim(0)) {
    throw ConfigError("linear: shape mismatch X" + shape_str(x.shape()) +
                      " W" + shape_str(w.shape()) + " b" +
                      shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), nout = w.dim(0);
  Tensor y({n, nout});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * in;
    double* yr = y.data() + i * nout;
    for (std::size_t r = 0; r < nout; ++r) {
      const double* wr = w.data() + r * in;
      double acc = bias[r];
      for (std::size_t j = 0; j < in; ++j) acc += wr[j] * xr[j];
      yr[r] = acc;
    }
  }
  check_finite(y, "linear");
  const bool ng = t.needs(X) || t.needs(W) || t.needs(b);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, X, W, b, n, in, nout](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    const Tensor& x = t.val(X);
    const Tensor& w = t.val(W);
    if (t.needs(X)) {
      Tensor& gx = t.grad(X);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = g.data() + i * nout;
        double* gxr = gx.data() + i * in;
        for (std::size_t r = 0; r < nout; ++r) {
          const double gv = gr[r];
          if (gv == 0.0) continue;
          const double* wr = w.data() + r * in;
          for (std::size_t j = 0; j < in; ++j) gxr[j] += gv * wr[j];
        }
      }
    }
    if (t.needs(W)) {
      Tensor& gw = t.grad(W);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = g.data() + i * nout;
        const double* xr = x.data() + i * in;
        for (std::size_t r = 0; r < nout; ++r) {
          const double gv = gr[r];
          if (gv == 0.0) continue;
          double* gwr = gw.data() + r * in;
          for (std::size_t j = 0; j < in; ++j) gwr[j] += gv * xr[j];
        }
      }
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = g.data() + i * nout;
        for (std::size_t r = 0; r < nout; ++r) gb[r] += gr[r];
      }
    }
  });
}

VarId affine(Tape& t, VarId x, VarId W, VarId b) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 1) {
    throw ConfigError("affine: x must be rank-1, got " +
                      shape_str(xv.shape()));
  }
  const Tensor& wv = t.val(W);
  const Tensor& bias = t.val(b);
  if (wv.rank() != 2 || wv.dim(1) != xv.dim(0) || bias.rank() != 1 ||
      bias.dim(0) != wv.dim(0)) {
    throw ConfigError("affine: shape mismatch x" + shape_str(xv.shape()) +
                      " W" + shape_str(wv.shape()) + " b" +
                      shape_str(bias.shape()));
  }
  const std::size_t in = xv.dim(0), nout = wv.dim(0);
  Tensor y({nout});
  for (std::size_t r = 0; r < nout; ++r) {
    const double* wr = wv.data() + r * in;
    double acc = bias[r];
    for (std::size_t j = 0; j < in; ++j) acc += wr[j] * xv[j];
    y[r] = acc;
  }
  check_finite(y, "affine");
  const bool ng = t.needs(x) || t.needs(W) || t.needs(b);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, x, W, b, in, nout](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(W);
    const bool nx = t.needs(x), nw = t.needs(W);
    for (std::size_t r = 0; r < nout; ++r) {
      const double gv = g[r];
      if (gv == 0.0) continue;
      const double* wr = wv.data() + r * in;
      if (nx) {
        Tensor& gx = t.grad(x);
        for (std::size_t j = 0; j < in; ++j) gx[j] += gv * wr[j];
      }
      if (nw) {
        double* gwr = t.grad(W).data() + r * in;
        for (std::size_t j = 0; j < in; ++j) gwr[j] += gv * xv[j];
      }
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t r = 0; r < nout; ++r) gb[r] += g[r];
    }
  });
}

VarId relu(Tape& t, VarId x) {
  Tensor y = t.val(x);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) y[i] = 0.0;
  }
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    const Tensor& xv = t.val(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];  // subgradient 0 at the kink
    }
  });
}

VarId add(Tape& t, VarId a, VarId b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (!av.same_shape(bv)) {
    throw ConfigError("add: shape mismatch " + shape_str(av.shape()) +
                      " vs " + shape_str(bv.shape()));
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  check_finite(y, "add");
  const bool ng = t.needs(a) || t.needs(b);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, a, b](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    if (t.needs(a)) add_into(t.grad(a), g);
    if (t.needs(b)) add_into(t.grad(b), g);
  });
}

VarId sub(Tape& t, VarId a, VarId b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (!av.same_shape(bv)) {
    throw ConfigError("sub: shape mismatch " + shape_str(av.shape()) +
                      " vs " + shape_str(bv.shape()));
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  check_finite(y, "sub");
  const bool ng = t.needs(a) || t.needs(b);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, a, b](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    if (t.needs(a)) add_into(t.grad(a), g);
    if (t.needs(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

VarId mul(Tape& t, VarId a, VarId b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (!av.same_shape(bv)) {
    throw ConfigError("mul: shape mismatch " + shape_str(av.shape()) +
                      " vs " + shape_str(bv.shape()));
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  check_finite(y, "mul");
  const bool ng = t.needs(a) || t.needs(b);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, a, b](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    if (t.needs(a)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

VarId scale(Tape& t, VarId x, double s) {
  Tensor y = t.val(x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
  check_finite(y, "scale");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x, s](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

VarId sum(Tape& t, VarId x) {
  const Tensor& xv = t.val(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  Tensor y = Tensor::scalar(acc);
  check_finite(y, "sum");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x](Tape& t) {
    const double g = (*t.grad_if(out))[0];
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

VarId mean(Tape& t, VarId x) {
  const Tensor& xv = t.val(x);
  const double n = static_cast<double>(xv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  Tensor y = Tensor::scalar(acc / n);
  check_finite(y, "mean");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x, n](Tape& t) {
    const double g = (*t.grad_if(out))[0] / n;
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

VarId mse_loss(Tape& t, VarId pred, const Tensor& target) {
  const Tensor& pv = t.val(pred);
  if (!pv.same_shape(target)) {
    throw ConfigError("mse_loss: shape mismatch " + shape_str(pv.shape()) +
                      " vs " + shape_str(target.shape()));
  }
  const double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - target[i];
    acc += d * d;
  }
  Tensor y = Tensor::scalar(acc / n);
  check_finite(y, "mse_loss");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(pred), [out, pred, target, n](Tape& t) {
    const double g = (*t.grad_if(out))[0];
    const Tensor& pv = t.val(pred);
    Tensor& gp = t.grad(pred);
    const double s = 2.0 * g / n;
    for (std::size_t i = 0; i < gp.size(); ++i) {
      gp[i] += s * (pv[i] - target[i]);
    }
  });
}

VarId slice_rows(Tape& t, VarId x, std::size_t start, std::size_t len) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2 || start + len > xv.dim(0)) {
    throw ConfigError("slice_rows: rows [" + std::to_string(start) + ", " +
                      std::to_string(start + len) + ") out of range for " +
                      shape_str(xv.shape()));
  }
  const std::size_t C = xv.dim(1);
  Tensor y({len, C});
  std::memcpy(y.data(), xv.data() + start * C, len * C * sizeof(double));
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x, start, len, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    Tensor& gx = t.grad(x);
    double* dst = gx.data() + start * C;
    const double* src = g.data();
    for (std::size_t i = 0; i < len * C; ++i) dst[i] += src[i];
  });
}

VarId rows_transposed(Tape& t, VarId x, std::size_t start, std::size_t len) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2 || start + len > xv.dim(0)) {
    throw ConfigError("rows_transposed: rows [" + std::to_string(start) +
                      ", " + std::to_string(start + len) +
                      ") out of range for " + shape_str(xv.shape()));
  }
  const std::size_t C = xv.dim(1);
  Tensor y({C, len});
  for (std::size_t i = 0; i < len; ++i) {
    const double* row = xv.data() + (start + i) * C;
    for (std::size_t c = 0; c < C; ++c) y.data()[c * len + i] = row[c];
  }
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x, start, len, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < len; ++i) {
      double* row = gx.data() + (start + i) * C;
      for (std::size_t c = 0; c < C; ++c) row[c] += g.data()[c * len + i];
    }
  });
}

VarId stitch_op(Tape& t, VarId left, VarId right, std::size_t overlap) {
  const Tensor& lv = t.val(left);
  const Tensor& rv = t.val(right);
  if (lv.rank() != 2 || !lv.same_shape(rv)) {
    throw ConfigError("stitch: children must be equal-shape [L x C]");
  }
  const std::size_t L = lv.dim(0), C = lv.dim(1);
  if (overlap >= L) throw ConfigError("stitch: overlap must be < child length");
  const std::size_t out_len = 2 * L - overlap;
  Tensor y({out_len, C});
  std::memcpy(y.data(), lv.data(), (L - overlap) * C * sizeof(double));
  for (std::size_t j = 0; j < overlap; ++j) {
    const double a = double(j + 1) / double(overlap + 1);
    const double* lrow = lv.data() + (L - overlap + j) * C;
    const double* rrow = rv.data() + j * C;
    double* orow = y.data() + (L - overlap + j) * C;
    for (std::size_t c = 0; c < C; ++c) {
      orow[c] = (1.0 - a) * lrow[c] + a * rrow[c];
    }
  }
  std::memcpy(y.data() + L * C, rv.data() + overlap * C,
              (L - overlap) * C * sizeof(double));
  const bool ng = t.needs(left) || t.needs(right);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, left, right, overlap, L, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    if (t.needs(left)) {
      Tensor& gl = t.grad(left);
      for (std::size_t i = 0; i < (L - overlap) * C; ++i) {
        gl.data()[i] += g.data()[i];
      }
      for (std::size_t j = 0; j < overlap; ++j) {
        const double a = double(j + 1) / double(overlap + 1);
        const double* grow = g.data() + (L - overlap + j) * C;
        double* glrow = gl.data() + (L - overlap + j) * C;
        for (std::size_t c = 0; c < C; ++c) glrow[c] += (1.0 - a) * grow[c];
      }
    }
    if (t.needs(right)) {
      Tensor& gr = t.grad(right);
      for (std::size_t j = 0; j < overlap; ++j) {
        const double a = double(j + 1) / double(overlap + 1);
        const double* grow = g.data() + (L - overlap + j) * C;
        double* grrow = gr.data() + j * C;
        for (std::size_t c = 0; c < C; ++c) grrow[c] += a * grow[c];
      }
      for (std::size_t i = 0; i < (L - overlap) * C; ++i) {
        gr.data()[overlap * C + i] += g.data()[L * C + i];
      }
    }
  });
}

VarId decompose_op(Tape& t, VarId x, const FilterSpec& spec) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2) {
    throw ConfigError("decompose: segment must be [L x C], got " +
                      shape_str(xv.shape()));
  }
  const std::size_t L = xv.dim(0), C = xv.dim(1);
  spec.validate_for_length(L);
  Tensor y({spec.bands, L, C});
  fb::decompose_values(spec, xv.data(), L, C, y.data());
  check_finite(y, "decompose");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(x), [out, x, spec, L, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    Tensor& gx = t.grad(x);
    fb::decompose_adjoint(spec, g.data(), L, C, gx.data());
  });
}

VarId band_of(Tape& t, VarId bands, std::size_t k) {
  const Tensor& bv = t.val(bands);
  if (bv.rank() != 3 || k >= bv.dim(0)) {
    throw ConfigError("band_of: invalid band index " + std::to_string(k) +
                      " for " + shape_str(bv.shape()));
  }
  const std::size_t L = bv.dim(1), C = bv.dim(2);
  Tensor y({L, C});
  std::memcpy(y.data(), bv.data() + k * L * C, L * C * sizeof(double));
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(bands), [out, bands, k, L, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    Tensor& gb = t.grad(bands);
    double* dst = gb.data() + k * L * C;
    for (std::size_t i = 0; i < L * C; ++i) dst[i] += g.data()[i];
  });
}

// stats row layout: (mu, sigma, a_max, d1, d2, crest)
VarId band_stats_op(Tape& t, VarId bands, bool clamp_crest) {
  const Tensor& bv = t.val(bands);
  if (bv.rank() != 3) {
    throw ConfigError("band_stats: expected [K, L, C], got " +
                      shape_str(bv.shape()));
  }
  const std::size_t K = bv.dim(0), L = bv.dim(1), C = bv.dim(2);
  if (L < 3) {
    throw ConfigError(
        "band_stats: segment length must be >= 3 for second differences, "
        "got " + std::to_string(L));
  }
  Tensor y({K * C, 6});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* col = bv.data() + k * L * C + c;
      double s = 0.0;
      for (std::size_t i = 0; i < L; ++i) s += col[i * C];
      const double mu = s / double(L);
      double var = 0.0, amax = 0.0;
      for (std::size_t i = 0; i < L; ++i) {
        const double v = col[i * C];
        var += (v - mu) * (v - mu);
        amax = std::max(amax, std::abs(v));
      }
      const double sigma = std::sqrt(var / double(L));
      double d1 = 0.0;
      for (std::size_t i = 0; i + 1 < L; ++i) {
        d1 += std::abs(col[(i + 1) * C] - col[i * C]);
      }
      d1 /= double(L - 1);
      double d2 = 0.0;
      for (std::size_t i = 0; i + 2 < L; ++i) {
        d2 += std::abs(col[(i + 2) * C] - 2.0 * col[(i + 1) * C] + col[i * C]);
      }
      d2 /= double(L - 2);
      double crest = amax / (sigma + kStatsEps);
      if (clamp_crest && crest > kCrestClamp) crest = kCrestClamp;
      double* row = y.data() + (k * C + c) * 6;
      row[0] = mu;
      row[1] = sigma;
      row[2] = amax;
      row[3] = d1;
      row[4] = d2;
      row[5] = crest;
    }
  }
  check_finite(y, "band_stats");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(
      std::move(y), t.needs(bands), [out, bands, K, L, C, clamp_crest](Tape& t) {
        const Tensor& g = *t.grad_if(out);
        const Tensor& bv = t.val(bands);
        const Tensor& sv = t.val(out);
        Tensor& gb = t.grad(bands);
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t c = 0; c < C; ++c) {
            const double* col = bv.data() + k * L * C + c;
            double* gcol = gb.data() + k * L * C + c;
            const double* srow = sv.data() + (k * C + c) * 6;
            const double* grow = g.data() + (k * C + c) * 6;
            const double mu = srow[0], sigma = srow[1], amax = srow[2],
                         crest = srow[5];
            const bool crest_clamped = clamp_crest && crest >= kCrestClamp;
            // crest = amax / (sigma + eps): fold its chain into the amax
            // and sigma contributions (zero when the clamp is active)
            const double denom = sigma + kStatsEps;
            double g_sigma = grow[1];
            double g_amax = grow[2];
            if (!crest_clamped) {
              g_amax += grow[5] / denom;
              g_sigma -= grow[5] * amax / (denom * denom);
            }
            const double g_mu = grow[0], g_d1 = grow[3], g_d2 = grow[4];
            if (g_mu != 0.0) {
              const double s = g_mu / double(L);
              for (std::size_t i = 0; i < L; ++i) gcol[i * C] += s;
            }
            // population std, epsilon-guarded denominator
            if (g_sigma != 0.0) {
              const double denom_s = double(L) * std::max(sigma, kSigmaGuard);
              const double s = g_sigma / denom_s;
              for (std::size_t i = 0; i < L; ++i) {
                gcol[i * C] += s * (col[i * C] - mu);
              }
            }
            // max |x|: routed to the first maximizing index
            if (g_amax != 0.0) {
              std::size_t arg = 0;
              double best = -1.0;
              for (std::size_t i = 0; i < L; ++i) {
                const double a = std::abs(col[i * C]);
                if (a > best) {
                  best = a;
                  arg = i;
                }
              }
              gcol[arg * C] += g_amax * sgn(col[arg * C]);
            }
            if (g_d1 != 0.0) {
              const double s = g_d1 / double(L - 1);
              for (std::size_t i = 0; i + 1 < L; ++i) {
                const double sg = sgn(col[(i + 1) * C] - col[i * C]);
                gcol[(i + 1) * C] += s * sg;
                gcol[i * C] -= s * sg;
              }
            }
            if (g_d2 != 0.0) {
              const double s = g_d2 / double(L - 2);
              for (std::size_t i = 0; i + 2 < L; ++i) {
                const double sg = sgn(col[(i + 2) * C] -
                                      2.0 * col[(i + 1) * C] + col[i * C]);
                gcol[(i + 2) * C] += s * sg;
                gcol[(i + 1) * C] -= 2.0 * s * sg;
                gcol[i * C] += s * sg;
              }
            }
          }
        }
      });
}

VarId softmax_bands(Tape& t, VarId scores, std::size_t K, std::size_t C,
                    double tau) {
  if (tau <= 0.0) throw ConfigError("softmax: temperature must be > 0");
  const Tensor& sv = t.val(scores);
  if (sv.size() != K * C) {
    throw ConfigError("softmax: expected " + std::to_string(K * C) +
                      " scores, got " + shape_str(sv.shape()));
  }
  Tensor y = sv;
  for (std::size_t c = 0; c < C; ++c) {
    double mx = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
      mx = std::max(mx, sv[k * C + c] / tau);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = std::exp(sv[k * C + c] / tau - mx);
      y[k * C + c] = e;
      z += e;
    }
    for (std::size_t k = 0; k < K; ++k) y[k * C + c] /= z;
  }
  check_finite(y, "softmax");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(scores), [out, scores, K, C, tau](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    const Tensor& w = t.val(out);
    Tensor& gs = t.grad(scores);
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        dot += g[k * C + c] * w[k * C + c];
      }
      for (std::size_t k = 0; k < K; ++k) {
        gs[k * C + c] += w[k * C + c] * (g[k * C + c] - dot) / tau;
      }
    }
  });
}

VarId scale_bands(Tape& t, VarId bands, VarId w) {
  const Tensor& bv = t.val(bands);
  const Tensor& wv = t.val(w);
  if (bv.rank() != 3) {
    throw ConfigError("scale_bands: expected [K, L, C], got " +
                      shape_str(bv.shape()));
  }
  const std::size_t K = bv.dim(0), L = bv.dim(1), C = bv.dim(2);
  if (wv.size() != K * C) {
    throw ConfigError("scale_bands: weights size " +
                      std::to_string(wv.size()) + " != K*C = " +
                      std::to_string(K * C));
  }
  Tensor y = bv;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < L; ++i) {
      double* row = y.data() + (k * L + i) * C;
      const double* wrow = wv.data() + k * C;
      for (std::size_t c = 0; c < C; ++c) row[c] *= wrow[c];
    }
  }
  check_finite(y, "scale_bands");
  const bool ng = t.needs(bands) || t.needs(w);
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), ng, [out, bands, w, K, L, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    const Tensor& bv = t.val(bands);
    const Tensor& wv = t.val(w);
    if (t.needs(bands)) {
      Tensor& gb = t.grad(bands);
      for (std::size_t k = 0; k < K; ++k) {
        const double* wrow = wv.data() + k * C;
        for (std::size_t i = 0; i < L; ++i) {
          const double* grow = g.data() + (k * L + i) * C;
          double* gbrow = gb.data() + (k * L + i) * C;
          for (std::size_t c = 0; c < C; ++c) gbrow[c] += wrow[c] * grow[c];
        }
      }
    }
    if (t.needs(w)) {
      Tensor& gw = t.grad(w);
      for (std::size_t k = 0; k < K; ++k) {
        double* gwrow = gw.data() + k * C;
        for (std::size_t i = 0; i < L; ++i) {
          const double* grow = g.data() + (k * L + i) * C;
          const double* brow = bv.data() + (k * L + i) * C;
          for (std::size_t c = 0; c < C; ++c) gwrow[c] += brow[c] * grow[c];
        }
      }
    }
  });
}

VarId sum_bands(Tape& t, VarId bands) {
  const Tensor& bv = t.val(bands);
  if (bv.rank() != 3) {
    throw ConfigError("sum_bands: expected [K, L, C], got " +
                      shape_str(bv.shape()));
  }
  const std::size_t K = bv.dim(0), L = bv.dim(1), C = bv.dim(2);
  Tensor y({L, C});
  for (std::size_t k = 0; k < K; ++k) {
    const double* plane = bv.data() + k * L * C;
    for (std::size_t i = 0; i < L * C; ++i) y.data()[i] += plane[i];
  }
  check_finite(y, "sum_bands");
  const VarId out{static_cast<std::uint32_t>(t.size())};
  return t.push(std::move(y), t.needs(bands), [out, bands, K, L, C](Tape& t) {
    const Tensor& g = *t.grad_if(out);
    Tensor& gb = t.grad(bands);
    for (std::size_t k = 0; k < K; ++k) {
      double* plane = gb.data() + k * L * C;
      for (std::size_t i = 0; i < L * C; ++i) plane[i] += g.data()[i];
    }
  });
}

}  // namespace prism
