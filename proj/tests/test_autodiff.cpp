#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prism/adam.hpp"
#include "prism/autodiff.hpp"
#include "prism/grad_check.hpp"
#include "prism/rng.hpp"

using namespace prism;

TEST_CASE("affine identity, zero weight, hand computation") {
  Tape t;
  const VarId x = t.leaf(Tensor({2}, {3, 4}));
  const VarId Wid = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  const VarId b0 = t.leaf(Tensor({2}, {0, 0}));
  const Tensor& y1 = t.val(affine(t, x, Wid, b0));
  CHECK(y1[0] == 3.0);
  CHECK(y1[1] == 4.0);

  const VarId x2 = t.leaf(Tensor({2}, {5, 5}));
  const VarId Wz = t.leaf(Tensor({2, 2}, {0, 0, 0, 0}));
  const VarId b1 = t.leaf(Tensor({2}, {1, 1}));
  const Tensor& y2 = t.val(affine(t, x2, Wz, b1));
  CHECK(y2[0] == 1.0);
  CHECK(y2[1] == 1.0);

  const VarId x3 = t.leaf(Tensor({2}, {1, 1}));
  const VarId W = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const Tensor& y3 = t.val(affine(t, x3, W, b0));
  CHECK(y3[0] == 3.0);
  CHECK(y3[1] == 7.0);
}

TEST_CASE("affine rejects mismatched shapes") {
  Tape t;
  const VarId x = t.leaf(Tensor({3}, {1, 2, 3}));
  const VarId W = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  const VarId b = t.leaf(Tensor({2}, {0, 0}));
  CHECK_THROWS_AS(affine(t, x, W, b), ConfigError);
}

TEST_CASE("relu splits by sign") {
  Tape t;
  const VarId x = t.leaf(Tensor({3}, {-1, 0, 2}));
  const Tensor& y = t.val(relu(t, x));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  const VarId neg = t.leaf(Tensor({4}, {-5, -1, -0.5, -100}));
  const Tensor& yn = t.val(relu(t, neg));
  for (std::size_t i = 0; i < 4; ++i) CHECK(yn[i] == 0.0);

  const VarId pos = t.leaf(Tensor({1}, {0.5}));
  CHECK(t.val(relu(t, pos))[0] == 0.5);
}

TEST_CASE("backward of sum is all ones") {
  Tape t;
  const VarId x = t.leaf(Tensor({3}, {2, -1, 7}));
  t.backward(sum(t, x));
  const Tensor& g = *t.grad_if(x);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("backward of x^2 at x=3 is 6, via fan-out accumulation") {
  Tape t;
  const VarId x = t.leaf(Tensor({1}, {3}));
  t.backward(sum(t, mul(t, x, x)));
  CHECK((*t.grad_if(x))[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient accumulation: d/dx of f(x)+f(x) = 2 f'(x)") {
  const auto grad_of = [](bool doubled) {
    Tape t;
    const VarId x = t.leaf(Tensor({2}, {1.5, -0.5}));
    const VarId W = t.leaf(Tensor({2, 2}, {0.3, -0.2, 0.8, 0.1}));
    const VarId b = t.leaf(Tensor({2}, {0.05, -0.02}));
    const VarId f = sum(t, relu(t, affine(t, x, W, b)));
    const VarId loss = doubled ? add(t, f, f) : f;
    t.backward(loss);
    return *t.grad_if(x);
  };
  const Tensor g1 = grad_of(false);
  const Tensor g2 = grad_of(true);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-14));
  }
}

TEST_CASE("backward rejects non-scalar loss and double replay") {
  Tape t;
  const VarId x = t.leaf(Tensor({3}, {1, 2, 3}));
  const VarId y = relu(t, x);
  CHECK_THROWS_AS(t.backward(y), UsageError);
  const VarId s = sum(t, y);
  t.backward(s);
  CHECK_THROWS_AS(t.backward(s), UsageError);
}

TEST_CASE("non-finite forward values raise NumericError") {
  Tape t;
  const VarId big = t.leaf(Tensor({1}, {1e308}));
  CHECK_THROWS_AS(mul(t, big, big), NumericError);
}

TEST_CASE("two-layer MLP gradient matches central finite differences") {
  Rng rng(42);
  Tensor W1({4, 3}), b1({4}), W2({1, 4}), b2({1}), x({3});
  for (std::size_t i = 0; i < W1.size(); ++i) W1[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < W2.size(); ++i) W2[i] = rng.uniform(-1, 1);
  b2[0] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);

  const auto loss_value = [&]() {
    Tape t;
    const VarId vx = t.leaf(x, false);
    const VarId h = relu(t, affine(t, vx, t.leaf(W1), t.leaf(b1)));
    const VarId y = affine(t, h, t.leaf(W2), t.leaf(b2));
    return t.val(y)[0] * t.val(y)[0];
  };
  // analytic gradient
  Tape t;
  const VarId vx = t.leaf(x, false);
  const VarId vW1 = t.leaf(W1), vb1 = t.leaf(b1), vW2 = t.leaf(W2),
              vb2 = t.leaf(b2);
  const VarId h = relu(t, affine(t, vx, vW1, vb1));
  const VarId y = affine(t, h, vW2, vb2);
  t.backward(sum(t, mul(t, y, y)));

  std::vector<Tensor*> params{&W1, &b1, &W2, &b2};
  std::vector<const Tensor*> analytic{t.grad_if(vW1), t.grad_if(vb1),
                                      t.grad_if(vW2), t.grad_if(vb2)};
  const GradCheckResult res = grad_check(loss_value, params, analytic, 1e-5);
  CHECK(res.max_rel_err < 1e-4);
  CHECK(res.checked > 0);
}

TEST_CASE("grad_check is exact for a linear model") {
  Tensor w({3}, {0.2, -0.4, 0.9});
  const Tensor x({3}, {1.0, 2.0, 3.0});
  const auto loss_value = [&]() {
    double acc = 0.0;
    for (std::size_t i = 0; i < 3; ++i) acc += w[i] * x[i];
    return acc;
  };
  std::vector<Tensor*> params{&w};
  const Tensor analytic = x;
  std::vector<const Tensor*> ag{&analytic};
  const GradCheckResult res = grad_check(loss_value, params, ag, 1e-5);
  CHECK(res.max_rel_err < 1e-8);
  CHECK(res.flagged == 0);
}

TEST_CASE("grad_check flags a relu kink at exactly zero") {
  Tensor w({1}, {0.0});
  const auto loss_value = [&]() { return w[0] > 0.0 ? w[0] : 0.0; };
  const Tensor analytic({1}, {0.0});
  std::vector<Tensor*> params{&w};
  std::vector<const Tensor*> ag{&analytic};
  const GradCheckResult res = grad_check(loss_value, params, ag, 1e-5);
  CHECK(res.flagged == 1);
  CHECK(res.checked == 0);
}

TEST_CASE("adam: zero gradient is the identity on parameters") {
  Tensor p({3}, {1.0, -2.0, 3.0});
  const Tensor orig = p;
  Tensor g({3}, {0.0, 0.0, 0.0});
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step(params, grads, st);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == orig[i]);
  CHECK(st.step_count == 5);
}

TEST_CASE("adam first step moves by about lr") {
  Tensor p({1}, {0.7});
  Tensor g({1}, {1.0});
  std::vector<Tensor*> params{&p};
  std::vector<const Tensor*> grads{&g};
  AdamState st;  // defaults: lr 1e-4, beta1 0.9, beta2 0.999, eps 1e-8
  adam_step(params, grads, st);
  // bias-corrected first step: lr * g / (|g| + eps)
  CHECK(p[0] == doctest::Approx(0.7 - 1e-4).epsilon(1e-9));
}

TEST_CASE("adam runs are bitwise deterministic") {
  const auto run = []() {
    Rng rng(7);
    Tensor p({8});
    for (std::size_t i = 0; i < 8; ++i) p[i] = rng.uniform(-1, 1);
    AdamState st;
    st.lr = 1e-2;
    std::vector<Tensor*> params{&p};
    for (int it = 0; it < 20; ++it) {
      Tensor g({8});
      for (std::size_t i = 0; i < 8; ++i) g[i] = p[i] * 0.5 + 0.1;
      std::vector<const Tensor*> grads{&g};
      adam_step(params, grads, st);
    }
    return p;
  };
  const Tensor a = run();
  const Tensor b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adam rejects an incomplete gradient map") {
  Tensor p1({2}), p2({2});
  Tensor g1({2});
  std::vector<Tensor*> params{&p1, &p2};
  std::vector<const Tensor*> grads{&g1};
  AdamState st;
  CHECK_THROWS_AS(adam_step(params, grads, st), UsageError);
}

TEST_CASE("band_stats_op values and gradient") {
  // x = (0,1,0,1): mu=.5, sigma=.5, amax=1, d1=1, d2=2, crest ~= 2
  Tape t;
  Tensor bands({1, 4, 1}, {0, 1, 0, 1});
  const VarId b = t.leaf(bands);
  const VarId s = band_stats_op(t, b, false);
  const Tensor& sv = t.val(s);
  CHECK(sv[0] == doctest::Approx(0.5));
  CHECK(sv[1] == doctest::Approx(0.5));
  CHECK(sv[2] == doctest::Approx(1.0));
  CHECK(sv[3] == doctest::Approx(1.0));
  CHECK(sv[4] == doctest::Approx(2.0));
  CHECK(sv[5] == doctest::Approx(1.0 / (0.5 + 1e-8)));

  // gradient vs finite differences on a smooth random input
  Rng rng(3);
  Tensor in({2, 8, 1});
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = rng.uniform(-2, 2);
  Tensor weights({2 * 8});  // random linear functional of the stats
  Tensor mixw({2 * 1 * 6});
  for (std::size_t i = 0; i < mixw.size(); ++i) mixw[i] = rng.uniform(-1, 1);

  const auto loss_value = [&]() {
    Tape tt;
    const VarId bb = tt.leaf(in);
    const VarId ss = band_stats_op(tt, bb, false);
    double acc = 0.0;
    for (std::size_t i = 0; i < mixw.size(); ++i) {
      acc += mixw[i] * tt.val(ss)[i];
    }
    return acc;
  };
  Tape tg;
  const VarId bb = tg.leaf(in);
  const VarId ss = band_stats_op(tg, bb, false);
  VarId weighted = mul(tg, ss, tg.leaf(Tensor({2 * 1, 6}, mixw.raw()), false));
  tg.backward(sum(tg, weighted));
  std::vector<Tensor*> params{&in};
  std::vector<const Tensor*> analytic{tg.grad_if(bb)};
  const GradCheckResult res = grad_check(loss_value, params, analytic, 1e-5);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax_bands normalizes and differentiates correctly") {
  Rng rng(5);
  const std::size_t K = 4, C = 3;
  Tensor scores({K * C, 1});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform(-3, 3);
  }
  Tape t;
  const VarId s = t.leaf(scores);
  const VarId w = softmax_bands(t, s, K, C, 0.7);
  for (std::size_t c = 0; c < C; ++c) {
    double sum_c = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum_c += t.val(w)[k * C + c];
    CHECK(sum_c == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor mixw({K * C, 1});
  for (std::size_t i = 0; i < mixw.size(); ++i) mixw[i] = rng.uniform(-1, 1);
  t.backward(sum(t, mul(t, w, t.leaf(mixw, false))));

  const auto loss_value = [&]() {
    Tape tt;
    const VarId ww = softmax_bands(tt, tt.leaf(scores), K, C, 0.7);
    double acc = 0.0;
    for (std::size_t i = 0; i < mixw.size(); ++i) {
      acc += mixw[i] * tt.val(ww)[i];
    }
    return acc;
  };
  std::vector<Tensor*> params{&scores};
  std::vector<const Tensor*> analytic{t.grad_if(s)};
  const GradCheckResult res = grad_check(loss_value, params, analytic, 1e-5);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("no-grad leaves prune the backward sweep") {
  Tape t;
  const VarId x = t.leaf(Tensor({2}, {1, 2}), /*needs_grad=*/false);
  const VarId w = t.leaf(Tensor({2}, {3, 4}));
  const VarId loss = sum(t, mul(t, x, w));
  t.backward(loss);
  CHECK(t.grad_if(x) == nullptr);
  const Tensor& gw = *t.grad_if(w);
  CHECK(gw[0] == 1.0);
  CHECK(gw[1] == 2.0);
}
