#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prism/rng.hpp"
#include "prism/router.hpp"

using namespace prism;

namespace {

MlpParams random_mlp(std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  MlpParams p;
  p.w1 = Tensor({hidden, 6});
  p.b1 = Tensor({hidden});
  p.w2 = Tensor({1, hidden});
  p.b2 = Tensor({1});
  for (std::size_t i = 0; i < p.w1.size(); ++i) p.w1[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < p.b1.size(); ++i) p.b1[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < p.w2.size(); ++i) p.w2[i] = rng.uniform(-1, 1);
  p.b2[0] = rng.uniform(-1, 1);
  return p;
}

std::vector<std::vector<BandStats>> random_stats(std::size_t K, std::size_t C,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<BandStats>> s(K, std::vector<BandStats>(C));
  for (auto& row : s) {
    for (BandStats& st : row) {
      st.mu = rng.uniform(-2, 2);
      st.sigma = rng.uniform(0, 2);
      st.a_max = rng.uniform(0, 3);
      st.d1 = rng.uniform(0, 2);
      st.d2 = rng.uniform(0, 2);
      st.crest = st.a_max / (st.sigma + kStatsEps);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("band_stats of a constant") {
  const std::vector<double> x(16, 2.0);
  const BandStats s = band_stats(x);
  CHECK(s.mu == 2.0);
  CHECK(s.sigma == 0.0);
  CHECK(s.a_max == 2.0);
  CHECK(s.d1 == 0.0);
  CHECK(s.d2 == 0.0);
  CHECK(s.crest == doctest::Approx(2e8));
}

TEST_CASE("band_stats of zeros") {
  const std::vector<double> x(8, 0.0);
  const BandStats s = band_stats(x);
  CHECK(s.mu == 0.0);
  CHECK(s.sigma == 0.0);
  CHECK(s.a_max == 0.0);
  CHECK(s.d1 == 0.0);
  CHECK(s.d2 == 0.0);
  CHECK(s.crest == 0.0);
}

TEST_CASE("band_stats hand computation on (0,1,0,1)") {
  const std::vector<double> x{0, 1, 0, 1};
  const BandStats s = band_stats(x);
  CHECK(s.mu == doctest::Approx(0.5));
  CHECK(s.sigma == doctest::Approx(0.5));
  CHECK(s.a_max == doctest::Approx(1.0));
  CHECK(s.d1 == doctest::Approx(1.0));
  CHECK(s.d2 == doctest::Approx(2.0));
  CHECK(s.crest == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("band_stats rejects short inputs and supports the crest clamp") {
  CHECK_THROWS_AS(band_stats(std::vector<double>{1.0, 2.0}), ConfigError);
  const std::vector<double> x(8, 3.0);  // constant: crest would be 3e8
  CHECK(band_stats(x, true).crest == doctest::Approx(1e6));
}

TEST_CASE("identical stats across bands give uniform weights") {
  const std::size_t K = 5, C = 3;
  std::vector<std::vector<BandStats>> stats(K, std::vector<BandStats>(C));
  for (auto& row : stats) {
    for (BandStats& s : row) {
      s = band_stats(std::vector<double>{0.4, -0.2, 0.9, 0.1});
    }
  }
  const MlpParams mlp = random_mlp(16, 9);
  RouterConfig cfg;
  const ImportanceWeights w = score_and_weight(stats, &mlp, cfg, {1, 0});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      CHECK(w.weights.at(k, c) == doctest::Approx(1.0 / K).epsilon(1e-12));
    }
  }
}

TEST_CASE("temperature limits: hot goes uniform, cold goes one-hot") {
  const std::size_t K = 4, C = 2;
  const auto stats = random_stats(K, C, 31);
  const MlpParams mlp = random_mlp(8, 32);
  RouterConfig cfg;

  cfg.temperature = 1e6;
  const ImportanceWeights hot = score_and_weight(stats, &mlp, cfg, {1, 0});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      CHECK(std::abs(hot.weights.at(k, c) - 1.0 / K) < 1e-6);
    }
  }

  cfg.temperature = 0.01;
  const ImportanceWeights cold = score_and_weight(stats, &mlp, cfg, {1, 0});
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t argmax = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (cold.scores.at(k, c) > cold.scores.at(argmax, c)) argmax = k;
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double expect = k == argmax ? 1.0 : 0.0;
      CHECK(std::abs(cold.weights.at(k, c) - expect) < 1e-6);
    }
  }
}

TEST_CASE("weights are a distribution for every mode") {
  const std::size_t K = 6, C = 4;
  const MlpParams mlp = random_mlp(32, 77);
  for (const RouterMode mode :
       {RouterMode::per_level, RouterMode::shared_all, RouterMode::per_node,
        RouterMode::uniform}) {
    RouterConfig cfg;
    cfg.mode = mode;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
      const auto stats = random_stats(K, C, 1000 + trial);
      const ImportanceWeights w =
          score_and_weight(stats, cfg.has_mlp() ? &mlp : nullptr, cfg, {1, 1});
      for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double v = w.weights.at(k, c);
          CHECK(v > 0.0);
          CHECK(v < 1.0 + 1e-12);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("passthrough mode pins every weight at 1") {
  RouterConfig cfg;
  cfg.mode = RouterMode::passthrough;
  const auto stats = random_stats(3, 2, 5);
  const ImportanceWeights w = score_and_weight(stats, nullptr, cfg, {1, 0});
  for (std::size_t i = 0; i < w.weights.size(); ++i) {
    CHECK(w.weights[i] == 1.0);
  }
}

TEST_CASE("softmax is invariant to shifting a channel's scores") {
  const std::size_t K = 5, C = 1;
  auto stats = random_stats(K, C, 8);
  const MlpParams mlp = random_mlp(16, 21);
  RouterConfig cfg;
  const ImportanceWeights base = score_and_weight(stats, &mlp, cfg, {1, 0});

  // shifting all scores equally must leave the weights unchanged; emulate
  // by softmaxing shifted copies of the same score vector
  Tensor shifted = base.scores;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 123.456;
  const auto softmax_col = [&](const Tensor& s) {
    std::vector<double> w(K);
    double mx = -1e300;
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, s.at(k, 0));
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(s.at(k, 0) - mx);
    for (std::size_t k = 0; k < K; ++k) {
      w[k] = std::exp(s.at(k, 0) - mx) / z;
    }
    return w;
  };
  const auto w1 = softmax_col(base.scores);
  const auto w2 = softmax_col(shifted);
  for (std::size_t k = 0; k < K; ++k) {
    CHECK(std::abs(w1[k] - w2[k]) <= 1e-12);
    CHECK(std::abs(w1[k] - base.weights.at(k, 0)) <= 1e-12);
  }
}

TEST_CASE("sharing contract across modes") {
  const auto stats = random_stats(4, 2, 13);
  const MlpParams mlp_a = random_mlp(8, 1);
  const MlpParams mlp_b = random_mlp(8, 2);

  RouterConfig cfg;  // per_level
  // same level, different node index, same parameters -> identical weights
  const ImportanceWeights w1 = score_and_weight(stats, &mlp_a, cfg, {2, 0});
  const ImportanceWeights w2 = score_and_weight(stats, &mlp_a, cfg, {2, 3});
  for (std::size_t i = 0; i < w1.weights.size(); ++i) {
    CHECK(w1.weights[i] == w2.weights[i]);
  }
  // different level gets its own group, so weights may differ
  const ImportanceWeights w3 = score_and_weight(stats, &mlp_b, cfg, {1, 0});
  bool any_diff = false;
  for (std::size_t i = 0; i < w1.weights.size(); ++i) {
    if (w1.weights[i] != w3.weights[i]) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("router group bookkeeping per mode") {
  CHECK(router_group_count(RouterMode::per_level, 1) == 1);
  CHECK(router_group_count(RouterMode::per_level, 3) == 3);
  CHECK(router_group_count(RouterMode::per_level, 0) == 1);  // root is scored
  CHECK(router_group_count(RouterMode::shared_all, 3) == 1);
  CHECK(router_group_count(RouterMode::per_node, 2) == 6);  // 2 + 4 nodes
  CHECK(router_group_count(RouterMode::uniform, 2) == 0);

  CHECK(router_group_index(RouterMode::per_level, {2, 1}, 2) == 1);
  CHECK(router_group_index(RouterMode::shared_all, {2, 1}, 2) == 0);
  CHECK(router_group_index(RouterMode::per_node, {1, 1}, 2) == 1);
  CHECK(router_group_index(RouterMode::per_node, {2, 0}, 2) == 2);
  CHECK(router_group_index(RouterMode::per_node, {2, 3}, 2) == 5);
  CHECK_THROWS_AS(router_group_index(RouterMode::uniform, {1, 0}, 1),
                  UsageError);
}
