#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prism/rng.hpp"
#include "prism/tree.hpp"

using namespace prism;

namespace {

Tensor random_signal(std::size_t T, std::size_t C, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({T, C});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-5, 5);
  return x;
}

FilterSpec haar3() {
  FilterSpec f = FilterSpec::defaults(FilterFamily::haar);
  f.bands = 3;
  return f;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("plan reproduces the length recurrence 336 -> 172 -> 90") {
  const PartitionPlan p1 = plan(336, 8, 1, haar3());
  REQUIRE(p1.level_lengths.size() == 2);
  CHECK(p1.level_lengths[0] == 336);
  CHECK(p1.level_lengths[1] == 172);
  CHECK(p1.leaf_count == 2);

  const PartitionPlan p2 = plan(336, 8, 2, haar3());
  REQUIRE(p2.level_lengths.size() == 3);
  CHECK(p2.level_lengths[0] == 336);
  CHECK(p2.level_lengths[1] == 172);
  CHECK(p2.level_lengths[2] == 90);
  CHECK(p2.leaf_count == 4);
}

TEST_CASE("plan rejects odd sums, short leaves, big overlaps") {
  CHECK_THROWS_AS(plan(337, 8, 1, haar3()), ConfigError);   // odd T + o
  CHECK_THROWS_AS(plan(336, 7, 1, haar3()), ConfigError);   // odd T + o
  FilterSpec k6 = FilterSpec::defaults(FilterFamily::haar);  // needs 32
  CHECK_THROWS_AS(plan(40, 0, 1, k6), ConfigError);          // leaf 20 < 32
  CHECK_THROWS_AS(plan(16, 16, 1, haar3()), ConfigError);    // no shrink
}

TEST_CASE("split shares exactly o central samples") {
  const PartitionPlan p = plan(10, 2, 1, FilterSpec{FilterFamily::haar, 2});
  const Tensor x = random_signal(10, 1, 1);
  const auto [left, right] = split_segment(x, p, 0);
  REQUIRE(left.dim(0) == 6);
  REQUIRE(right.dim(0) == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(left[i] == x[i]);       // samples 0..5
    CHECK(right[i] == x[4 + i]);  // samples 4..9
  }
  // shared samples 4..5
  CHECK(left[4] == right[0]);
  CHECK(left[5] == right[1]);
}

TEST_CASE("split with o=0 gives disjoint halves") {
  const PartitionPlan p = plan(8, 0, 1, FilterSpec{FilterFamily::haar, 2});
  const Tensor x = random_signal(8, 2, 2);
  const auto [left, right] = split_segment(x, p, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(left.at(i, c) == x.at(i, c));
      CHECK(right.at(i, c) == x.at(4 + i, c));
    }
  }
}

TEST_CASE("split indices at the reference geometry 336, o=8") {
  const PartitionPlan p = plan(336, 8, 1, haar3());
  const Tensor x = random_signal(336, 1, 3);
  const auto [left, right] = split_segment(x, p, 0);
  REQUIRE(left.dim(0) == 172);
  CHECK(left[0] == x[0]);
  CHECK(left[171] == x[171]);
  CHECK(right[0] == x[164]);
  CHECK(right[171] == x[335]);
}

TEST_CASE("stitch hand example: L=3, o=1") {
  const Tensor left({3, 1}, {1, 2, 3});
  const Tensor right({3, 1}, {5, 6, 7});
  const Tensor out = stitch(left, right, 1);
  REQUIRE(out.dim(0) == 5);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
  CHECK(out[2] == doctest::Approx(4.0));  // (3 + 5) / 2
  CHECK(out[3] == 6.0);
  CHECK(out[4] == 7.0);
}

TEST_CASE("stitch with o=0 is plain concatenation") {
  const Tensor left({2, 1}, {1, 2});
  const Tensor right({2, 1}, {3, 4});
  const Tensor out = stitch(left, right, 0);
  REQUIRE(out.dim(0) == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == double(i + 1));
}

TEST_CASE("cross-fade weights sum to one at every overlap position") {
  const std::size_t o = 7, L = 12;
  Tensor ones({L, 1});
  ones.fill(1.0);
  const Tensor out = stitch(ones, ones, o);
  for (std::size_t t = 0; t < out.dim(0); ++t) {
    CHECK(out[t] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("round trip stitch(split(x)) = x at every level and overlap") {
  for (const std::size_t o : {std::size_t(0), std::size_t(2), std::size_t(8)}) {
    const std::size_t T = 48 + o;  // keeps T + o even when o is even
    if ((T + o) % 2 != 0) continue;
    const PartitionPlan p = plan(T, o, 1, FilterSpec{FilterFamily::haar, 2});
    const Tensor x = random_signal(T, 3, 17 + o);
    const auto [left, right] = split_segment(x, p, 0);
    const Tensor back = stitch(left, right, o);
    CHECK(max_abs_diff(back, x) < 1e-12);
  }
}

TEST_CASE("recursive round trip over depth-3 trees") {
  for (const std::size_t o : {std::size_t(0), std::size_t(8), std::size_t(24)}) {
    const PartitionPlan p = plan(336, o, 3, FilterSpec{FilterFamily::haar, 2});
    const Tensor x = random_signal(336, 2, 99 + o);
    // split to leaves
    std::vector<Tensor> level{x};
    for (std::size_t l = 0; l < 3; ++l) {
      std::vector<Tensor> next;
      for (const Tensor& seg : level) {
        auto [a, b] = split_segment(seg, p, l);
        next.push_back(std::move(a));
        next.push_back(std::move(b));
      }
      level = std::move(next);
    }
    REQUIRE(level.size() == 8);
    const Tensor back = stitch_tree(level, p);
    CHECK(max_abs_diff(back, x) < 1e-12);
  }
}

TEST_CASE("split and stitch are linear maps") {
  const std::size_t o = 4, T = 20;
  const PartitionPlan p = plan(T, o, 1, FilterSpec{FilterFamily::haar, 2});
  const Tensor x = random_signal(T, 1, 5);
  const Tensor y = random_signal(T, 1, 6);
  const double a = 1.7, b = -0.3;
  Tensor combo({T, 1});
  for (std::size_t i = 0; i < T; ++i) combo[i] = a * x[i] + b * y[i];

  const auto [cx_l, cx_r] = split_segment(x, p, 0);
  const auto [cy_l, cy_r] = split_segment(y, p, 0);
  const auto [cc_l, cc_r] = split_segment(combo, p, 0);
  for (std::size_t i = 0; i < cx_l.size(); ++i) {
    CHECK(cc_l[i] == doctest::Approx(a * cx_l[i] + b * cy_l[i]).epsilon(1e-13));
    CHECK(cc_r[i] == doctest::Approx(a * cx_r[i] + b * cy_r[i]).epsilon(1e-13));
  }
  const Tensor sx = stitch(cx_l, cx_r, o);
  const Tensor sy = stitch(cy_l, cy_r, o);
  const Tensor sc = stitch(cc_l, cc_r, o);
  for (std::size_t i = 0; i < sx.size(); ++i) {
    CHECK(sc[i] == doctest::Approx(a * sx[i] + b * sy[i]).epsilon(1e-12));
  }
}
