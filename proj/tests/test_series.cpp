#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "prism/rng.hpp"
#include "prism/series.hpp"

using namespace prism;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& contents) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("prism_series_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++) + ".csv");
    std::ofstream(path) << contents;
  }
  ~TempFile() { std::error_code ec; fs::remove(path, ec); }
};

TimeSeries random_series(std::size_t T, std::size_t C, std::uint64_t seed) {
  Rng rng(seed);
  TimeSeries ts;
  ts.values = Tensor({T, C});
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    ts.values[i] = rng.uniform(-4, 4);
  }
  return ts;
}

}  // namespace

TEST_CASE("load_csv parses a small file") {
  TempFile f(
      "date,a,b\n"
      "2020-01-01 00:00:00,1.5,2\n"
      "2020-01-01 01:00:00,-0.25,3e-2\n"
      "2020-01-01 02:00:00,4,5\n");
  const TimeSeries ts = load_csv(f.path.string());
  CHECK(ts.length() == 3);
  CHECK(ts.channels() == 2);
  CHECK(ts.channel_names[0] == "a");
  CHECK(ts.values.at(0, 0) == 1.5);
  CHECK(ts.values.at(1, 1) == 0.03);
  CHECK(ts.timestamps.size() == 3);
  CHECK(ts.sampling_period == 3600.0);
}

TEST_CASE("load_csv error paths") {
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);

  TempFile blank("date,a\n2020-01-01,1\n2020-01-02,\n2020-01-03,3\n");
  CHECK_THROWS_WITH_AS(load_csv(blank.path.string()),
                       doctest::Contains("blank cell"), DataError);

  TempFile bad("date,a\n2020-01-01,1\n2020-01-02,oops\n");
  CHECK_THROWS_WITH_AS(load_csv(bad.path.string()),
                       doctest::Contains("row 2"), DataError);

  TempFile short_file("date,a\n2020-01-01,1\n");
  CHECK_THROWS_AS(load_csv(short_file.path.string()), DataError);

  TempFile wrong_header("time,a\n1,2\n2,3\n");
  CHECK_THROWS_AS(load_csv(wrong_header.path.string()), DataError);
  CsvSchema schema;
  schema.date_column = "time";
  CHECK(load_csv(wrong_header.path.string(), schema).channels() == 1);
}

TEST_CASE("load_csv without a date column") {
  TempFile f("a,b\n1,2\n3,4\n");
  CsvSchema schema;
  schema.has_date = false;
  const TimeSeries ts = load_csv(f.path.string(), schema);
  CHECK(ts.length() == 2);
  CHECK(ts.channels() == 2);
  CHECK(ts.timestamps.empty());
}

TEST_CASE("chrono_split boundaries at floor(frac * T)") {
  const SplitSpec sixtwotwo{0.6, 0.2, 0.2};

  const TimeSeries t10 = random_series(10, 1, 1);
  const SplitResult r10 = chrono_split(t10, sixtwotwo);
  CHECK(r10.train.length() == 6);
  CHECK(r10.val.length() == 2);
  CHECK(r10.test.length() == 2);

  const SplitSizes s = split_sizes(17420, sixtwotwo);
  CHECK(s.train == 10452);
  CHECK(s.val == 3484);
  CHECK(s.test == 3484);

  const TimeSeries t100 = random_series(100, 2, 2);
  const SplitResult r100 = chrono_split(t100, SplitSpec{0.7, 0.1, 0.2});
  CHECK(r100.train.length() == 70);
  CHECK(r100.val.length() == 10);
  CHECK(r100.test.length() == 20);
}

TEST_CASE("split slices are contiguous, ordered, and cover the series") {
  const TimeSeries ts = random_series(57, 3, 3);
  const SplitResult r = chrono_split(ts, SplitSpec{0.6, 0.2, 0.2});
  CHECK(r.train.length() + r.val.length() + r.test.length() == 57);
  // boundary continuity: val starts right where train ends
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(r.train.values.at(0, c) == ts.values.at(0, c));
    CHECK(r.val.values.at(0, c) == ts.values.at(r.train.length(), c));
    CHECK(r.test.values.at(0, c) ==
          ts.values.at(r.train.length() + r.val.length(), c));
  }
  CHECK_THROWS_AS(chrono_split(random_series(9, 1, 4), SplitSpec{}),
                  ConfigError);
  CHECK_THROWS_AS(split_sizes(100, SplitSpec{0.5, 0.2, 0.2}), ConfigError);
}

TEST_CASE("normalization: hand z-score and the constant channel floor") {
  TimeSeries ts;
  ts.values = Tensor({2, 2}, {0.0, 5.0, 2.0, 5.0});  // ch0: (0,2), ch1: (5,5)
  const NormStats st = fit_norm(ts);
  CHECK(st.mean[0] == 1.0);
  CHECK(st.std[0] == 1.0);  // population std of (0,2)
  CHECK(st.mean[1] == 5.0);
  CHECK(st.std[1] == 1e-8);  // floored

  const TimeSeries n = apply_norm(ts, st);
  CHECK(n.values.at(0, 0) == -1.0);
  CHECK(n.values.at(1, 0) == 1.0);
  CHECK(n.values.at(0, 1) == 0.0);  // constant channel normalizes to zero
}

TEST_CASE("identity stats leave the series unchanged") {
  const TimeSeries ts = random_series(20, 2, 9);
  NormStats st;
  st.mean = {0.0, 0.0};
  st.std = {1.0, 1.0};
  const TimeSeries n = apply_norm(ts, st);
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    CHECK(n.values[i] == ts.values[i]);
  }
}

TEST_CASE("norm round trip within 1e-12") {
  const TimeSeries ts = random_series(64, 4, 10);
  const NormStats st = fit_norm(ts);
  const TimeSeries n = apply_norm(ts, st);
  for (std::size_t t = 0; t < ts.length(); ++t) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double back = n.values.at(t, c) * st.std[c] + st.mean[c];
      CHECK(std::abs(back - ts.values.at(t, c)) <= 1e-12);
    }
  }
}

TEST_CASE("window counting") {
  const TimeSeries t10 = random_series(10, 1, 5);
  CHECK(make_windows(t10, 4, 2).count() == 5);

  const TimeSeries exact = random_series(336 + 96, 1, 6);
  CHECK(make_windows(exact, 336, 96).count() == 1);

  const TimeSeries val_slice = random_series(3484, 7, 7);
  CHECK(make_windows(val_slice, 336, 96).count() == 3053);

  CHECK_THROWS_WITH_AS(make_windows(t10, 9, 2),
                       doctest::Contains("context + forecast = 11"),
                       ConfigError);
}

TEST_CASE("window stride and target adjacency") {
  const TimeSeries ts = random_series(30, 2, 8);
  const WindowIndex idx = make_windows(ts, 6, 3, 4);
  CHECK(idx.count() == (30 - 9) / 4 + 1);
  for (std::size_t i = 0; i < idx.count(); ++i) {
    const WindowPair w = materialize(ts, idx, i);
    CHECK(w.origin_index == 4 * i);
    // target begins exactly at context end
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(w.context.at(5, c) == ts.values.at(w.origin_index + 5, c));
      CHECK(w.target.at(0, c) == ts.values.at(w.origin_index + 6, c));
    }
  }
}
