#include "prism/series.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

namespace prism {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

/// "2016-07-01 00:00:00" or "2016-07-01"; returns nullopt on other layouts.
std::optional<std::int64_t> parse_timestamp(const std::string& s) {
  std::tm tm = {};
  int y, mo, d, h = 0, mi = 0, se = 0;
  const int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h,
                            &mi, &se);
  if (n != 3 && n != 6) return std::nullopt;
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = se;
  // timegm without env games: days since epoch by civil arithmetic
  const auto days_from_civil = [](int yy, int mm, int dd) -> std::int64_t {
    yy -= mm <= 2;
    const int era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy = (153u * (mm + (mm > 2 ? -3 : 9)) + 2) / 5 + dd - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097LL + static_cast<std::int64_t>(doe) - 719468LL;
  };
  return days_from_civil(y, mo, d) * 86400LL + h * 3600LL + mi * 60LL + se;
}

}  // namespace

TimeSeries load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("load_csv: '" + path + "' is empty (header row required)");
  }
  const std::vector<std::string> header = split_line(line);
  std::size_t first_channel = 0;
  if (schema.has_date) {
    if (header.empty() || trim(header[0]) != schema.date_column) {
      throw DataError("load_csv: '" + path + "': first column must be '" +
                      schema.date_column + "', got '" +
                      (header.empty() ? "" : trim(header[0])) + "'");
    }
    first_channel = 1;
  }
  if (header.size() <= first_channel) {
    throw DataError("load_csv: '" + path + "' has no value columns");
  }
  const std::size_t C = header.size() - first_channel;

  TimeSeries ts;
  for (std::size_t c = 0; c < C; ++c) {
    ts.channel_names.push_back(trim(header[first_channel + c]));
  }
  std::vector<double> values;
  std::vector<std::int64_t> stamps;
  bool stamps_ok = schema.has_date;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("load_csv: '" + path + "' row " + std::to_string(row) +
                      ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    if (schema.has_date && stamps_ok) {
      if (auto t = parse_timestamp(trim(cells[0]))) {
        stamps.push_back(*t);
      } else {
        stamps_ok = false;  // opaque date column; it is ignored for math
        stamps.clear();
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      const std::string cell = trim(cells[first_channel + c]);
      if (cell.empty()) {
        throw DataError("load_csv: '" + path + "' row " + std::to_string(row) +
                        ", column '" + ts.channel_names[c] + "': blank cell");
      }
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || errno == ERANGE ||
          !std::isfinite(v)) {
        throw DataError("load_csv: '" + path + "' row " + std::to_string(row) +
                        ", column '" + ts.channel_names[c] +
                        "': cannot parse '" + cell + "' as a finite number");
      }
      values.push_back(v);
    }
  }
  const std::size_t T = values.size() / C;
  if (T < 2) {
    throw DataError("load_csv: '" + path + "' has " + std::to_string(T) +
                    " data rows; need at least 2");
  }
  ts.values = Tensor({T, C}, std::move(values));
  if (stamps_ok && stamps.size() == T) {
    for (std::size_t i = 1; i < T; ++i) {
      if (stamps[i] <= stamps[i - 1]) {
        throw DataError("load_csv: '" + path + "' row " + std::to_string(i + 1) +
                        ": timestamps must be strictly increasing");
      }
    }
    ts.timestamps = std::move(stamps);
    std::vector<std::int64_t> diffs(ts.timestamps.size() - 1);
    for (std::size_t i = 0; i + 1 < ts.timestamps.size(); ++i) {
      diffs[i] = ts.timestamps[i + 1] - ts.timestamps[i];
    }
    std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2,
                     diffs.end());
    ts.sampling_period = double(diffs[diffs.size() / 2]);
  }
  return ts;
}

void SplitSpec::validate() const {
  if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0) {
    throw ConfigError("split: fractions must be nonnegative");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
}

SplitSizes split_sizes(std::size_t T, const SplitSpec& spec) {
  spec.validate();
  SplitSizes s;
  const std::size_t n1 = std::size_t(std::floor(spec.train_frac * double(T)));
  const std::size_t n2 =
      std::size_t(std::floor((spec.train_frac + spec.val_frac) * double(T)));
  s.train = n1;
  s.val = n2 - n1;
  s.test = T - n2;
  return s;
}

TimeSeries slice_series(const TimeSeries& ts, std::size_t start,
                        std::size_t end) {
  if (end > ts.length() || start > end) {
    throw UsageError("slice_series: bad range [" + std::to_string(start) +
                     ", " + std::to_string(end) + ")");
  }
  const std::size_t C = ts.channels();
  TimeSeries out;
  out.channel_names = ts.channel_names;
  out.sampling_period = ts.sampling_period;
  out.values = Tensor({end - start, C});
  std::memcpy(out.values.data(), ts.values.data() + start * C,
              (end - start) * C * sizeof(double));
  if (!ts.timestamps.empty()) {
    out.timestamps.assign(ts.timestamps.begin() + long(start),
                          ts.timestamps.begin() + long(end));
  }
  return out;
}

SplitResult chrono_split(const TimeSeries& ts, const SplitSpec& spec) {
  const std::size_t T = ts.length();
  if (T < 10) {
    throw ConfigError("chrono_split: series of length " + std::to_string(T) +
                      " is too short to split");
  }
  const SplitSizes s = split_sizes(T, spec);
  SplitResult r;
  r.train = slice_series(ts, 0, s.train_end());
  r.val = slice_series(ts, s.train_end(), s.val_end());
  r.test = slice_series(ts, s.val_end(), T);
  return r;
}

NormStats fit_norm(const TimeSeries& train) {
  const std::size_t T = train.length(), C = train.channels();
  NormStats st;
  st.mean.assign(C, 0.0);
  st.std.assign(C, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) st.mean[c] += train.values.at(t, c);
  }
  for (std::size_t c = 0; c < C; ++c) st.mean[c] /= double(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double d = train.values.at(t, c) - st.mean[c];
      st.std[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    st.std[c] = std::sqrt(st.std[c] / double(T));  // population std
    if (st.std[c] < 1e-8) st.std[c] = 1e-8;        // constant channel
  }
  return st;
}

TimeSeries apply_norm(const TimeSeries& ts, const NormStats& stats) {
  const std::size_t T = ts.length(), C = ts.channels();
  if (stats.mean.size() != C || stats.std.size() != C) {
    throw ConfigError("apply_norm: stats cover " +
                      std::to_string(stats.mean.size()) + " channels, series has " +
                      std::to_string(C));
  }
  TimeSeries out = ts;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      out.values.at(t, c) = (ts.values.at(t, c) - stats.mean[c]) / stats.std[c];
    }
  }
  return out;
}

WindowIndex make_windows(const TimeSeries& ts, std::size_t t_context,
                         std::size_t t_forecast, std::size_t stride) {
  if (stride < 1) throw ConfigError("make_windows: stride must be >= 1");
  const std::size_t T = ts.length();
  const std::size_t need = t_context + t_forecast;
  if (T < need) {
    throw ConfigError("make_windows: series length " + std::to_string(T) +
                      " is shorter than context + forecast = " +
                      std::to_string(need));
  }
  WindowIndex idx;
  idx.t_context = t_context;
  idx.t_forecast = t_forecast;
  for (std::size_t o = 0; o + need <= T; o += stride) idx.origins.push_back(o);
  return idx;
}

WindowPair materialize(const TimeSeries& ts, const WindowIndex& idx,
                       std::size_t i) {
  const std::size_t o = idx.origins.at(i);
  const std::size_t C = ts.channels();
  WindowPair w;
  w.origin_index = o;
  w.context = Tensor({idx.t_context, C});
  w.target = Tensor({idx.t_forecast, C});
  std::memcpy(w.context.data(), ts.values.data() + o * C,
              idx.t_context * C * sizeof(double));
  std::memcpy(w.target.data(), ts.values.data() + (o + idx.t_context) * C,
              idx.t_forecast * C * sizeof(double));
  return w;
}

}  // namespace prism
