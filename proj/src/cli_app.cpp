#include "prism/cli_app.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prism/checkpoint.hpp"
#include "prism/spec_json.hpp"
#include "prism/train.hpp"

namespace prism::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

/// Run directories are append-only: a fresh name is chosen when the target
/// already exists.
fs::path make_run_dir(const RunSpec& spec, const std::string& explicit_out,
                      const std::string& cmd) {
  fs::path dir;
  if (!explicit_out.empty()) {
    dir = explicit_out;
  } else {
    const std::string stem = timestamp_now() + "-" + cmd;
    dir = fs::path(spec.out_dir) / stem;
    int n = 1;
    while (fs::exists(dir)) {
      dir = fs::path(spec.out_dir) / (stem + "-" + std::to_string(n++));
    }
  }
  fs::create_directories(dir);
  return dir;
}

RunSpec load_spec_checked(const CommonArgs& args) {
  if (args.spec_path.empty()) {
    throw ConfigError("spec: --spec <file> is required");
  }
  RunSpec spec = load_spec(args.spec_path);
  if (args.seed >= 0) spec.seeds = {std::uint64_t(args.seed)};
  if (args.threads >= 0) spec.train.threads = args.threads;
  return spec;
}

TimeSeries load_dataset(const RunSpec& spec) {
  if (spec.dataset_path.empty()) {
    throw ConfigError("spec: field 'dataset.path' is required");
  }
  return load_csv(spec.dataset_path, spec.csv);
}

int guard(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSpec;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitSpec;
  }
}

void write_history_csv(const fs::path& path,
                       const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  out << "epoch,train_mse,val_mse,seconds\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << "," << r.train_mse << "," << r.val_mse << ","
        << r.seconds << "\n";
  }
}

/// Checkpoint must describe the same model the spec asks for.
void check_compat(const Checkpoint& ck, const RunSpec& spec,
                  std::size_t channels) {
  if (ck.channels != channels) {
    throw CheckpointError("checkpoint was trained on " +
                          std::to_string(ck.channels) +
                          " channels, dataset has " +
                          std::to_string(channels));
  }
  const PrismConfig& a = ck.config;
  const PrismConfig& b = spec.model;
  const auto fail = [](const std::string& field, const std::string& ckv,
                       const std::string& spv) {
    throw CheckpointError("checkpoint/spec mismatch on " + field + ": " +
                          ckv + " vs " + spv);
  };
  if (a.t_context != b.t_context) {
    fail("t_context", std::to_string(a.t_context), std::to_string(b.t_context));
  }
  if (a.t_forecast != b.t_forecast) {
    fail("t_forecast", std::to_string(a.t_forecast),
         std::to_string(b.t_forecast));
  }
  if (a.overlap != b.overlap) {
    fail("overlap", std::to_string(a.overlap), std::to_string(b.overlap));
  }
  if (a.depth != b.depth) {
    fail("depth", std::to_string(a.depth), std::to_string(b.depth));
  }
  if (a.filter.family != b.filter.family) {
    fail("filter.family", to_string(a.filter.family),
         to_string(b.filter.family));
  }
  if (a.filter.bands != b.filter.bands) {
    fail("filter.bands", std::to_string(a.filter.bands),
         std::to_string(b.filter.bands));
  }
  if (!(a.router == b.router)) {
    fail("router", to_string(a.router.mode), to_string(b.router.mode));
  }
  if (a.head_hidden != b.head_hidden) {
    fail("head_hidden", std::to_string(a.head_hidden),
         std::to_string(b.head_hidden));
  }
}

}  // namespace

int cmd_train(const CommonArgs& args) {
  return guard([&]() {
    const RunSpec spec = load_spec_checked(args);
    spec.model.validate();
    spec.train.validate();
    const TimeSeries raw = load_dataset(spec);
    const DatasetWindows data =
        prepare_dataset(raw, spec.split, spec.model.t_context,
                        spec.model.t_forecast, spec.stride);
    const fs::path dir = make_run_dir(spec, args.out_dir, "train");

    json report;
    report["spec_echo"] = to_json(spec);
    report["dataset"] = {{"rows", raw.length()},
                         {"channels", raw.channels()},
                         {"train_windows", data.train.count()},
                         {"val_windows", data.val.count()},
                         {"test_windows", data.test.count()}};
    json per_seed = json::array();

    std::vector<double> mses, maes;
    for (const std::uint64_t seed : spec.seeds) {
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult tr = train(spec.model, data, spec.train, seed);
      const Metrics test = evaluate(tr.best_params, spec.model,
                                    data.normalized, data.test,
                                    spec.train.threads);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();

      Checkpoint ck{spec.model, raw.channels(), seed, data.stats,
                    tr.best_params};
      const std::string ck_name = "checkpoint_seed" + std::to_string(seed) +
                                  ".bin";
      save_checkpoint((dir / ck_name).string(), ck);
      write_history_csv(dir / ("history_seed" + std::to_string(seed) + ".csv"),
                        tr.history);

      per_seed.push_back({{"seed", seed},
                          {"test_mse", test.mse},
                          {"test_mae", test.mae},
                          {"epochs_run", tr.epochs_run},
                          {"best_val_mse", tr.best_val_mse},
                          {"early_stopped", tr.early_stopped},
                          {"wall_seconds", secs},
                          {"checkpoint", ck_name}});
      mses.push_back(test.mse);
      maes.push_back(test.mae);
      std::cout << "seed " << seed << ": test_mse=" << test.mse
                << " test_mae=" << test.mae << " epochs=" << tr.epochs_run
                << " best_val=" << tr.best_val_mse << " (" << secs << "s)\n";
    }

    const auto mean_of = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / double(v.size());
    };
    const auto std_of = [&](const std::vector<double>& v) {
      const double m = mean_of(v);
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / double(v.size()));
    };
    report["per_seed"] = per_seed;
    report["aggregate"] = {{"mse_mean", mean_of(mses)},
                           {"mse_std", std_of(mses)},
                           {"mae_mean", mean_of(maes)},
                           {"mae_std", std_of(maes)},
                           {"seeds", spec.seeds.size()}};
    {
      ModelParams probe = zero_params(spec.model);
      report["param_count"] = param_count(probe);
    }
    std::ofstream(dir / "report.json") << report.dump(2) << "\n";
    std::cout << "aggregate: mse " << mean_of(mses) << " +/- " << std_of(mses)
              << ", mae " << mean_of(maes) << " +/- " << std_of(maes) << "\n"
              << "outputs in " << dir.string() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const CommonArgs& args) {
  return guard([&]() {
    const RunSpec spec = load_spec_checked(args);
    if (args.checkpoint_path.empty()) {
      throw ConfigError("eval: --checkpoint <file> is required");
    }
    const Checkpoint ck = load_checkpoint(args.checkpoint_path);
    const TimeSeries raw = load_dataset(spec);
    check_compat(ck, spec, raw.channels());
    const DatasetWindows data =
        prepare_dataset(raw, spec.split, spec.model.t_context,
                        spec.model.t_forecast, spec.stride, &ck.norm);
    const Metrics m = evaluate(ck.params, ck.config, data.normalized,
                               data.test, spec.train.threads);
    json out{{"test_mse", m.mse},
             {"test_mae", m.mae},
             {"windows", data.test.count()},
             {"checkpoint", args.checkpoint_path},
             {"seed", ck.seed}};
    std::cout << out.dump(2) << "\n";
    if (!args.out_dir.empty()) {
      const fs::path dir = make_run_dir(spec, args.out_dir, "eval");
      std::ofstream(dir / "metrics.json") << out.dump(2) << "\n";
    }
    return kExitOk;
  });
}

int cmd_decompose(const CommonArgs& args) {
  return guard([&]() {
    const RunSpec spec = load_spec_checked(args);
    const TimeSeries raw = load_dataset(spec);
    const FilterSpec& f = spec.model.filter;
    const BandSet bands = decompose(raw.values, f);
    const fs::path dir = make_run_dir(spec, args.out_dir, "decompose");
    const fs::path out_path = dir / "bands.csv";
    std::ofstream out(out_path);
    out << "t,channel";
    for (std::size_t k = 0; k < f.bands; ++k) out << ",band_" << k;
    out << "\n";
    const std::size_t T = raw.length(), C = raw.channels();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        out << t << "," << c;
        for (std::size_t k = 0; k < f.bands; ++k) {
          out << "," << bands.bands.data()[(k * T + t) * C + c];
        }
        out << "\n";
      }
    }
    std::cout << "wrote " << out_path.string() << " (" << T << " rows x " << C
              << " channels x " << f.bands << " bands)\n";
    return kExitOk;
  });
}

int cmd_trace(const CommonArgs& args) {
  return guard([&]() {
    const RunSpec spec = load_spec_checked(args);
    if (args.checkpoint_path.empty()) {
      throw ConfigError("trace: --checkpoint <file> is required");
    }
    const Checkpoint ck = load_checkpoint(args.checkpoint_path);
    const TimeSeries raw = load_dataset(spec);
    check_compat(ck, spec, raw.channels());
    const DatasetWindows data =
        prepare_dataset(raw, spec.split, spec.model.t_context,
                        spec.model.t_forecast, spec.stride, &ck.norm);
    if (args.window < 0 || std::size_t(args.window) >= data.test.count()) {
      throw ConfigError("trace: window index " + std::to_string(args.window) +
                        " out of range (test has " +
                        std::to_string(data.test.count()) + " windows)");
    }
    const WindowPair w =
        materialize(data.normalized, data.test, std::size_t(args.window));
    const ForecastTrace tr = decompose_trace(w.context, ck.params, ck.config);

    const fs::path dir = make_run_dir(spec, args.out_dir, "trace");
    const fs::path out_path = dir / "trace.csv";
    std::ofstream out(out_path);
    out << "kind,leaf,band,weight,t,channel,value\n";
    const std::size_t C = w.context.dim(1);
    const auto emit = [&](const char* kind, const TraceComponent& comp,
                          const Tensor& m) {
      for (std::size_t t = 0; t < m.dim(0); ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          out << kind << "," << comp.leaf << "," << comp.band << ","
              << comp.mean_weight << "," << t << "," << c << "," << m.at(t, c)
              << "\n";
        }
      }
    };
    for (std::size_t i = 0; i < tr.components.size(); ++i) {
      const TraceComponent& comp = tr.components[i];
      emit("context_component", comp, comp.context_part);
      emit("forecast_component", comp, comp.forecast_part);
      emit("context_cumulative", comp, tr.context_cumulative[i]);
      emit("forecast_cumulative", comp, tr.forecast_cumulative[i]);
    }
    std::cout << "wrote " << out_path.string() << " ("
              << tr.components.size() << " components)\n";
    return kExitOk;
  });
}

int cmd_importance(const CommonArgs& args) {
  return guard([&]() {
    const RunSpec spec = load_spec_checked(args);
    if (args.checkpoint_path.empty()) {
      throw ConfigError("importance: --checkpoint <file> is required");
    }
    const Checkpoint ck = load_checkpoint(args.checkpoint_path);
    const TimeSeries raw = load_dataset(spec);
    check_compat(ck, spec, raw.channels());
    const DatasetWindows data =
        prepare_dataset(raw, spec.split, spec.model.t_context,
                        spec.model.t_forecast, spec.stride, &ck.norm);
    const std::vector<ImportanceRow> rows = export_importance(
        ck.params, ck.config, data.normalized, data.test);
    const fs::path dir = make_run_dir(spec, args.out_dir, "importance");
    const fs::path out_path = dir / "importance.csv";
    std::ofstream out(out_path);
    out << "level,node,channel,band,mean_weight\n";
    for (const ImportanceRow& r : rows) {
      out << r.level << "," << r.node << "," << r.channel << "," << r.band
          << "," << r.mean_weight << "\n";
    }
    std::cout << "wrote " << out_path.string() << " (" << rows.size()
              << " rows)\n";
    return kExitOk;
  });
}

int run(int argc, const char* const* argv) {
  CLI::App app{"PRISM hierarchical time-frequency forecaster"};
  app.require_subcommand(1);

  CommonArgs args;
  const auto add_common = [&](CLI::App* sub, bool needs_ckpt) {
    sub->add_option("--spec", args.spec_path, "run spec JSON file")
        ->required();
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--threads", args.threads, "worker threads (0 = all)");
    if (needs_ckpt) {
      sub->add_option("--checkpoint", args.checkpoint_path,
                      "model checkpoint file")
          ->required();
    }
  };

  CLI::App* tr = app.add_subcommand("train", "train per seed, write reports");
  add_common(tr, false);
  tr->add_option("--seed", args.seed, "train only this seed");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, true);

  CLI::App* de = app.add_subcommand("decompose",
                                    "emit the filter-bank bands as CSV");
  add_common(de, false);

  CLI::App* tc = app.add_subcommand("trace",
                                    "per-component forecast breakdown");
  add_common(tc, true);
  tc->add_option("--window", args.window, "test window index");

  CLI::App* im = app.add_subcommand("importance",
                                    "export mean router weights");
  add_common(im, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitSpec;
  }

  if (tr->parsed()) return cmd_train(args);
  if (ev->parsed()) return cmd_eval(args);
  if (de->parsed()) return cmd_decompose(args);
  if (tc->parsed()) return cmd_trace(args);
  if (im->parsed()) return cmd_importance(args);
  return kExitSpec;
}

}  // namespace prism::cli
