#include "prism/spec_json.hpp"

#include <fstream>

namespace prism {

using nlohmann::json;

namespace {

/// Pulls j[key] with a type check, or the default when absent.
template <typename T>
T field(const json& j, const char* key, const T& def, const std::string& ctx) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("spec: field '" + ctx + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const PrismConfig& c) {
  json filter{{"family", to_string(c.filter.family)},
              {"bands", c.filter.bands},
              {"ema_tau0", c.filter.ema_tau0},
              {"ema_grow", c.filter.ema_grow},
              {"dog_sigma0", c.filter.dog_sigma0},
              {"dog_ratio", c.filter.dog_ratio},
              {"binomial_k0", c.filter.binom_k0},
              {"binomial_k_grow", c.filter.binom_grow},
              {"fft_equal_width", c.filter.fft_equal_width}};
  json router{{"mode", to_string(c.router.mode)},
              {"hidden", c.router.hidden},
              {"temperature", c.router.temperature},
              {"clamp_crest", c.router.clamp_crest}};
  return json{{"t_context", c.t_context}, {"t_forecast", c.t_forecast},
              {"overlap", c.overlap},     {"depth", c.depth},
              {"filter", filter},         {"router", router},
              {"head_hidden", c.head_hidden}};
}

PrismConfig config_from_json(const json& j) {
  PrismConfig c;
  c.t_context = field<std::size_t>(j, "t_context", c.t_context, "model.");
  c.t_forecast = field<std::size_t>(j, "t_forecast", c.t_forecast, "model.");
  c.overlap = field<std::size_t>(j, "overlap", c.overlap, "model.");
  c.depth = field<std::size_t>(j, "depth", c.depth, "model.");
  c.head_hidden = field<std::size_t>(j, "head_hidden", c.head_hidden, "model.");
  if (j.contains("filter")) {
    const json& f = j.at("filter");
    const std::string fam =
        field<std::string>(f, "family", "haar", "model.filter.");
    c.filter = FilterSpec::defaults(filter_family_from_string(fam));
    c.filter.bands = field<std::size_t>(f, "bands", c.filter.bands,
                                        "model.filter.");
    c.filter.ema_tau0 =
        field<double>(f, "ema_tau0", c.filter.ema_tau0, "model.filter.");
    c.filter.ema_grow =
        field<double>(f, "ema_grow", c.filter.ema_grow, "model.filter.");
    c.filter.dog_sigma0 =
        field<double>(f, "dog_sigma0", c.filter.dog_sigma0, "model.filter.");
    c.filter.dog_ratio =
        field<double>(f, "dog_ratio", c.filter.dog_ratio, "model.filter.");
    c.filter.binom_k0 =
        field<std::size_t>(f, "binomial_k0", c.filter.binom_k0, "model.filter.");
    c.filter.binom_grow = field<std::size_t>(f, "binomial_k_grow",
                                             c.filter.binom_grow,
                                             "model.filter.");
    c.filter.fft_equal_width = field<bool>(f, "fft_equal_width",
                                           c.filter.fft_equal_width,
                                           "model.filter.");
  }
  if (j.contains("router")) {
    const json& r = j.at("router");
    c.router.mode = router_mode_from_string(
        field<std::string>(r, "mode", "per_level", "model.router."));
    c.router.hidden =
        field<std::size_t>(r, "hidden", c.router.hidden, "model.router.");
    c.router.temperature = field<double>(r, "temperature",
                                         c.router.temperature, "model.router.");
    c.router.clamp_crest = field<bool>(r, "clamp_crest", c.router.clamp_crest,
                                       "model.router.");
  }
  return c;
}

json to_json(const RunSpec& s) {
  json dataset{{"path", s.dataset_path},
               {"split", {s.split.train_frac, s.split.val_frac, s.split.test_frac}},
               {"date_column", s.csv.date_column},
               {"has_date", s.csv.has_date},
               {"stride", s.stride}};
  json train{{"batch_size", s.train.batch_size},
             {"lr", s.train.lr},
             {"patience", s.train.patience},
             {"min_delta", s.train.min_delta},
             {"max_epochs", s.train.max_epochs},
             {"validate_every", s.train.validate_every},
             {"threads", s.train.threads}};
  return json{{"dataset", dataset},
              {"model", to_json(s.model)},
              {"train", train},
              {"seeds", s.seeds},
              {"out_dir", s.out_dir}};
}

RunSpec spec_from_json(const json& j) {
  RunSpec s;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    s.dataset_path = field<std::string>(d, "path", "", "dataset.");
    if (d.contains("split")) {
      std::vector<double> fr;
      try {
        fr = d.at("split").get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ConfigError("spec: field 'dataset.split' must be an array");
      }
      if (fr.size() != 3) {
        throw ConfigError(
            "spec: field 'dataset.split' must have 3 fractions");
      }
      s.split = {fr[0], fr[1], fr[2]};
    }
    s.csv.date_column =
        field<std::string>(d, "date_column", s.csv.date_column, "dataset.");
    s.csv.has_date = field<bool>(d, "has_date", s.csv.has_date, "dataset.");
    s.stride = field<std::size_t>(d, "stride", s.stride, "dataset.");
  }
  if (j.contains("model")) s.model = config_from_json(j.at("model"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    s.train.batch_size =
        field<std::size_t>(t, "batch_size", s.train.batch_size, "train.");
    s.train.lr = field<double>(t, "lr", s.train.lr, "train.");
    s.train.patience =
        field<std::size_t>(t, "patience", s.train.patience, "train.");
    s.train.min_delta = field<double>(t, "min_delta", s.train.min_delta, "train.");
    s.train.max_epochs =
        field<std::size_t>(t, "max_epochs", s.train.max_epochs, "train.");
    s.train.validate_every = field<std::size_t>(t, "validate_every",
                                                s.train.validate_every,
                                                "train.");
    s.train.threads = field<int>(t, "threads", s.train.threads, "train.");
  }
  s.seeds = field<std::vector<std::uint64_t>>(j, "seeds", s.seeds, "");
  if (s.seeds.empty()) throw ConfigError("spec: field 'seeds' must not be empty");
  s.out_dir = field<std::string>(j, "out_dir", s.out_dir, "");
  return s;
}

RunSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("spec: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("spec: '" + path + "' is not valid JSON: " + e.what());
  }
  return spec_from_json(j);
}

bool operator==(const FilterSpec& a, const FilterSpec& b) {
  return a.family == b.family && a.bands == b.bands &&
         a.ema_tau0 == b.ema_tau0 && a.ema_grow == b.ema_grow &&
         a.dog_sigma0 == b.dog_sigma0 && a.dog_ratio == b.dog_ratio &&
         a.binom_k0 == b.binom_k0 && a.binom_grow == b.binom_grow &&
         a.fft_equal_width == b.fft_equal_width;
}

bool operator==(const RouterConfig& a, const RouterConfig& b) {
  return a.mode == b.mode && a.hidden == b.hidden &&
         a.temperature == b.temperature && a.clamp_crest == b.clamp_crest;
}

bool operator==(const PrismConfig& a, const PrismConfig& b) {
  return a.t_context == b.t_context && a.t_forecast == b.t_forecast &&
         a.overlap == b.overlap && a.depth == b.depth &&
         a.filter == b.filter && a.router == b.router &&
         a.head_hidden == b.head_hidden;
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.batch_size == b.batch_size && a.lr == b.lr &&
         a.patience == b.patience && a.min_delta == b.min_delta &&
         a.max_epochs == b.max_epochs && a.validate_every == b.validate_every &&
         a.threads == b.threads;
}

bool operator==(const SplitSpec& a, const SplitSpec& b) {
  return a.train_frac == b.train_frac && a.val_frac == b.val_frac &&
         a.test_frac == b.test_frac;
}

bool operator==(const CsvSchema& a, const CsvSchema& b) {
  return a.date_column == b.date_column && a.has_date == b.has_date;
}

bool operator==(const RunSpec& a, const RunSpec& b) {
  return a.dataset_path == b.dataset_path && a.split == b.split &&
         a.csv == b.csv && a.stride == b.stride && a.model == b.model &&
         a.train == b.train && a.seeds == b.seeds && a.out_dir == b.out_dir;
}

}  // namespace prism
