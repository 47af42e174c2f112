#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/model.hpp"
#include "prism/series.hpp"
#include "prism/train.hpp"

namespace prism {

/// Everything one reproducible run needs. Round-trips losslessly through
/// JSON; all fields default to the documented values.
struct RunSpec {
  std::string dataset_path;
  SplitSpec split;  // 6:2:2 default
  CsvSchema csv;
  std::size_t stride = 1;
  PrismConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  std::string out_dir = "runs";
};

nlohmann::json to_json(const PrismConfig& c);
PrismConfig config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunSpec& s);
RunSpec spec_from_json(const nlohmann::json& j);

/// Parses a spec file; throws ConfigError naming the offending field.
RunSpec load_spec(const std::string& path);

bool operator==(const RunSpec& a, const RunSpec& b);
bool operator==(const PrismConfig& a, const PrismConfig& b);
bool operator==(const FilterSpec& a, const FilterSpec& b);
bool operator==(const RouterConfig& a, const RouterConfig& b);
bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const SplitSpec& a, const SplitSpec& b);
bool operator==(const CsvSchema& a, const CsvSchema& b);

}  // namespace prism
