#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protoalign/bench.hpp"
#include "protoalign/engine.hpp"

namespace protoalign {

/// Everything a CLI run needs, read from a flat `key = value` file.
/// Lines starting with `#` are comments; unknown keys are rejected.
struct RunConfig {
  DomainShiftSpec data;
  PretrainConfig pretrain;
  AdaptationConfig adapt;
  std::string data_dir = "data";
  std::string work_dir = "runs";
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Every key with its resolved value, in documentation order.
std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& config);
std::string format_run_config(const RunConfig& config);

/// Documented keys with a one-line description each.
const std::vector<std::pair<std::string, std::string>>& run_config_keys();

}  // namespace protoalign
