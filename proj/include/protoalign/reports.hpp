#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "protoalign/bench.hpp"
#include "protoalign/engine.hpp"

namespace protoalign {

using Json = nlohmann::ordered_json;

// Metrics report keys, in output order:
//   accuracy, macro_recall, macro_dice, compactness, mean_entropy,
//   recall[C] (null when a class is absent from the truth),
//   dice[C] (null when absent from truth and prediction),
//   prediction_histogram[C]
Json to_json(const MetricsReport& report);

// Train report keys: stage, iterations, noop_iterations, warnings,
// final_prior, and the per-iteration series. Wall time is left out so that
// repeated runs produce identical bytes; pass include_timing to add it.
Json to_json(const TrainReport& report, bool include_timing = false);

Json config_json(const std::vector<std::pair<std::string, std::string>>& entries);

/// Plot-ready per-iteration series:
///   stage,iteration,t2p,p2t,pfa,cl,active,prior0,...
std::string loss_series_csv(const TrainReport& pfa, const TrainReport& cl);

std::string dump(const Json& j);

}  // namespace protoalign
