#include "protoalign/reports.hpp"

#include <cmath>

#include "protoalign/io.hpp"

namespace protoalign {

Json to_json(const MetricsReport& report) {
  Json j;
  j["accuracy"] = report.accuracy;
  j["macro_recall"] = report.macro_recall;
  j["macro_dice"] = report.macro_dice;
  j["compactness"] = report.compactness;
  j["mean_entropy"] = report.mean_entropy;
  Json recall = Json::array();
  for (double r : report.recall) recall.push_back(std::isnan(r) ? Json(nullptr) : Json(r));
  j["recall"] = recall;
  Json dice = Json::array();
  for (const auto& d : report.dice) dice.push_back(d ? Json(*d) : Json(nullptr));
  j["dice"] = dice;
  j["prediction_histogram"] = report.prediction_histogram;
  return j;
}

Json to_json(const TrainReport& report, bool include_timing) {
  Json j;
  j["stage"] = report.stage;
  j["iterations"] = report.iterations();
  j["noop_iterations"] = report.noop_iterations;
  j["warnings"] = report.warnings;
  j["final_prior"] = report.prior.empty() ? Json(nullptr) : Json(report.prior.back());
  if (report.stage == "cl") {
    j["cl"] = report.cl;
    j["cl_active"] = report.cl_active;
  } else {
    j["t2p"] = report.t2p;
    j["p2t"] = report.p2t;
    j["pfa"] = report.pfa;
    j["prior"] = report.prior;
  }
  if (include_timing) j["elapsed_seconds"] = report.elapsed_seconds;
  return j;
}

Json config_json(const std::vector<std::pair<std::string, std::string>>& entries) {
  Json j = Json::object();
  for (const auto& [k, v] : entries) j[k] = v;
  return j;
}

std::string loss_series_csv(const TrainReport& pfa, const TrainReport& cl) {
  std::size_t classes = 0;
  if (!pfa.prior.empty()) classes = pfa.prior.front().size();
  std::string out = "stage,iteration,t2p,p2t,pfa,cl,active";
  for (std::size_t c = 0; c < classes; ++c) out += ",prior" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < pfa.pfa.size(); ++i) {
    out += "pfa," + std::to_string(i) + ',' + format_real(pfa.t2p[i]) + ',' + format_real(pfa.p2t[i]) +
           ',' + format_real(pfa.pfa[i]) + ",,1";
    for (double p : pfa.prior[i]) out += ',' + format_real(p);
    out += '\n';
  }
  for (std::size_t i = 0; i < cl.cl.size(); ++i) {
    out += "cl," + std::to_string(i) + ",,,," + format_real(cl.cl[i]) + ',' + (cl.cl_active[i] ? "1" : "0");
    for (std::size_t c = 0; c < classes; ++c) out += ',';
    out += '\n';
  }
  return out;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace protoalign
