#include "protoalign/uncertainty.hpp"

#include <cmath>
#include <limits>

#include "protoalign/error.hpp"

namespace protoalign {

PredictionBatch PredictionBatch::from_probs(Matrix probs) {
  PredictionBatch out;
  out.pseudo_labels.reserve(probs.rows());
  out.entropies.reserve(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    out.pseudo_labels.push_back(argmax(probs.row(i)));
    out.entropies.push_back(entropy(probs.row(i)));
  }
  out.probs = std::move(probs);
  return out;
}

NegativeThresholdMode parse_threshold_mode(const std::string& name) {
  if (name == "pseudo_label") return NegativeThresholdMode::PseudoLabel;
  if (name == "target_class") return NegativeThresholdMode::TargetClass;
  throw InvalidArgument("unknown negatives_threshold_mode '" + name + "'");
}

std::string to_string(NegativeThresholdMode mode) {
  return mode == NegativeThresholdMode::PseudoLabel ? "pseudo_label" : "target_class";
}

std::vector<double> class_thresholds(const PredictionBatch& pred, std::span<const double> alpha) {
  const std::size_t classes = pred.num_classes();
  if (alpha.size() != classes) throw InvalidArgument("class_thresholds: need one alpha per class");
  for (double a : alpha)
    if (!(a > 0.0 && a <= 100.0)) throw InvalidArgument("class_thresholds: alpha must lie in (0, 100]");

  std::vector<std::vector<double>> per_class(classes);
  for (std::size_t i = 0; i < pred.size(); ++i)
    per_class[pred.pseudo_labels[i]].push_back(pred.entropies[i]);

  std::vector<double> gamma(classes, -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < classes; ++c)
    if (!per_class[c].empty()) gamma[c] = percentile(per_class[c], alpha[c]);
  return gamma;
}

IndexSets select_queries(const PredictionBatch& pred, std::span<const double> gamma) {
  if (gamma.size() != pred.num_classes()) throw InvalidArgument("select_queries: gamma length");
  IndexSets queries(pred.num_classes());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t c = pred.pseudo_labels[i];
    if (pred.entropies[i] <= gamma[c]) queries[c].push_back(i);
  }
  return queries;
}

IndexSets select_negatives(const PredictionBatch& pred, std::span<const double> gamma,
                           int low_rank, NegativeThresholdMode mode) {
  const std::size_t classes = pred.num_classes();
  if (gamma.size() != classes) throw InvalidArgument("select_negatives: gamma length");
  if (low_rank < 2 || static_cast<std::size_t>(low_rank) > classes)
    throw InvalidArgument("select_negatives: low rank threshold must lie in [2, C]");
  IndexSets negatives(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double h = pred.entropies[i];
    if (mode == NegativeThresholdMode::PseudoLabel && !(h > gamma[pred.pseudo_labels[i]])) continue;
    const std::vector<int> order = category_order(pred.probs.row(i));
    for (std::size_t c = 0; c < classes; ++c) {
      if (mode == NegativeThresholdMode::TargetClass && !(h > gamma[c])) continue;
      if (order[c] >= low_rank) negatives[c].push_back(i);
    }
  }
  return negatives;
}

UncertaintyPartition partition_batch(const PredictionBatch& pred, std::span<const double> alpha,
                                     int low_rank, NegativeThresholdMode mode) {
  UncertaintyPartition part;
  part.gamma = class_thresholds(pred, alpha);
  part.queries = select_queries(pred, part.gamma);
  part.negatives = select_negatives(pred, part.gamma, low_rank, mode);
  return part;
}

}  // namespace protoalign
