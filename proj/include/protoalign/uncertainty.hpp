#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "protoalign/linalg.hpp"

namespace protoalign {

/// Class probabilities from the snapshot model with derived pseudo-labels
/// (row argmax) and per-row entropies.
struct PredictionBatch {
  Matrix probs;
  std::vector<std::size_t> pseudo_labels;
  std::vector<double> entropies;

  static PredictionBatch from_probs(Matrix probs);
  std::size_t size() const { return probs.rows(); }
  std::size_t num_classes() const { return probs.cols(); }
};

/// Which entropy threshold decides that a sample is unreliable when it is
/// considered as a negative for class c.
enum class NegativeThresholdMode {
  PseudoLabel,  // gamma of the sample's own pseudo-label
  TargetClass,  // gamma_c of the class the negative is drawn for
};

NegativeThresholdMode parse_threshold_mode(const std::string& name);
std::string to_string(NegativeThresholdMode mode);

using IndexSets = std::vector<std::vector<std::size_t>>;

struct UncertaintyPartition {
  std::vector<double> gamma;  // -inf for classes with no pseudo-labeled samples
  IndexSets queries;
  IndexSets negatives;
};

/// gamma_c = nearest-rank alpha_c percentile of the entropies of the samples
/// pseudo-labeled c. `alpha` holds one value per class, each in (0, 100].
std::vector<double> class_thresholds(const PredictionBatch& pred, std::span<const double> alpha);

/// P_c = { i : H(p_i) <= gamma_c and argmax p_i = c }, ascending index order.
IndexSets select_queries(const PredictionBatch& pred, std::span<const double> gamma);

/// N_c = { i : H(p_i) > threshold and rank_i(c) >= low_rank }, ascending.
IndexSets select_negatives(const PredictionBatch& pred, std::span<const double> gamma,
                           int low_rank,
                           NegativeThresholdMode mode = NegativeThresholdMode::PseudoLabel);

UncertaintyPartition partition_batch(const PredictionBatch& pred, std::span<const double> alpha,
                                     int low_rank,
                                     NegativeThresholdMode mode = NegativeThresholdMode::PseudoLabel);

}  // namespace protoalign
