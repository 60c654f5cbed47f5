#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protoalign/model.hpp"
#include "protoalign/rng.hpp"
#include "protoalign/uncertainty.hpp"

namespace protoalign {

/// Which transport terms the alignment stage minimizes. Only `Full` is the
/// method proper; the others exist for ablations.
enum class AlignmentObjective { Full, TargetToPrototype, PrototypeToTarget };

AlignmentObjective parse_objective(const std::string& name);
std::string to_string(AlignmentObjective objective);

struct AdaptationConfig {
  double temperature = 0.1;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  std::size_t pfa_iters = 200;
  std::size_t cl_iters = 400;
  std::vector<double> alpha = {80.0};  // one value broadcasts to every class
  std::size_t queries_per_class = 64;
  std::size_t negatives_per_query = 256;
  int low_rank = 3;
  double em_momentum = 0.9;
  std::uint64_t seed = 0;
  NegativeThresholdMode negatives_threshold_mode = NegativeThresholdMode::PseudoLabel;
  bool cl_keep_pfa_loss = false;
  AlignmentObjective objective = AlignmentObjective::Full;

  /// Per-class alpha vector for `classes` classes.
  std::vector<double> alpha_for(std::size_t classes) const;
  /// Throws InvalidArgument on any out-of-range field.
  void validate(std::size_t classes) const;
};

struct TrainReport {
  std::string stage;
  // Alignment stage, one entry per iteration.
  std::vector<double> t2p;
  std::vector<double> p2t;
  std::vector<double> pfa;
  std::vector<std::vector<double>> prior;
  // Contrastive stage, one entry per iteration; no-op iterations record 0.
  std::vector<double> cl;
  std::vector<bool> cl_active;
  std::size_t noop_iterations = 0;
  std::vector<std::string> warnings;
  double elapsed_seconds = 0.0;

  std::size_t iterations() const { return stage == "cl" ? cl.size() : pfa.size(); }
};

/// Epoch-style sampler: a seeded permutation consumed batch by batch and
/// reshuffled when exhausted.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
  SeededRng rng_;
};

/// Alignment stage. The classifier weights are never modified; the prior
/// starts uniform and is updated by EM every iteration. Returns the
/// adapted model, which becomes the frozen snapshot for the next stage.
std::pair<Model, TrainReport> run_pfa_stage(const Model& source, const Matrix& target_inputs,
                                            const AdaptationConfig& config);

/// Contrastive stage. `snapshot` supplies pseudo-labels, entropies and
/// negative features and is never updated; `live` is optimized.
std::pair<Model, TrainReport> run_cl_stage(const Model& live, const Model& snapshot,
                                           const Matrix& target_inputs,
                                           const AdaptationConfig& config);

struct AdaptResult {
  Model model;
  TrainReport pfa;
  TrainReport cl;
};

enum class Stages { Both, AlignOnly, ContrastOnly };

Stages parse_stages(const std::string& name);

/// Full two-stage adaptation starting from the source model. With
/// Stages::ContrastOnly the source model itself is the snapshot.
AdaptResult adapt(const Model& source, const Matrix& target_inputs, const AdaptationConfig& config,
                  Stages stages = Stages::Both);

}  // namespace protoalign
