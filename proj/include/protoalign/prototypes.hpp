#pragma once

#include <span>
#include <vector>

#include "protoalign/linalg.hpp"

namespace protoalign {

/// The frozen source classifier: one unit-norm prototype row per class, the
/// estimated target class prior, and the softmax temperature.
class PrototypeSet {
 public:
  /// Rows of `weights` are l2-normalized here, once. `prior` must lie on the
  /// simplex (within 1e-9).
  PrototypeSet(Matrix weights, std::vector<double> prior, double temperature);

  static PrototypeSet with_uniform_prior(Matrix weights, double temperature);

  const Matrix& weights() const { return weights_; }
  const std::vector<double>& prior() const { return prior_; }
  double temperature() const { return temperature_; }
  std::size_t num_classes() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols(); }
  std::span<const double> prototype(std::size_t c) const { return weights_.row(c); }

  /// Same prototypes, different prior. The weights are copied bit-for-bit.
  PrototypeSet with_prior(std::vector<double> prior) const;

 private:
  PrototypeSet() = default;
  static std::vector<double> validated_prior(std::vector<double> prior, std::size_t classes);

  Matrix weights_;
  std::vector<double> prior_;
  double temperature_ = 0.1;
};

/// Row-stochastic B x C matrix of transport probabilities pi(mu_c | f_i).
struct TransportPlan {
  Matrix probs;
};

/// 1 - cos(a, b).
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Entry (i, c) = <f_i / |f_i|, mu_c> / tau.
Matrix classifier_logits(const Matrix& features, const PrototypeSet& protos);

/// Row-wise softmax of classifier_logits: the model's class probabilities.
Matrix class_probabilities(const Matrix& features, const PrototypeSet& protos);

/// Prior-weighted softmax over prototypes for each (normalized) feature.
TransportPlan transport_conditional(const Matrix& features, const PrototypeSet& protos);

/// One EM pass: E-step builds the transport plan under the current prior,
/// M-step averages it over the batch; the result is blended with the old
/// prior as momentum * old + (1 - momentum) * batch estimate.
std::vector<double> em_prior_update(const Matrix& features, const PrototypeSet& protos,
                                    double momentum);

}  // namespace protoalign
