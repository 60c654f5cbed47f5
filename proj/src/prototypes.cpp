#include "protoalign/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protoalign/error.hpp"

namespace protoalign {

namespace {

void check_dims(const Matrix& features, const PrototypeSet& protos, const char* who) {
  if (features.cols() != protos.dim()) {
    throw InvalidArgument(std::string(who) + ": feature dim " + std::to_string(features.cols()) +
                          " != prototype dim " + std::to_string(protos.dim()));
  }
}

}  // namespace

PrototypeSet::PrototypeSet(Matrix weights, std::vector<double> prior, double temperature)
    : temperature_(temperature) {
  if (weights.rows() < 1 || weights.cols() < 1)
    throw InvalidArgument("PrototypeSet: need at least one class and one feature");
  if (!(temperature > 0.0)) throw InvalidArgument("PrototypeSet: temperature must be positive");
  if (!weights.all_finite()) throw InvalidArgument("PrototypeSet: non-finite weights");
  // Rows already at unit norm are kept bit-exact so reloading a saved
  // classifier reproduces it exactly.
  weights_ = std::move(weights);
  for (std::size_t r = 0; r < weights_.rows(); ++r) {
    auto row = weights_.row(r);
    const double n = norm(row);
    if (!(n > 0.0)) throw DegenerateInput("PrototypeSet: zero prototype row " + std::to_string(r));
    if (std::abs(n - 1.0) > 1e-15)
      for (double& x : row) x /= n;
  }
  prior_ = validated_prior(std::move(prior), weights_.rows());
}

PrototypeSet PrototypeSet::with_uniform_prior(Matrix weights, double temperature) {
  const std::size_t c = weights.rows();
  return PrototypeSet(std::move(weights), std::vector<double>(c, 1.0 / static_cast<double>(c)),
                      temperature);
}

PrototypeSet PrototypeSet::with_prior(std::vector<double> prior) const {
  PrototypeSet out;
  out.weights_ = weights_;
  out.temperature_ = temperature_;
  out.prior_ = validated_prior(std::move(prior), weights_.rows());
  return out;
}

std::vector<double> PrototypeSet::validated_prior(std::vector<double> prior, std::size_t classes) {
  if (prior.size() != classes) throw InvalidArgument("PrototypeSet: prior length != class count");
  double total = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("PrototypeSet: invalid prior entry");
    total += p;
  }
  if (!(total > 0.0)) throw InvalidArgument("PrototypeSet: all-zero prior");
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("PrototypeSet: prior does not sum to 1");
  return prior;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateInput("cosine_distance: zero vector");
  return 1.0 - dot(a, b) / (na * nb);
}

Matrix classifier_logits(const Matrix& features, const PrototypeSet& protos) {
  check_dims(features, protos, "classifier_logits");
  Matrix logits = matmul_bt(normalize_rows(features), protos.weights());
  const double inv_tau = 1.0 / protos.temperature();
  for (double& x : logits.values()) x *= inv_tau;
  return logits;
}

Matrix class_probabilities(const Matrix& features, const PrototypeSet& protos) {
  Matrix logits = classifier_logits(features, protos);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = softmax(logits.row(i));
    std::ranges::copy(p, logits.row(i).begin());
  }
  return logits;
}

TransportPlan transport_conditional(const Matrix& features, const PrototypeSet& protos) {
  check_dims(features, protos, "transport_conditional");
  const Matrix sims = matmul_bt(normalize_rows(features), protos.weights());
  const auto& prior = protos.prior();
  const double tau = protos.temperature();
  const std::size_t classes = protos.num_classes();
  Matrix probs(sims.rows(), classes);
  for (std::size_t i = 0; i < sims.rows(); ++i) {
    // Zero-prior classes get exactly zero mass; the rest use a shifted exp.
    double top = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c)
      if (prior[c] > 0.0) top = std::max(top, sims(i, c) / tau + std::log(prior[c]));
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double w = prior[c] > 0.0 ? std::exp(sims(i, c) / tau + std::log(prior[c]) - top) : 0.0;
      probs(i, c) = w;
      total += w;
    }
    for (std::size_t c = 0; c < classes; ++c) probs(i, c) /= total;
  }
  return {std::move(probs)};
}

std::vector<double> em_prior_update(const Matrix& features, const PrototypeSet& protos,
                                    double momentum) {
  if (features.rows() == 0) throw DegenerateInput("em_prior_update: empty batch");
  if (!(momentum >= 0.0 && momentum <= 1.0))
    throw InvalidArgument("em_prior_update: momentum must lie in [0, 1]");
  const TransportPlan plan = transport_conditional(features, protos);
  const std::size_t classes = protos.num_classes();
  std::vector<double> batch(classes, 0.0);
  for (std::size_t i = 0; i < plan.probs.rows(); ++i)
    for (std::size_t c = 0; c < classes; ++c) batch[c] += plan.probs(i, c);
  const double inv_b = 1.0 / static_cast<double>(features.rows());
  std::vector<double> updated(classes);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    updated[c] = momentum * protos.prior()[c] + (1.0 - momentum) * batch[c] * inv_b;
    total += updated[c];
  }
  for (double& p : updated) p /= total;
  return updated;
}

}  // namespace protoalign
