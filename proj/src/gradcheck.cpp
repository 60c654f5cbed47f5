#include "protoalign/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "protoalign/contrastive.hpp"
#include "protoalign/error.hpp"
#include "protoalign/extractor.hpp"
#include "protoalign/pfa_loss.hpp"
#include "protoalign/rng.hpp"

namespace protoalign {

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double eps) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + eps;
    const double up = f(probe);
    probe[k] = x[k] - eps;
    const double down = f(probe);
    probe[k] = x[k];
    out[k] = (up - down) / (2.0 * eps);
  }
  return out;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return worst;
}

namespace {

using FeatureLoss = std::function<LossResult(const Matrix&)>;

struct Instance {
  Matrix features;
  PrototypeSet protos;
  ContrastiveBatch contrast;
};

Matrix random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = scale * rng.normal();
  return m;
}

Instance random_instance(SeededRng& rng, std::size_t index) {
  const std::size_t classes = 2 + rng.below(4);  // 2..5
  const std::size_t dim = 2 + rng.below(15);     // 2..16
  const std::size_t batch = 2 + rng.below(7);    // 2..8
  const double taus[] = {0.1, 0.2, 0.5};
  const double tau = taus[index % 3];

  std::vector<double> prior(classes);
  double total = 0.0;
  for (double& p : prior) total += (p = rng.uniform(0.1, 1.0));
  for (double& p : prior) p /= total;
  PrototypeSet protos(random_matrix(rng, classes, dim), prior, tau);

  Matrix features = random_matrix(rng, batch, dim, rng.uniform(0.5, 2.0));

  // Contrastive layout over the same rows: one or two queries per class on
  // distinct rows, negatives drawn from an independent unit pool.
  ContrastiveBatch cb;
  cb.batch_rows = batch;
  cb.dim = dim;
  cb.negative_pool = normalize_rows(random_matrix(rng, 8, dim));
  const auto rows = rng.sample_without_replacement(batch, batch);
  std::size_t next = 0;
  for (std::size_t c = 0; c < classes && next < batch; ++c) {
    ContrastiveClassBlock block;
    block.cls = c;
    const std::size_t k = std::min<std::size_t>(1 + rng.below(2), batch - next);
    for (std::size_t q = 0; q < k; ++q) block.query_rows.push_back(rows[next++]);
    const auto proto = protos.prototype(c);
    block.positive.assign(proto.begin(), proto.end());
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t q = 0; q < k; ++q) {
      std::vector<std::size_t> negs;
      for (std::size_t j = 0; j < n; ++j) negs.push_back(rng.below(cb.negative_pool.rows()));
      block.negatives.push_back(std::move(negs));
    }
    cb.blocks.push_back(std::move(block));
  }
  return {std::move(features), std::move(protos), std::move(cb)};
}

ContrastiveBatch with_live_queries(ContrastiveBatch cb, const Matrix& live) {
  for (auto& block : cb.blocks) block.queries = live.gather_rows(block.query_rows);
  return cb;
}

FeatureLoss loss_for(const std::string& name, const Instance& inst) {
  if (name == "t2p") return [&inst](const Matrix& f) { return t2p_loss(f, inst.protos); };
  if (name == "p2t") return [&inst](const Matrix& f) { return p2t_loss(f, inst.protos); };
  if (name == "pfa") return [&inst](const Matrix& f) { return pfa_loss(f, inst.protos); };
  return [&inst](const Matrix& f) {
    return cl_loss(with_live_queries(inst.contrast, f), inst.protos.temperature());
  };
}

bool same_signs(const ForwardCache& a, const ForwardCache& b) {
  // Output layer is linear; only hidden pre-activations matter.
  for (std::size_t l = 0; l + 1 < a.pre.size(); ++l) {
    auto x = a.pre[l].values();
    auto y = b.pre[l].values();
    for (std::size_t k = 0; k < x.size(); ++k)
      if ((x[k] > 0.0) != (y[k] > 0.0)) return false;
  }
  return true;
}

double check_features(const FeatureLoss& loss, const Matrix& features, double eps) {
  const LossResult analytic = loss(features);
  const auto numeric = central_difference(
      [&](std::span<const double> x) {
        return loss(Matrix(features.rows(), features.cols(), std::vector<double>(x.begin(), x.end()))).value;
      },
      features.values(), eps);
  return max_relative_error(analytic.grad_features.values(), numeric);
}

double check_composed(const FeatureLoss& loss, SeededRng& rng, std::size_t feature_dim,
                      std::size_t batch, double eps, std::size_t& kink_skips) {
  const std::size_t input_dim = 3 + rng.below(4);
  const std::size_t hidden = 4 + rng.below(5);
  MlpExtractor net = MlpExtractor::initialized({input_dim, hidden, hidden, feature_dim}, rng);
  std::vector<double> params(net.parameters().begin(), net.parameters().end());
  // Non-zero biases so the bias gradients are exercised away from symmetry.
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    std::vector<double> b(net.sizes()[l + 1]);
    for (double& x : b) x = 0.1 * rng.normal();
    net.set_bias(l, b);
  }
  params.assign(net.parameters().begin(), net.parameters().end());
  const Matrix x = random_matrix(rng, batch, input_dim);

  ForwardCache base;
  const LossResult at = loss(net.forward(x, base));
  const auto analytic = net.backward(base, at.grad_features);

  std::vector<double> a_kept, n_kept;
  MlpExtractor probe = net;
  std::vector<double> p = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ForwardCache up_cache, down_cache;
    p[k] = params[k] + eps;
    probe.set_parameters(p);
    const double up = loss(probe.forward(x, up_cache)).value;
    p[k] = params[k] - eps;
    probe.set_parameters(p);
    const double down = loss(probe.forward(x, down_cache)).value;
    p[k] = params[k];
    if (!same_signs(base, up_cache) || !same_signs(base, down_cache)) {
      ++kink_skips;
      continue;
    }
    a_kept.push_back(analytic[k]);
    n_kept.push_back((up - down) / (2.0 * eps));
  }
  return max_relative_error(a_kept, n_kept);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suites(const GradCheckOptions& options) {
  std::vector<GradCheckResult> results;
  const std::vector<std::string> losses = {"t2p", "p2t", "pfa", "cl"};
  for (const bool composed : {false, true}) {
    for (std::size_t li = 0; li < losses.size(); ++li) {
      const auto start = std::chrono::steady_clock::now();
      GradCheckResult r;
      r.suite = composed ? losses[li] + "+mlp" : losses[li];
      SeededRng rng(options.seed * 131 + li * 17 + (composed ? 7 : 0));
      for (std::size_t i = 0; i < options.instances; ++i) {
        const Instance inst = random_instance(rng, i);
        const FeatureLoss loss = loss_for(losses[li], inst);
        const double err =
            composed ? check_composed(loss, rng, inst.features.cols(), inst.features.rows(), options.eps,
                                      r.kink_skips)
                     : check_features(loss, inst.features, options.eps);
        r.max_rel_error = std::max(r.max_rel_error, err);
        ++r.instances;
      }
      r.passed = r.max_rel_error < options.tolerance;
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      results.push_back(r);
    }
  }
  return results;
}

}  // namespace protoalign
