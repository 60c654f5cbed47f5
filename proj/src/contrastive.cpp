#include "protoalign/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "protoalign/error.hpp"

namespace protoalign {

std::size_t ContrastiveBatch::query_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.query_rows.size();
  return n;
}

ContrastiveBatch sample_contrastive_batch(const UncertaintyPartition& partition,
                                          const Matrix& live_features,
                                          const Matrix& snapshot_features,
                                          const PrototypeSet& protos,
                                          std::size_t queries_per_class,
                                          std::size_t negatives_per_query, SeededRng& rng) {
  if (live_features.rows() != snapshot_features.rows() ||
      live_features.cols() != snapshot_features.cols())
    throw InvalidArgument("sample_contrastive_batch: live and snapshot batches are not aligned");
  if (live_features.cols() != protos.dim())
    throw InvalidArgument("sample_contrastive_batch: feature dim does not match prototypes");
  if (partition.queries.size() != protos.num_classes() ||
      partition.negatives.size() != protos.num_classes())
    throw InvalidArgument("sample_contrastive_batch: partition class count mismatch");
  if (queries_per_class == 0 || negatives_per_query == 0)
    throw InvalidArgument("sample_contrastive_batch: K and N must be positive");

  ContrastiveBatch batch;
  batch.batch_rows = live_features.rows();
  batch.dim = live_features.cols();
  batch.negative_pool = normalize_rows(snapshot_features);

  for (std::size_t c = 0; c < protos.num_classes(); ++c) {
    const auto& pool_q = partition.queries[c];
    const auto& pool_n = partition.negatives[c];
    if (pool_q.empty() || pool_n.empty()) {
      batch.skipped_classes.push_back(c);
      continue;
    }
    ContrastiveClassBlock block;
    block.cls = c;
    const std::size_t k = std::min(queries_per_class, pool_q.size());
    for (std::size_t pick : rng.sample_without_replacement(pool_q.size(), k))
      block.query_rows.push_back(pool_q[pick]);
    block.queries = live_features.gather_rows(block.query_rows);
    const auto proto = protos.prototype(c);
    block.positive.assign(proto.begin(), proto.end());

    const bool enough = pool_n.size() >= negatives_per_query;
    for (std::size_t q = 0; q < k; ++q) {
      std::vector<std::size_t> negs;
      negs.reserve(negatives_per_query);
      if (enough) {
        for (std::size_t pick : rng.sample_without_replacement(pool_n.size(), negatives_per_query))
          negs.push_back(pool_n[pick]);
      } else {
        for (std::size_t j = 0; j < negatives_per_query; ++j)
          negs.push_back(pool_n[rng.below(pool_n.size())]);
      }
      block.negatives.push_back(std::move(negs));
    }
    batch.blocks.push_back(std::move(block));
  }
  return batch;
}

LossResult cl_loss(const ContrastiveBatch& batch, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("cl_loss: temperature must be positive");
  if (batch.empty()) throw DegenerateInput("cl_loss: empty contrastive batch");

  LossResult out{0.0, Matrix(batch.batch_rows, batch.dim)};
  const double inv_count = 1.0 / static_cast<double>(batch.query_count());
  std::vector<double> logits;
  std::vector<double> dir(batch.dim);

  for (const auto& block : batch.blocks) {
    for (std::size_t k = 0; k < block.query_rows.size(); ++k) {
      const auto raw = block.queries.row(k);
      const double n = norm(raw);
      if (!(n > 0.0)) throw DegenerateInput("cl_loss: zero query feature");
      for (std::size_t d = 0; d < batch.dim; ++d) dir[d] = raw[d] / n;

      const auto& negs = block.negatives[k];
      logits.assign(negs.size() + 1, 0.0);
      logits[0] = dot(dir, block.positive) / temperature;
      for (std::size_t j = 0; j < negs.size(); ++j)
        logits[j + 1] = dot(dir, batch.negative_pool.row(negs[j])) / temperature;

      const std::vector<double> p = softmax(logits);
      out.value -= std::log(p[0]) * inv_count;

      // dL/du = ((p0 - 1) z+ + sum_j p_j z-_j) / tau, then project off u.
      std::vector<double> du(batch.dim);
      for (std::size_t d = 0; d < batch.dim; ++d) du[d] = (p[0] - 1.0) * block.positive[d];
      for (std::size_t j = 0; j < negs.size(); ++j) {
        const auto z = batch.negative_pool.row(negs[j]);
        for (std::size_t d = 0; d < batch.dim; ++d) du[d] += p[j + 1] * z[d];
      }
      const double radial = dot(du, dir);
      auto g = out.grad_features.row(block.query_rows[k]);
      const double scale = inv_count / (temperature * n);
      for (std::size_t d = 0; d < batch.dim; ++d) g[d] += scale * (du[d] - radial * dir[d]);
    }
  }
  return out;
}

}  // namespace protoalign
