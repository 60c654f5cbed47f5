#pragma once

#include <cstddef>
#include <vector>

#include "protoalign/linalg.hpp"
#include "protoalign/pfa_loss.hpp"
#include "protoalign/prototypes.hpp"
#include "protoalign/rng.hpp"
#include "protoalign/uncertainty.hpp"

namespace protoalign {

/// Queries of one class with their positive prototype and, per query, the
/// row indices of its negatives in ContrastiveBatch::negative_pool.
struct ContrastiveClassBlock {
  std::size_t cls = 0;
  std::vector<std::size_t> query_rows;  // rows of the live batch
  Matrix queries;                       // raw live features, one row per query
  std::vector<double> positive;         // unit prototype
  std::vector<std::vector<std::size_t>> negatives;
};

struct ContrastiveBatch {
  std::size_t batch_rows = 0;  // B of the live batch the gradient maps back to
  std::size_t dim = 0;
  Matrix negative_pool;        // unit-normalized snapshot features; no gradient
  std::vector<ContrastiveClassBlock> blocks;
  std::vector<std::size_t> skipped_classes;

  bool empty() const { return blocks.empty(); }
  std::size_t query_count() const;
};

/// Draws up to `queries_per_class` queries from each P_c without replacement
/// and `negatives_per_query` negatives for each query from N_c (with
/// replacement only when |N_c| is smaller than requested). Classes with an
/// empty P_c or N_c are skipped and listed in skipped_classes.
ContrastiveBatch sample_contrastive_batch(const UncertaintyPartition& partition,
                                          const Matrix& live_features,
                                          const Matrix& snapshot_features,
                                          const PrototypeSet& protos,
                                          std::size_t queries_per_class,
                                          std::size_t negatives_per_query, SeededRng& rng);

/// InfoNCE over prototype positives and mined negatives, averaged over the
/// queries actually sampled. grad_features is batch_rows x dim and is
/// non-zero only on query rows.
LossResult cl_loss(const ContrastiveBatch& batch, double temperature);

}  // namespace protoalign
