#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "protoalign/contrastive.hpp"
#include "protoalign/error.hpp"

using namespace protoalign;
using doctest::Approx;

namespace {

struct Setup {
  PrototypeSet protos;
  Matrix live;
  Matrix snapshot;
  UncertaintyPartition part;
};

Setup random_setup(SeededRng& rng, std::size_t B, std::size_t C, std::size_t D) {
  const PrototypeSet protos = PrototypeSet::with_uniform_prior(oracle::random_matrix(rng, C, D), 0.1);
  const Matrix snapshot = oracle::random_matrix(rng, B, D);
  Matrix live = snapshot;
  for (double& x : live.values()) x += 0.1 * rng.normal();
  const auto pred = PredictionBatch::from_probs(class_probabilities(snapshot, protos));
  const std::vector<double> alpha(C, 80);
  return {protos, live, snapshot, partition_batch(pred, alpha, std::min<int>(3, static_cast<int>(C)))};
}

// Direct evaluation of the averaged InfoNCE objective from the block layout.
double direct_value(const ContrastiveBatch& b, double tau) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& blk : b.blocks)
    for (std::size_t k = 0; k < blk.query_rows.size(); ++k) {
      oracle::Mat negs;
      for (auto j : blk.negatives[k])
        negs.emplace_back(b.negative_pool.row(j).begin(), b.negative_pool.row(j).end());
      oracle::Vec q(blk.queries.row(k).begin(), blk.queries.row(k).end());
      total += oracle::info_nce_term(q, blk.positive, negs, tau);
      ++n;
    }
  return total / static_cast<double>(n);
}

ContrastiveBatch with_queries(ContrastiveBatch b, const Matrix& live) {
  for (auto& blk : b.blocks) blk.queries = live.gather_rows(blk.query_rows);
  return b;
}

// Hand-built batch: one block per class, queries on distinct rows,
// negatives indexing a pool of unit vectors.
ContrastiveBatch manual_batch(SeededRng& rng, const PrototypeSet& protos, const Matrix& live,
                              std::size_t K, std::size_t N, std::size_t pool) {
  ContrastiveBatch b;
  b.batch_rows = live.rows();
  b.dim = live.cols();
  b.negative_pool = normalize_rows(oracle::random_matrix(rng, pool, live.cols()));
  std::size_t row = 0;
  for (std::size_t c = 0; c < protos.num_classes(); ++c) {
    ContrastiveClassBlock blk;
    blk.cls = c;
    blk.positive.assign(protos.prototype(c).begin(), protos.prototype(c).end());
    for (std::size_t k = 0; k < K; ++k) {
      blk.query_rows.push_back(row++);
      std::vector<std::size_t> negs;
      for (std::size_t j = 0; j < N; ++j) negs.push_back(rng.below(pool));
      blk.negatives.push_back(negs);
    }
    b.blocks.push_back(std::move(blk));
  }
  return with_queries(b, live);
}

}  // namespace

TEST_CASE("sampling respects the partition") {
  SeededRng rng(42);
  for (int t = 0; t < 30; ++t) {
    const Setup s = random_setup(rng, 64, 4, 8);
    const std::size_t K = 1 + rng.below(20), N = 1 + rng.below(40);
    SeededRng draw(t);
    const auto b = sample_contrastive_batch(s.part, s.live, s.snapshot, s.protos, K, N, draw);
    CHECK(b.batch_rows == 64);
    std::set<std::size_t> seen_classes;
    for (const auto& blk : b.blocks) {
      seen_classes.insert(blk.cls);
      const auto& P = s.part.queries[blk.cls];
      const auto& Nc = s.part.negatives[blk.cls];
      CHECK(blk.query_rows.size() == std::min(K, P.size()));
      std::set<std::size_t> uniq(blk.query_rows.begin(), blk.query_rows.end());
      CHECK(uniq.size() == blk.query_rows.size());
      for (std::size_t k = 0; k < blk.query_rows.size(); ++k) {
        const auto i = blk.query_rows[k];
        CHECK(std::ranges::find(P, i) != P.end());
        for (std::size_t d = 0; d < 8; ++d) CHECK(blk.queries(k, d) == s.live(i, d));
        CHECK(blk.negatives[k].size() == N);
        std::set<std::size_t> negs(blk.negatives[k].begin(), blk.negatives[k].end());
        if (Nc.size() >= N) CHECK(negs.size() == N);
        for (auto j : blk.negatives[k]) {
          // The pool row is the normalized snapshot feature of a member of N_c.
          bool found = false;
          for (auto m : Nc) {
            const auto u = l2_normalize(s.snapshot.row(m));
            bool same = true;
            for (std::size_t d = 0; d < 8; ++d) same &= std::abs(u[d] - b.negative_pool(j, d)) < 1e-15;
            found |= same;
          }
          CHECK(found);
        }
      }
      CHECK(blk.positive == std::vector<double>(s.protos.prototype(blk.cls).begin(),
                                                s.protos.prototype(blk.cls).end()));
    }
    for (std::size_t c = 0; c < 4; ++c) {
      const bool participates = !s.part.queries[c].empty() && !s.part.negatives[c].empty();
      CHECK(participates == (seen_classes.count(c) == 1));
      if (!participates) CHECK(std::ranges::find(b.skipped_classes, c) != b.skipped_classes.end());
    }
  }
}

TEST_CASE("exact-fit sampling uses every query once") {
  SeededRng rng(5);
  const PrototypeSet protos = PrototypeSet::with_uniform_prior(oracle::random_matrix(rng, 3, 4), 0.1);
  const Matrix f = oracle::random_matrix(rng, 12, 4);
  UncertaintyPartition part;
  part.gamma = {0, 0, 0};
  part.queries = {{0, 1, 2, 3}, {4, 5}, {}};
  part.negatives = {{6, 7, 8, 9, 10, 11}, {}, {0}};
  SeededRng draw(1);
  const auto b = sample_contrastive_batch(part, f, f, protos, 4, 5, draw);
  REQUIRE(b.blocks.size() == 1);
  auto rows = b.blocks[0].query_rows;
  std::ranges::sort(rows);
  CHECK(rows == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(b.query_count() == 4);
  CHECK(b.skipped_classes == std::vector<std::size_t>{1, 2});
}

TEST_CASE("empty partitions give an empty batch") {
  SeededRng rng(6);
  const PrototypeSet protos = PrototypeSet::with_uniform_prior(oracle::random_matrix(rng, 3, 4), 0.1);
  const Matrix f = oracle::random_matrix(rng, 5, 4);
  UncertaintyPartition part;
  part.gamma = {0, 0, 0};
  part.queries = {{0, 1}, {2}, {3, 4}};
  part.negatives = {{}, {}, {}};
  SeededRng draw(2);
  const auto b = sample_contrastive_batch(part, f, f, protos, 4, 5, draw);
  CHECK(b.empty());
  CHECK(b.skipped_classes.size() == 3);
  CHECK_THROWS_AS(cl_loss(b, 0.1), DegenerateInput);
}

TEST_CASE("sampling is deterministic per seed") {
  SeededRng rng(7);
  const Setup s = random_setup(rng, 64, 4, 6);
  SeededRng a(99), b(99);
  const auto x = sample_contrastive_batch(s.part, s.live, s.snapshot, s.protos, 8, 16, a);
  const auto y = sample_contrastive_batch(s.part, s.live, s.snapshot, s.protos, 8, 16, b);
  REQUIRE(x.blocks.size() == y.blocks.size());
  for (std::size_t k = 0; k < x.blocks.size(); ++k) {
    CHECK(x.blocks[k].query_rows == y.blocks[k].query_rows);
    CHECK(x.blocks[k].negatives == y.blocks[k].negatives);
  }
  CHECK(x.negative_pool == y.negative_pool);
}

TEST_CASE("cl loss closed forms") {
  SUBCASE("separated limit") {
    ContrastiveBatch b;
    b.batch_rows = 1;
    b.dim = 2;
    b.negative_pool = Matrix::from_rows({{-1, 0}});
    ContrastiveClassBlock blk;
    blk.cls = 0;
    blk.query_rows = {0};
    blk.queries = Matrix::from_rows({{3, 0}});
    blk.positive = {1, 0};
    blk.negatives = {{0, 0, 0, 0}};
    b.blocks.push_back(blk);
    const auto r = cl_loss(b, 0.1);
    CHECK(r.value == Approx(std::log1p(4 * std::exp(-20.0))).epsilon(1e-12));
    CHECK(r.value < 1e-7);
  }
  SUBCASE("symmetric case is ln 2") {
    ContrastiveBatch b;
    b.batch_rows = 1;
    b.dim = 2;
    b.negative_pool = Matrix::from_rows({{0, 1}});
    ContrastiveClassBlock blk;
    blk.query_rows = {0};
    blk.queries = Matrix::from_rows({{1, 1}});
    blk.positive = {1, 0};
    blk.negatives = {{0}};
    b.blocks.push_back(blk);
    CHECK(cl_loss(b, 0.1).value == Approx(std::log(2.0)).epsilon(1e-14));
    CHECK_THROWS_AS(cl_loss(b, 0.0), InvalidArgument);
  }
}

TEST_CASE("cl loss value and gradient on a seeded instance") {
  // C=3, K=4, N=8, D=16.
  SeededRng rng(316);
  const PrototypeSet protos = PrototypeSet::with_uniform_prior(oracle::random_matrix(rng, 3, 16), 0.1);
  const Matrix live = oracle::random_matrix(rng, 12, 16);
  const auto b = manual_batch(rng, protos, live, 4, 8, 20);
  const auto r = cl_loss(b, 0.1);
  CHECK(r.value == Approx(direct_value(b, 0.1)).epsilon(1e-12));
  const auto numeric = oracle::central_difference(
      [&](const oracle::Vec& x) { return cl_loss(with_queries(b, Matrix(12, 16, x)), 0.1).value; },
      live.storage());
  CHECK(oracle::max_rel_error(r.grad_features.storage(), numeric) < 1e-4);
}

TEST_CASE("cl loss properties") {
  SeededRng rng(808);
  for (int t = 0; t < 25; ++t) {
    const std::size_t C = 2 + rng.below(3), K = 1 + rng.below(3), N = 1 + rng.below(6), D = 2 + rng.below(8);
    const PrototypeSet protos = PrototypeSet::with_uniform_prior(oracle::random_matrix(rng, C, D), 0.1);
    const Matrix live = oracle::random_matrix(rng, C * K + 2, D);
    const auto b = manual_batch(rng, protos, live, K, N, 10);
    const double tau = 0.1 + 0.1 * static_cast<double>(t % 3);
    const auto r = cl_loss(b, tau);
    CHECK(r.value >= 0);
    // Cross-entropy of the positive among {positive} + negatives.
    double ce = 0;
    for (const auto& blk : b.blocks)
      for (std::size_t k = 0; k < K; ++k) {
        const auto u = l2_normalize(blk.queries.row(k));
        std::vector<double> logits{dot(u, blk.positive) / tau};
        for (auto j : blk.negatives[k]) logits.push_back(dot(u, b.negative_pool.row(j)) / tau);
        ce -= std::log(softmax(logits, 1.0)[0]);
      }
    CHECK(r.value == Approx(ce / static_cast<double>(C * K)).epsilon(1e-12));
    // Gradient lives on query rows and is orthogonal to each raw feature.
    for (std::size_t i = 0; i < live.rows(); ++i) {
      CHECK(std::abs(dot(r.grad_features.row(i), live.row(i))) < 1e-8);
      if (i >= C * K)
        for (double g : r.grad_features.row(i)) CHECK(g == 0.0);
    }
  }
}

TEST_CASE("pushing a negative away never raises the loss") {
  const PrototypeSet protos = PrototypeSet::with_uniform_prior(Matrix::from_rows({{1, 0, 0}}), 0.1);
  ContrastiveBatch b;
  b.batch_rows = 1;
  b.dim = 3;
  ContrastiveClassBlock blk;
  blk.query_rows = {0};
  blk.queries = Matrix::from_rows({{0.8, 0.6, 0}});
  blk.positive = {1, 0, 0};
  blk.negatives = {{0, 1}};
  b.blocks.push_back(blk);
  double prev = std::numeric_limits<double>::infinity();
  // Rotate the first negative away from the query; the other stays fixed.
  for (double angle = 0; angle <= 3.14159; angle += 0.1) {
    const double qa = std::atan2(0.6, 0.8);
    b.negative_pool = Matrix::from_rows({{std::cos(qa + angle), std::sin(qa + angle), 0}, {0, 0.6, 0.8}});
    const double v = cl_loss(b, 0.1).value;
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}
