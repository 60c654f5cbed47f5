#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "protoalign/linalg.hpp"
#include "protoalign/rng.hpp"
#include "protoalign/uncertainty.hpp"

namespace oracle {

using protoalign::IndexSets;
using protoalign::Matrix;
using protoalign::NegativeThresholdMode;
using protoalign::SeededRng;

// Rows from a softmax of scaled Gaussian logits; some rows sharpened to
// near one-hot so every batch mixes confident and uncertain samples.
inline Matrix random_probs(SeededRng& rng, std::size_t B, std::size_t C) {
  Matrix p(B, C);
  for (std::size_t i = 0; i < B; ++i) {
    std::vector<double> z(C);
    const double scale = rng.uniform(0.1, 6);
    for (double& x : z) x = scale * rng.normal();
    const auto s = protoalign::softmax(z, 1.0);
    std::ranges::copy(s, p.row(i).begin());
  }
  return p;
}

// Brute-force re-filter of the set definitions, written independently:
// entropy and rank are recomputed by hand from the probability rows.
struct BruteForce {
  std::vector<double> H;
  std::vector<std::size_t> label;
  std::vector<std::vector<int>> rank;

  explicit BruteForce(const Matrix& p) {
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double h = 0;
      std::size_t best = 0;
      for (std::size_t c = 0; c < p.cols(); ++c) {
        if (p(i, c) > 0) h -= p(i, c) * std::log(p(i, c));
        if (p(i, c) > p(i, best)) best = c;
      }
      H.push_back(h);
      label.push_back(best);
      std::vector<int> r(p.cols());
      for (std::size_t c = 0; c < p.cols(); ++c) {
        int better = 0;
        for (std::size_t k = 0; k < p.cols(); ++k)
          if (p(i, k) > p(i, c) || (p(i, k) == p(i, c) && k < c)) ++better;
        r[c] = better + 1;
      }
      rank.push_back(r);
    }
  }

  IndexSets queries(const std::vector<double>& gamma) const {
    IndexSets q(gamma.size());
    for (std::size_t c = 0; c < gamma.size(); ++c)
      for (std::size_t i = 0; i < H.size(); ++i)
        if (H[i] <= gamma[c] && label[i] == c) q[c].push_back(i);
    return q;
  }

  IndexSets negatives(const std::vector<double>& gamma, int rl, NegativeThresholdMode mode) const {
    IndexSets n(gamma.size());
    for (std::size_t c = 0; c < gamma.size(); ++c)
      for (std::size_t i = 0; i < H.size(); ++i) {
        const double g = mode == NegativeThresholdMode::PseudoLabel ? gamma[label[i]] : gamma[c];
        if (H[i] > g && rank[i][c] >= rl) n[c].push_back(i);
      }
    return n;
  }

  std::vector<double> gamma(const std::vector<double>& alpha) const {
    std::vector<double> g(alpha.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < alpha.size(); ++c) {
      std::vector<double> hs;
      for (std::size_t i = 0; i < H.size(); ++i)
        if (label[i] == c) hs.push_back(H[i]);
      if (hs.empty()) continue;
      std::ranges::sort(hs);
      std::size_t k = 1;
      while (static_cast<double>(k) < alpha[c] / 100.0 * static_cast<double>(hs.size()) - 1e-12) ++k;
      g[c] = hs[k - 1];
    }
    return g;
  }
};


}  // namespace oracle
