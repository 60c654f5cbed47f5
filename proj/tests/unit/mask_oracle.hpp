#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "protoalign/bench.hpp"
#include "protoalign/rng.hpp"

namespace oracle {

using protoalign::Mask2D;
using protoalign::SeededRng;

inline Mask2D square(std::size_t rows, std::size_t cols, std::size_t r0, std::size_t c0, std::size_t side) {
  Mask2D m(rows, cols);
  for (std::size_t r = r0; r < r0 + side; ++r)
    for (std::size_t c = c0; c < c0 + side; ++c) m.set(r, c);
  return m;
}

// All-pairs ASSD written independently: a pixel is on the boundary when any
// 4-neighbour is outside the mask or outside the array.
inline double assd_oracle(const Mask2D& a, const Mask2D& b) {
  auto boundary = [](const Mask2D& m) {
    std::vector<std::pair<double, double>> pts;
    auto fg = [&](long r, long c) {
      return r >= 0 && c >= 0 && r < static_cast<long>(m.rows) && c < static_cast<long>(m.cols) &&
             m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    };
    for (long r = 0; r < static_cast<long>(m.rows); ++r)
      for (long c = 0; c < static_cast<long>(m.cols); ++c)
        if (fg(r, c) && (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1)))
          pts.emplace_back(static_cast<double>(r), static_cast<double>(c));
    return pts;
  };
  const auto pa = boundary(a), pb = boundary(b);
  auto directed = [](const auto& from, const auto& to) {
    double total = 0;
    for (const auto& [r, c] : from) {
      double best = 1e300;
      for (const auto& [s, d] : to) best = std::min(best, std::hypot(r - s, c - d));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (directed(pa, pb) + directed(pb, pa));
}

inline Mask2D random_blob(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Mask2D m(rows, cols);
  const double cr = rng.uniform(0, static_cast<double>(rows)), cc = rng.uniform(0, static_cast<double>(cols));
  const double rad = rng.uniform(1, 6);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (std::hypot(static_cast<double>(r) - cr, static_cast<double>(c) - cc) < rad + rng.uniform(-1, 1))
        m.set(r, c);
  m.set(rng.below(rows), rng.below(cols));
  return m;
}

}  // namespace oracle
