#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace protoalign {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  static AdamState for_parameters(std::size_t n, double lr, double weight_decay);
};

/// Bias-corrected Adam step followed by decoupled weight decay
/// (p -= lr * wd * p). Moments are allocated on first use.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace protoalign
