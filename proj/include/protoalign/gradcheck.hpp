#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace protoalign {

/// Central differences (f(x + eps e_k) - f(x - eps e_k)) / 2 eps for every k.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double eps);

/// max_k |a_k - n_k| / max(|a_k|, |n_k|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-8);

struct GradCheckResult {
  std::string suite;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  // Coordinates left out because a +/- eps step crossed a rectifier kink,
  // where the one-sided slopes differ and central differences are invalid.
  std::size_t kink_skips = 0;
  double seconds = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 2023;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

/// Finite-difference suites for the four losses, alone (w.r.t. features)
/// and composed with a small extractor (w.r.t. network parameters).
/// Instances are drawn with B <= 8, C <= 5, D_f <= 16.
std::vector<GradCheckResult> run_gradient_suites(const GradCheckOptions& options);

}  // namespace protoalign
