#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "protoalign/linalg.hpp"
#include "protoalign/rng.hpp"

namespace protoalign {

/// Activations saved by MlpExtractor::forward for the backward pass.
struct ForwardCache {
  std::uint64_t stamp = 0;
  std::vector<Matrix> inputs;  // input to every layer
  std::vector<Matrix> pre;     // pre-activation output of every layer
};

/// Fully connected feature extractor. Hidden layers use a leaky rectifier
/// (slope 0.01); the output layer is linear.
///
/// Parameters are laid out flat as [W0, b0, W1, b1, ...] with W_l stored
/// row-major as (out x in). Gradients from backward() use the same layout.
class MlpExtractor {
 public:
  static constexpr double kLeakySlope = 0.01;

  MlpExtractor() = default;
  /// Zero-initialized network with the given layer widths.
  explicit MlpExtractor(std::vector<std::size_t> sizes);
  /// He-uniform weights, zero biases.
  static MlpExtractor initialized(std::vector<std::size_t> sizes, SeededRng& rng);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> values);

  /// Views into the flat parameter vector for layer l.
  Matrix weight(std::size_t layer) const;
  std::vector<double> bias(std::size_t layer) const;
  void set_weight(std::size_t layer, const Matrix& w);
  void set_bias(std::size_t layer, std::span<const double> b);

  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, ForwardCache& cache) const;

  /// Reverse-mode gradient of the parameters given dL/d(output). Throws
  /// InvalidState if `cache` came from a different network or from before
  /// the last parameter change.
  std::vector<double> backward(const ForwardCache& cache, const Matrix& grad_output) const;

  bool operator==(const MlpExtractor& other) const {
    return sizes_ == other.sizes_ && params_ == other.params_;
  }

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer + 1] * sizes_[layer];
  }
  void touch();

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  // Globally unique per parameter state; copies share it until modified.
  std::uint64_t stamp_ = 0;
};

}  // namespace protoalign
