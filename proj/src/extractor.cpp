#include "protoalign/extractor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "protoalign/error.hpp"
#include "protoalign/parallel.hpp"

namespace protoalign {

namespace {

std::atomic<std::uint64_t> g_stamp{0};

}  // namespace

void MlpExtractor::touch() { stamp_ = ++g_stamp; }

MlpExtractor::MlpExtractor(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw InvalidArgument("MlpExtractor: need at least input and output sizes");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw InvalidArgument("MlpExtractor: zero layer width");
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
  touch();
}

MlpExtractor MlpExtractor::initialized(std::vector<std::size_t> sizes, SeededRng& rng) {
  MlpExtractor net(std::move(sizes));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double fan_in = static_cast<double>(net.sizes_[l]);
    const double bound = std::sqrt(6.0 / fan_in);
    const std::size_t n = net.sizes_[l + 1] * net.sizes_[l];
    for (std::size_t k = 0; k < n; ++k) net.params_[net.weight_offset(l) + k] = rng.uniform(-bound, bound);
  }
  net.touch();
  return net;
}

void MlpExtractor::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) throw InvalidArgument("set_parameters: length mismatch");
  std::ranges::copy(values, params_.begin());
  touch();
}

Matrix MlpExtractor::weight(std::size_t layer) const {
  const std::size_t out = sizes_.at(layer + 1), in = sizes_.at(layer);
  const auto first = params_.begin() + static_cast<std::ptrdiff_t>(weight_offset(layer));
  return Matrix(out, in, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(out * in)));
}

std::vector<double> MlpExtractor::bias(std::size_t layer) const {
  const auto first = params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(layer));
  return {first, first + static_cast<std::ptrdiff_t>(sizes_.at(layer + 1))};
}

void MlpExtractor::set_weight(std::size_t layer, const Matrix& w) {
  if (w.rows() != sizes_.at(layer + 1) || w.cols() != sizes_.at(layer))
    throw InvalidArgument("set_weight: shape mismatch for layer " + std::to_string(layer));
  std::ranges::copy(w.values(), params_.begin() + static_cast<std::ptrdiff_t>(weight_offset(layer)));
  touch();
}

void MlpExtractor::set_bias(std::size_t layer, std::span<const double> b) {
  if (b.size() != sizes_.at(layer + 1)) throw InvalidArgument("set_bias: length mismatch");
  std::ranges::copy(b, params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(layer)));
  touch();
}

Matrix MlpExtractor::forward(const Matrix& inputs) const {
  ForwardCache scratch;
  return forward(inputs, scratch);
}

Matrix MlpExtractor::forward(const Matrix& inputs, ForwardCache& cache) const {
  if (inputs.cols() != input_dim()) {
    throw InvalidArgument("MlpExtractor::forward: input width " + std::to_string(inputs.cols()) +
                          " != " + std::to_string(input_dim()));
  }
  cache = ForwardCache{};
  cache.stamp = stamp_;
  Matrix act = inputs;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    Matrix pre(act.rows(), out);
    parallel_for(
        act.rows(),
        [&](std::size_t i) {
          const auto x = act.row(i);
          auto y = pre.row(i);
          for (std::size_t o = 0; o < out; ++o) {
            double s = b[o];
            const double* wr = w + o * in;
            for (std::size_t k = 0; k < in; ++k) s += wr[k] * x[k];
            y[o] = s;
          }
        },
        256);
    const bool last = l + 1 == num_layers();
    Matrix next = pre;
    if (!last)
      for (double& v : next.values()) v = v > 0.0 ? v : kLeakySlope * v;
    cache.inputs.push_back(std::move(act));
    cache.pre.push_back(std::move(pre));
    act = std::move(next);
  }
  return act;
}

std::vector<double> MlpExtractor::backward(const ForwardCache& cache, const Matrix& grad_output) const {
  if (cache.stamp != stamp_ || cache.inputs.size() != num_layers())
    throw InvalidState("MlpExtractor::backward: cache does not match current parameters");
  const std::size_t batch = cache.inputs.front().rows();
  if (grad_output.rows() != batch || grad_output.cols() != output_dim())
    throw InvalidArgument("MlpExtractor::backward: grad_output shape mismatch");

  std::vector<double> grads(params_.size(), 0.0);
  Matrix delta = grad_output;  // dL/d(layer output)
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    if (l + 1 != num_layers()) {
      const Matrix& pre = cache.pre[l];
      auto d = delta.values();
      auto z = pre.values();
      for (std::size_t k = 0; k < d.size(); ++k)
        if (!(z[k] > 0.0)) d[k] *= kLeakySlope;
    }
    const Matrix& x = cache.inputs[l];
    double* gw = grads.data() + weight_offset(l);
    double* gb = grads.data() + bias_offset(l);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto di = delta.row(i);
      const auto xi = x.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += di[o];
        double* row = gw + o * in;
        for (std::size_t k = 0; k < in; ++k) row[k] += di[o] * xi[k];
      }
    }
    if (l == 0) break;
    const double* w = params_.data() + weight_offset(l);
    Matrix prev(batch, in);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto di = delta.row(i);
      auto pi = prev.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = w + o * in;
        for (std::size_t k = 0; k < in; ++k) pi[k] += di[o] * wr[k];
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

}  // namespace protoalign
