#include "protoalign/adam.hpp"

#include <cmath>

#include "protoalign/error.hpp"

namespace protoalign {

AdamState AdamState::for_parameters(std::size_t n, double lr, double weight_decay) {
  AdamState s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: params/grads length mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidArgument("adam_step: moment shape does not match params");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    params[i] -= state.lr * state.weight_decay * params[i];
  }
}

}  // namespace protoalign
