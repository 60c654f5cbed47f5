#include "protoalign/pfa_loss.hpp"

#include <cmath>
#include <string>

#include "protoalign/error.hpp"

namespace protoalign {

namespace {

void check_inputs(const Matrix& features, const PrototypeSet& protos, const char* who) {
  if (features.rows() == 0) throw DegenerateInput(std::string(who) + ": empty batch");
  if (features.cols() != protos.dim())
    throw InvalidArgument(std::string(who) + ": feature dim does not match prototypes");
}

}  // namespace

Matrix similarity_grad_to_features(const Matrix& features, const Matrix& sim_grad,
                                   const Matrix& prototypes) {
  // a_i = sum_c g_ic mu_c ; df_i = (a_i - <a_i, u_i> u_i) / |f_i|
  Matrix grad = matmul(sim_grad, prototypes);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto f = features.row(i);
    const double n = norm(f);
    if (!(n > 0.0)) throw DegenerateInput("zero feature row " + std::to_string(i));
    auto a = grad.row(i);
    const double radial = dot(a, f) / (n * n);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = (a[k] - radial * f[k]) / n;
  }
  return grad;
}

LossResult t2p_loss(const Matrix& features, const PrototypeSet& protos) {
  check_inputs(features, protos, "t2p_loss");
  const std::size_t batch = features.rows();
  const std::size_t classes = protos.num_classes();
  const double tau = protos.temperature();
  const Matrix sims = matmul_bt(normalize_rows(features), protos.weights());
  const Matrix pi = transport_conditional(features, protos).probs;

  const double inv_b = 1.0 / static_cast<double>(batch);
  Matrix sim_grad(batch, classes);
  double value = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double expected = 0.0;
    for (std::size_t c = 0; c < classes; ++c) expected += (1.0 - sims(i, c)) * pi(i, c);
    value += expected;
    // dE_i/ds_ic = -pi_ic + pi_ic (d_ic - E_i) / tau
    for (std::size_t c = 0; c < classes; ++c) {
      const double d = 1.0 - sims(i, c);
      sim_grad(i, c) = inv_b * pi(i, c) * (-1.0 + (d - expected) / tau);
    }
  }
  return {value * inv_b, similarity_grad_to_features(features, sim_grad, protos.weights())};
}

LossResult p2t_loss(const Matrix& features, const PrototypeSet& protos) {
  check_inputs(features, protos, "p2t_loss");
  const std::size_t batch = features.rows();
  const std::size_t classes = protos.num_classes();
  const double tau = protos.temperature();
  const Matrix sims = matmul_bt(normalize_rows(features), protos.weights());
  const auto& prior = protos.prior();

  Matrix sim_grad(batch, classes);
  double value = 0.0;
  std::vector<double> column(batch);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < batch; ++i) column[i] = sims(i, c);
    const std::vector<double> w = softmax(column, tau);
    double expected = 0.0;
    for (std::size_t i = 0; i < batch; ++i) expected += (1.0 - sims(i, c)) * w[i];
    value += prior[c] * expected;
    for (std::size_t i = 0; i < batch; ++i) {
      const double d = 1.0 - sims(i, c);
      sim_grad(i, c) = prior[c] * w[i] * (-1.0 + (d - expected) / tau);
    }
  }
  return {value, similarity_grad_to_features(features, sim_grad, protos.weights())};
}

LossResult pfa_loss(const Matrix& features, const PrototypeSet& protos) {
  LossResult t2p = t2p_loss(features, protos);
  const LossResult p2t = p2t_loss(features, protos);
  t2p.value += p2t.value;
  auto g = t2p.grad_features.values();
  auto h = p2t.grad_features.values();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += h[k];
  return t2p;
}

}  // namespace protoalign
