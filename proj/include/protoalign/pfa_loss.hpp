#pragma once

#include "protoalign/linalg.hpp"
#include "protoalign/prototypes.hpp"

namespace protoalign {

/// Loss value and its gradient with respect to the raw (un-normalized)
/// feature rows that were passed in.
struct LossResult {
  double value = 0.0;
  Matrix grad_features;
};

/// Target-to-prototype expected transport cost:
///   (1/B) sum_i sum_c d(mu_c, f_i) pi(mu_c | f_i).
/// The gradient runs through both the cosine distance and the transport
/// probabilities; the prior is a constant.
LossResult t2p_loss(const Matrix& features, const PrototypeSet& protos);

/// Prototype-to-target expected transport cost:
///   sum_c prior_c sum_i d(mu_c, f_i) w_ci,
/// where w_c. is a softmax over the samples of this batch of <mu_c, f_i>/tau.
LossResult p2t_loss(const Matrix& features, const PrototypeSet& protos);

/// t2p_loss + p2t_loss, unweighted.
LossResult pfa_loss(const Matrix& features, const PrototypeSet& protos);

/// Back-propagates dL/d(cosine similarity) through row normalization:
/// returns dL/df for f_i with unit direction u_i and norm n_i, given
/// sim_grad(i, c) = dL/d<u_i, mu_c>.
Matrix similarity_grad_to_features(const Matrix& features, const Matrix& sim_grad,
                                   const Matrix& prototypes);

}  // namespace protoalign
