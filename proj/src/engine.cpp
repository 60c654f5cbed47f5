#include "protoalign/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "protoalign/adam.hpp"
#include "protoalign/contrastive.hpp"
#include "protoalign/error.hpp"
#include "protoalign/pfa_loss.hpp"

namespace protoalign {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer
  std::uint64_t z = seed + tag * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kPfaSampler = 1;
constexpr std::uint64_t kClSampler = 2;
constexpr std::uint64_t kClMining = 3;

void add_into(Matrix& acc, const Matrix& g) {
  auto a = acc.values();
  auto b = g.values();
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

AlignmentObjective parse_objective(const std::string& name) {
  if (name == "full") return AlignmentObjective::Full;
  if (name == "t2p") return AlignmentObjective::TargetToPrototype;
  if (name == "p2t") return AlignmentObjective::PrototypeToTarget;
  throw InvalidArgument("unknown alignment objective '" + name + "' (full|t2p|p2t)");
}

std::string to_string(AlignmentObjective objective) {
  switch (objective) {
    case AlignmentObjective::Full: return "full";
    case AlignmentObjective::TargetToPrototype: return "t2p";
    case AlignmentObjective::PrototypeToTarget: return "p2t";
  }
  return "full";
}

Stages parse_stages(const std::string& name) {
  if (name == "both") return Stages::Both;
  if (name == "pfa") return Stages::AlignOnly;
  if (name == "cl") return Stages::ContrastOnly;
  throw InvalidArgument("unknown stage '" + name + "' (pfa|cl|both)");
}

std::vector<double> AdaptationConfig::alpha_for(std::size_t classes) const {
  if (alpha.size() == 1) return std::vector<double>(classes, alpha.front());
  if (alpha.size() != classes) throw InvalidArgument("alpha: need one value or one per class");
  return alpha;
}

void AdaptationConfig::validate(std::size_t classes) const {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be non-negative");
  for (double a : alpha_for(classes))
    if (!(a > 0.0 && a <= 100.0)) throw InvalidArgument("alpha must lie in (0, 100]");
  if (queries_per_class == 0 || negatives_per_query == 0)
    throw InvalidArgument("queries_per_class and negatives_per_query must be positive");
  if (classes >= 2 && (low_rank < 2 || static_cast<std::size_t>(low_rank) > classes))
    throw InvalidArgument("low_rank must lie in [2, C]");
  if (!(em_momentum >= 0.0 && em_momentum < 1.0)) throw InvalidArgument("em_momentum must lie in [0, 1)");
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), order_(n), cursor_(n), rng_(seed) {
  if (n == 0) throw InvalidArgument("BatchSampler: empty dataset");
  if (batch_size == 0) throw InvalidArgument("BatchSampler: zero batch size");
  std::iota(order_.begin(), order_.end(), 0);
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) {
      rng_.shuffle(std::span<std::size_t>(order_));
      cursor_ = 0;
    }
    // A batch never repeats a sample, even across a reshuffle.
    if (batch_size_ <= order_.size() &&
        std::find(batch.begin(), batch.end(), order_[cursor_]) != batch.end()) {
      ++cursor_;
      continue;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

std::pair<Model, TrainReport> run_pfa_stage(const Model& source, const Matrix& target_inputs,
                                            const AdaptationConfig& config) {
  if (target_inputs.rows() == 0) throw InvalidArgument("run_pfa_stage: empty target set");
  const std::size_t classes = source.classifier.num_classes();
  config.validate(classes);
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.stage = "pfa";
  MlpExtractor net = source.extractor;
  std::vector<double> prior(classes, 1.0 / static_cast<double>(classes));
  PrototypeSet protos(source.classifier.weights(), prior, config.temperature);

  if (config.pfa_iters > 0) {
    BatchSampler sampler(target_inputs.rows(), config.batch_size, mix_seed(config.seed, kPfaSampler));
    AdamState adam = AdamState::for_parameters(net.parameter_count(), config.lr, config.weight_decay);
    std::vector<double> params(net.parameters().begin(), net.parameters().end());
    for (std::size_t it = 0; it < config.pfa_iters; ++it) {
      const auto idx = sampler.next();
      const Matrix x = target_inputs.gather_rows(idx);
      ForwardCache cache;
      const Matrix feats = net.forward(x, cache);

      protos = protos.with_prior(em_prior_update(feats, protos, config.em_momentum));

      Matrix grad(feats.rows(), feats.cols());
      const LossResult t2p = t2p_loss(feats, protos);
      const LossResult p2t = p2t_loss(feats, protos);
      if (config.objective != AlignmentObjective::PrototypeToTarget) add_into(grad, t2p.grad_features);
      if (config.objective != AlignmentObjective::TargetToPrototype) add_into(grad, p2t.grad_features);

      report.t2p.push_back(t2p.value);
      report.p2t.push_back(p2t.value);
      report.pfa.push_back(t2p.value + p2t.value);
      report.prior.push_back(protos.prior());

      const auto g = net.backward(cache, grad);
      adam_step(adam, params, g);
      net.set_parameters(params);
    }
  }
  report.elapsed_seconds = seconds_since(start);
  return {Model{std::move(net), protos}, std::move(report)};
}

std::pair<Model, TrainReport> run_cl_stage(const Model& live, const Model& snapshot,
                                           const Matrix& target_inputs,
                                           const AdaptationConfig& config) {
  if (target_inputs.rows() == 0) throw InvalidArgument("run_cl_stage: empty target set");
  const std::size_t classes = snapshot.classifier.num_classes();
  config.validate(classes);
  if (classes < 2) throw InvalidArgument("run_cl_stage: need at least two classes");
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.stage = "cl";
  MlpExtractor net = live.extractor;
  const PrototypeSet protos(snapshot.classifier.weights(), snapshot.classifier.prior(),
                            config.temperature);
  const auto alpha = config.alpha_for(classes);

  if (config.cl_iters > 0) {
    BatchSampler sampler(target_inputs.rows(), config.batch_size, mix_seed(config.seed, kClSampler));
    SeededRng mining(mix_seed(config.seed, kClMining));
    AdamState adam = AdamState::for_parameters(net.parameter_count(), config.lr, config.weight_decay);
    std::vector<double> params(net.parameters().begin(), net.parameters().end());
    for (std::size_t it = 0; it < config.cl_iters; ++it) {
      const auto idx = sampler.next();
      const Matrix x = target_inputs.gather_rows(idx);

      const Matrix snap_feats = snapshot.extractor.forward(x);
      const auto pred = PredictionBatch::from_probs(class_probabilities(snap_feats, protos));
      const auto part = partition_batch(pred, alpha, config.low_rank, config.negatives_threshold_mode);

      ForwardCache cache;
      const Matrix feats = net.forward(x, cache);
      const ContrastiveBatch cb = sample_contrastive_batch(
          part, feats, snap_feats, protos, config.queries_per_class, config.negatives_per_query, mining);
      if (cb.empty()) {
        report.cl.push_back(0.0);
        report.cl_active.push_back(false);
        ++report.noop_iterations;
        continue;
      }
      LossResult loss = cl_loss(cb, config.temperature);
      report.cl.push_back(loss.value);
      report.cl_active.push_back(true);
      if (config.cl_keep_pfa_loss) add_into(loss.grad_features, pfa_loss(feats, protos).grad_features);

      const auto g = net.backward(cache, loss.grad_features);
      adam_step(adam, params, g);
      net.set_parameters(params);
    }
    if (report.noop_iterations == config.cl_iters)
      report.warnings.push_back("every contrastive iteration was a no-op (no reliable/unreliable split)");
  }
  report.elapsed_seconds = seconds_since(start);
  return {Model{std::move(net), protos}, std::move(report)};
}

AdaptResult adapt(const Model& source, const Matrix& target_inputs, const AdaptationConfig& config,
                  Stages stages) {
  if (stages == Stages::ContrastOnly) {
    const Model snapshot{source.extractor,
                         PrototypeSet(source.classifier.weights(), source.classifier.prior(),
                                      config.temperature)};
    auto [model, cl] = run_cl_stage(snapshot, snapshot, target_inputs, config);
    TrainReport pfa;
    pfa.stage = "pfa";
    return {std::move(model), std::move(pfa), std::move(cl)};
  }
  auto [aligned, pfa] = run_pfa_stage(source, target_inputs, config);
  if (stages == Stages::AlignOnly) {
    TrainReport cl;
    cl.stage = "cl";
    return {std::move(aligned), std::move(pfa), std::move(cl)};
  }
  auto [model, cl] = run_cl_stage(aligned, aligned, target_inputs, config);
  return {std::move(model), std::move(pfa), std::move(cl)};
}

}  // namespace protoalign
