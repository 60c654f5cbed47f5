#include "protoalign/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "protoalign/adam.hpp"
#include "protoalign/error.hpp"
#include "protoalign/parallel.hpp"
#include "protoalign/pfa_loss.hpp"
#include "protoalign/uncertainty.hpp"

namespace protoalign {

namespace {

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed ^ (tag * 0xD1B54A32D192ED03ULL);
  z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
  z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
  return z ^ (z >> 33);
}

void check_simplex(std::span<const double> p, std::size_t classes, const char* what) {
  if (p.size() != classes) throw InvalidArgument(std::string(what) + ": length != num_classes");
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw InvalidArgument(std::string(what) + ": negative entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument(std::string(what) + ": does not sum to 1");
}

std::vector<double> random_unit(SeededRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return l2_normalize(v);
}

// Unit vector orthogonal to every vector in `basis` (assumed orthonormal).
std::vector<double> random_orthogonal_unit(SeededRng& rng, std::size_t dim,
                                           const std::vector<std::vector<double>>& basis) {
  for (;;) {
    auto v = random_unit(rng, dim);
    for (const auto& e : basis) {
      const double p = dot(v, e);
      for (std::size_t d = 0; d < dim; ++d) v[d] -= p * e[d];
    }
    if (norm(v) > 1e-6) return l2_normalize(v);
  }
}

LabeledDataset draw_split(const std::string& name, const Matrix& means, double std_dev,
                          std::span<const double> proportions, std::size_t n, std::uint64_t seed,
                          const Matrix* rotation, double scale, std::span<const double> shift) {
  SeededRng rng(seed);
  const auto counts = class_counts(proportions, n);
  LabeledDataset out;
  out.split = name;
  for (std::size_t c = 0; c < counts.size(); ++c) out.labels.insert(out.labels.end(), counts[c], c);
  rng.shuffle(std::span<std::size_t>(out.labels));

  const std::size_t dim = means.cols();
  out.inputs = Matrix(n, dim);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mu = means.row(out.labels[i]);
    for (std::size_t d = 0; d < dim; ++d) x[d] = mu[d] + std_dev * rng.normal();
    auto row = out.inputs.row(i);
    if (rotation == nullptr) {
      std::ranges::copy(x, row.begin());
    } else {
      for (std::size_t r = 0; r < dim; ++r) row[r] = scale * dot(rotation->row(r), x) + shift[r];
    }
  }
  return out;
}

}  // namespace

void DomainShiftSpec::validate() const {
  if (num_classes < 2) throw InvalidArgument("num_classes must be at least 2");
  if (input_dim < 2) throw InvalidArgument("input_dim must be at least 2");
  if (!(class_std > 0.0)) throw InvalidArgument("class_std must be positive");
  if (!(separation > 0.0)) throw InvalidArgument("separation must be positive");
  if (input_dim < num_classes + (num_classes == 2 ? 2 : 1))
    throw InvalidArgument("input_dim too small: need num_classes + 1 (num_classes + 2 for two classes)");
  if (!(center_norm >= 0.0)) throw InvalidArgument("center_norm must be non-negative");
  if (!(scale > 0.0)) throw InvalidArgument("scale must be positive");
  if (!(shift_norm >= 0.0)) throw InvalidArgument("shift_norm must be non-negative");
  check_simplex(source_proportions, num_classes, "source_proportions");
  check_simplex(target_proportions, num_classes, "target_proportions");
  auto reachable = [](std::span<const double> p, std::size_t n) {
    if (n == 0) return true;
    for (double x : p)
      if (x > 0.0 && x * static_cast<double>(n) < 0.5) return false;
    return true;
  };
  if (!reachable(source_proportions, n_source_train) || !reachable(target_proportions, n_target_train))
    throw InvalidArgument("a class with nonzero proportion would receive no samples");
}

std::vector<std::size_t> class_counts(std::span<const double> proportions, std::size_t n) {
  std::vector<std::size_t> counts(proportions.size());
  std::vector<double> remainder(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < proportions.size(); ++c) {
    const double exact = proportions[c] * static_cast<double>(n);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  std::vector<std::size_t> order(proportions.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

DomainSplits generate_domains(const DomainShiftSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  const std::size_t classes = spec.num_classes, dim = spec.input_dim;

  // Orthonormal frame: one axis per class plus the centre direction.
  std::vector<std::vector<double>> frame;
  for (std::size_t c = 0; c <= classes; ++c) frame.push_back(random_orthogonal_unit(rng, dim, frame));
  const auto& center_dir = frame.back();
  const std::vector<std::vector<double>> class_axes(frame.begin(), frame.end() - 1);

  // Regular simplex with every mean `separation` away from the centroid.
  const double inv_c = 1.0 / static_cast<double>(classes);
  const double edge = spec.separation / std::sqrt(1.0 - inv_c);
  DomainSplits out;
  out.class_means = Matrix(classes, dim);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t d = 0; d < dim; ++d) {
      double x = spec.center_norm * center_dir[d];
      for (std::size_t j = 0; j < classes; ++j) x += edge * ((j == c ? 1.0 : 0.0) - inv_c) * class_axes[j][d];
      out.class_means(c, d) = x;
    }

  // Random unit direction among the class-mean differences, orthogonal to
  // everything in `avoid`.
  auto class_direction = [&](const std::vector<double>* avoid) {
    for (;;) {
      std::vector<double> v(dim, 0.0);
      std::vector<double> coef(classes);
      for (double& c : coef) c = rng.normal();
      const double mean = std::accumulate(coef.begin(), coef.end(), 0.0) * inv_c;
      for (std::size_t j = 0; j < classes; ++j)
        for (std::size_t d = 0; d < dim; ++d) v[d] += (coef[j] - mean) * class_axes[j][d];
      if (avoid != nullptr) {
        const double p = dot(v, *avoid);
        for (std::size_t d = 0; d < dim; ++d) v[d] -= p * (*avoid)[d];
      }
      if (norm(v) > 1e-6) return l2_normalize(v);
    }
  };

  // Q turns the plane of the centre direction and a class direction w, so
  // the rotation moves the clusters across each other's decision regions
  // instead of along directions the source data never varies in.
  const auto& u = center_dir;
  const auto w = class_direction(nullptr);
  const double cs = std::cos(spec.rotation_angle), sn = std::sin(spec.rotation_angle);
  out.rotation = Matrix(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c)
      out.rotation(r, c) = (r == c ? 1.0 : 0.0) + (cs - 1.0) * (u[r] * u[c] + w[r] * w[c]) +
                           sn * (w[r] * u[c] - u[r] * w[c]);

  // The shift is another class direction, orthogonal to w. Two classes have
  // only one such direction, so there it leaves the class subspace.
  if (classes > 2) {
    out.shift = class_direction(&w);
  } else {
    auto avoid = frame;
    avoid.push_back(w);
    out.shift = random_orthogonal_unit(rng, dim, avoid);
  }
  for (double& x : out.shift) x *= spec.shift_norm;

  out.source_train = draw_split("source_train", out.class_means, spec.class_std, spec.source_proportions,
                                spec.n_source_train, split_seed(spec.seed, 1), nullptr, 1.0, {});
  out.source_eval = draw_split("source_eval", out.class_means, spec.class_std, spec.source_proportions,
                               spec.n_source_eval, split_seed(spec.seed, 2), nullptr, 1.0, {});
  out.target_train = draw_split("target_train", out.class_means, spec.class_std, spec.target_proportions,
                                spec.n_target_train, split_seed(spec.seed, 3), &out.rotation, spec.scale,
                                out.shift);
  out.target_eval = draw_split("target_eval", out.class_means, spec.class_std, spec.target_proportions,
                               spec.n_target_eval, split_seed(spec.seed, 4), &out.rotation, spec.scale,
                               out.shift);
  return out;
}

PretrainResult pretrain_source(const LabeledDataset& source, const PretrainConfig& config) {
  if (source.size() == 0) throw InvalidArgument("pretrain_source: empty dataset");
  if (config.batch_size == 0) throw InvalidArgument("pretrain_source: zero batch size");
  const std::size_t classes = *std::ranges::max_element(source.labels) + 1;
  SeededRng rng(config.seed);

  std::vector<std::size_t> sizes{source.inputs.cols()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.feature_dim);
  MlpExtractor net = MlpExtractor::initialized(sizes, rng);
  Matrix head(classes, config.feature_dim);
  for (double& x : head.values()) x = rng.normal();

  const std::size_t n_net = net.parameter_count();
  std::vector<double> params(net.parameters().begin(), net.parameters().end());
  params.insert(params.end(), head.values().begin(), head.values().end());
  AdamState adam = AdamState::for_parameters(params.size(), config.lr, 0.0);
  const double tau = config.temperature;

  PretrainResult result{Model{net, PrototypeSet::with_uniform_prior(head, tau)}, 0.0, {}, true};
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const Matrix x = source.inputs.gather_rows(idx);
      ForwardCache cache;
      const Matrix feats = net.forward(x, cache);
      const Matrix unit_feats = normalize_rows(feats);
      const Matrix unit_head = normalize_rows(head);
      const Matrix sims = matmul_bt(unit_feats, unit_head);

      // Cross-entropy on sims / tau; sim_grad = (p - y) / (B tau).
      const double inv = 1.0 / static_cast<double>(idx.size());
      Matrix sim_grad(idx.size(), classes);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto p = softmax(sims.row(i), tau);
        const std::size_t y = source.labels[idx[i]];
        epoch_loss -= std::log(std::max(p[y], 1e-300));
        for (std::size_t c = 0; c < classes; ++c)
          sim_grad(i, c) = (p[c] - (c == y ? 1.0 : 0.0)) * inv / tau;
      }
      const Matrix grad_feats = similarity_grad_to_features(feats, sim_grad, unit_head);
      // Classifier rows: same chain rule with the roles swapped.
      Matrix sim_grad_t(classes, idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < classes; ++c) sim_grad_t(c, i) = sim_grad(i, c);
      const Matrix grad_head = similarity_grad_to_features(head, sim_grad_t, unit_feats);

      std::vector<double> grads = net.backward(cache, grad_feats);
      grads.insert(grads.end(), grad_head.values().begin(), grad_head.values().end());
      adam_step(adam, params, grads);
      net.set_parameters(std::span<const double>(params.data(), n_net));
      std::copy(params.begin() + static_cast<std::ptrdiff_t>(n_net), params.end(), head.values().begin());
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(source.size()));
  }

  result.model = Model{std::move(net), PrototypeSet::with_uniform_prior(head, tau)};
  const auto pred = result.model.predict(source.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == source.labels[i] ? 1 : 0;
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  result.converged = result.train_accuracy >= 0.9;
  return result;
}

MetricsReport metrics_from_predictions(std::span<const std::size_t> truth,
                                       std::span<const std::size_t> predicted,
                                       std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw InvalidArgument("metrics: length mismatch");
  if (truth.empty()) throw DegenerateInput("metrics: empty dataset");
  MetricsReport r;
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  r.prediction_histogram.assign(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t y = truth[i], p = predicted[i];
    if (y >= num_classes || p >= num_classes) throw InvalidArgument("metrics: label out of range");
    ++r.prediction_histogram[p];
    if (y == p) {
      ++tp[y];
      ++correct;
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  r.recall.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  r.dice.assign(num_classes, std::nullopt);
  double dice_sum = 0.0, recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) r.dice[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    if (tp[c] + fn[c] > 0) {
      r.recall[c] = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
      dice_sum += *r.dice[c];
      recall_sum += r.recall[c];
      ++present;
    }
  }
  r.macro_dice = dice_sum / static_cast<double>(present);
  r.macro_recall = recall_sum / static_cast<double>(present);
  return r;
}

MetricsReport evaluate(const Model& model, const LabeledDataset& data) {
  const Matrix feats = model.features(data.inputs);
  const Matrix probs = class_probabilities(feats, model.classifier);
  std::vector<std::size_t> pred(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) pred[i] = argmax(probs.row(i));
  MetricsReport r = metrics_from_predictions(data.labels, pred, model.classifier.num_classes());

  const Matrix unit = normalize_rows(feats);
  double cos_sum = 0.0, ent_sum = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    cos_sum += dot(unit.row(i), model.classifier.prototype(pred[i]));
    ent_sum += entropy(probs.row(i));
  }
  r.compactness = cos_sum / static_cast<double>(probs.rows());
  r.mean_entropy = ent_sum / static_cast<double>(probs.rows());
  return r;
}

double reliable_compactness(const Model& live, const Model& snapshot, const Matrix& inputs,
                            std::span<const double> alpha) {
  const auto pred = PredictionBatch::from_probs(snapshot.probabilities(inputs));
  const auto gamma = class_thresholds(pred, alpha);
  const auto queries = select_queries(pred, gamma);
  const Matrix unit = normalize_rows(live.features(inputs));
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < queries.size(); ++c)
    for (std::size_t i : queries[c]) {
      sum += dot(unit.row(i), live.classifier.prototype(c));
      ++n;
    }
  if (n == 0) throw DegenerateInput("reliable_compactness: no reliable samples");
  return sum / static_cast<double>(n);
}

std::size_t Mask2D::count() const {
  return static_cast<std::size_t>(std::ranges::count_if(cells, [](std::uint8_t v) { return v != 0; }));
}

double dice(const Mask2D& a, const Mask2D& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw InvalidArgument("dice: mask shapes differ");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    const bool x = a.cells[k] != 0, y = b.cells[k] != 0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<std::pair<std::size_t, std::size_t>> mask_boundary(const Mask2D& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (!m.at(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == m.rows || c + 1 == m.cols;
      if (edge || !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1))
        out.emplace_back(r, c);
    }
  return out;
}

double assd_2d(const Mask2D& a, const Mask2D& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw InvalidArgument("assd_2d: mask shapes differ");
  const auto ba = mask_boundary(a);
  const auto bb = mask_boundary(b);
  if (ba.empty() || bb.empty()) throw UndefinedMetric("assd_2d: empty mask");

  auto mean_nearest = [](const auto& from, const auto& to) {
    std::vector<double> nearest(from.size());
    parallel_for(
        from.size(),
        [&](std::size_t i) {
          double best = std::numeric_limits<double>::infinity();
          for (const auto& [r, c] : to) {
            const double dr = static_cast<double>(from[i].first) - static_cast<double>(r);
            const double dc = static_cast<double>(from[i].second) - static_cast<double>(c);
            best = std::min(best, dr * dr + dc * dc);
          }
          nearest[i] = std::sqrt(best);
        },
        512);
    double sum = 0.0;
    for (double d : nearest) sum += d;
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (mean_nearest(ba, bb) + mean_nearest(bb, ba));
}

}  // namespace protoalign
