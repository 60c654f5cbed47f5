#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "protoalign/linalg.hpp"
#include "protoalign/model.hpp"

namespace protoalign {

/// Gaussian class clusters in input space, plus the affine map that turns
/// source-like draws into the target domain: x_t = scale * Q x + shift,
/// with Q a rotation by `rotation_angle` and |shift| = `shift_norm`.
///
/// The class means form a regular simplex whose vertices lie `separation`
/// from their centroid (pairwise distance separation * sqrt(2C / (C - 1))),
/// and the centroid sits `center_norm` from the origin. Q turns the plane
/// spanned by the centroid direction and a random direction among the
/// class-mean differences; the shift is a second such direction,
/// orthogonal to the first.
struct DomainShiftSpec {
  std::size_t num_classes = 4;
  std::size_t input_dim = 8;
  double class_std = 0.3;
  double separation = 1.2;  // distance of each class mean from their centroid
  double center_norm = 1.5;
  std::vector<double> source_proportions = {0.25, 0.25, 0.25, 0.25};
  std::vector<double> target_proportions = {0.25, 0.25, 0.25, 0.25};
  double rotation_angle = 0.5235987755982988;  // pi / 6
  double scale = 1.3;
  double shift_norm = 1.0;
  std::size_t n_source_train = 2000;
  std::size_t n_source_eval = 1000;
  std::size_t n_target_train = 2000;
  std::size_t n_target_eval = 1000;
  std::uint64_t seed = 7;

  void validate() const;
};

struct LabeledDataset {
  std::string split;  // "source_train", "target_eval", ...
  Matrix inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct DomainSplits {
  LabeledDataset source_train;
  LabeledDataset source_eval;
  LabeledDataset target_train;
  LabeledDataset target_eval;
  Matrix class_means;
  Matrix rotation;
  std::vector<double> shift;
};

/// Largest-remainder rounding of proportions * n; every count is within 1
/// of the exact product.
std::vector<std::size_t> class_counts(std::span<const double> proportions, std::size_t n);

DomainSplits generate_domains(const DomainShiftSpec& spec);

struct PretrainConfig {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 16;
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  double temperature = 0.1;
  std::uint64_t seed = 11;
};

struct PretrainResult {
  Model model;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
  bool converged = true;  // false when train accuracy < 90%
};

/// Supervised cross-entropy training of extractor and cosine classifier on
/// labeled source data. The returned prototypes are the l2-normalized
/// classifier rows; the prior is uniform.
PretrainResult pretrain_source(const LabeledDataset& source, const PretrainConfig& config);

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<double> recall;                // per class; NaN when class absent from truth
  std::vector<std::optional<double>> dice;   // nullopt when absent from truth and prediction
  double macro_dice = 0.0;                   // over classes present in the truth
  double macro_recall = 0.0;
  double compactness = 0.0;                  // mean cos(f_i, mu_pred(i))
  std::vector<std::size_t> prediction_histogram;
  double mean_entropy = 0.0;
};

MetricsReport metrics_from_predictions(std::span<const std::size_t> truth,
                                       std::span<const std::size_t> predicted,
                                       std::size_t num_classes);
MetricsReport evaluate(const Model& model, const LabeledDataset& data);

/// Mean cosine similarity between `live` features and the prototype of their
/// snapshot pseudo-label, over the reliable samples of the snapshot (the
/// query sets of a partition over the whole input set).
double reliable_compactness(const Model& live, const Model& snapshot, const Matrix& inputs,
                            std::span<const double> alpha);

/// Binary 2D mask, row-major.
struct Mask2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  Mask2D() = default;
  Mask2D(std::size_t r, std::size_t c) : rows(r), cols(c), cells(r * c, 0) {}
  bool at(std::size_t r, std::size_t c) const { return cells[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { cells[r * cols + c] = v ? 1 : 0; }
  std::size_t count() const;
};

/// 2|A n B| / (|A| + |B|); two empty masks score 1.
double dice(const Mask2D& a, const Mask2D& b);

/// Foreground cells with at least one background 4-neighbour; cells
/// outside the array count as background.
std::vector<std::pair<std::size_t, std::size_t>> mask_boundary(const Mask2D& m);

/// Average symmetric surface distance in pixels, brute force over all
/// boundary pairs.
double assd_2d(const Mask2D& a, const Mask2D& b);

}  // namespace protoalign
