#pragma once

#include <string>

#include "protoalign/extractor.hpp"
#include "protoalign/prototypes.hpp"

namespace protoalign {

/// Feature extractor plus frozen prototype classifier.
struct Model {
  MlpExtractor extractor;
  PrototypeSet classifier;

  Matrix features(const Matrix& inputs) const { return extractor.forward(inputs); }
  Matrix probabilities(const Matrix& inputs) const;
  std::vector<std::size_t> predict(const Matrix& inputs) const;
};

// Text checkpoint:
//
//   protoalign-ckpt v1
//   layers 8 64 64 16
//   temperature 0.10000000000000001
//   layer0.weight 64x8 v v v ...
//   layer0.bias 64 v v ...
//   ...
//   classifier.weights 4x16 v v ...
//   classifier.prior 4 v v v v
//
// Reals carry 17 significant digits, so save/load is lossless.
std::string serialize_checkpoint(const Model& model);
Model parse_checkpoint(const std::string& text);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace protoalign
