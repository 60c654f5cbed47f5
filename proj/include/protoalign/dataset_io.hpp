#pragma once

#include <string>

#include "protoalign/bench.hpp"

namespace protoalign {

// CSV layout: header `split,label,x0,...,x{D-1}`, one sample per row, reals
// with 17 significant digits.
std::string dataset_to_csv(const LabeledDataset& data);
LabeledDataset dataset_from_csv(const std::string& text);

void write_dataset(const LabeledDataset& data, const std::string& path);
LabeledDataset read_dataset(const std::string& path);

}  // namespace protoalign
