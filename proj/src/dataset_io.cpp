#include "protoalign/dataset_io.hpp"

#include <sstream>

#include "protoalign/error.hpp"
#include "protoalign/io.hpp"

namespace protoalign {

std::string dataset_to_csv(const LabeledDataset& data) {
  std::string out = "split,label";
  for (std::size_t d = 0; d < data.inputs.cols(); ++d) out += ",x" + std::to_string(d);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += data.split;
    out += ',';
    out += std::to_string(data.labels[i]);
    for (double x : data.inputs.row(i)) {
      out += ',';
      out += format_real(x);
    }
    out += '\n';
  }
  return out;
}

LabeledDataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset csv: empty file");
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || header[0] != "split" || header[1] != "label")
    throw FormatError("dataset csv: header must start with 'split,label,x0'");
  const std::size_t dim = header.size() - 2;
  for (std::size_t d = 0; d < dim; ++d)
    if (header[d + 2] != "x" + std::to_string(d)) throw FormatError("dataset csv: bad column " + header[d + 2]);

  LabeledDataset data;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != dim + 2)
      throw FormatError("dataset csv: line " + std::to_string(line_no) + " has wrong field count");
    if (data.labels.empty()) data.split = fields[0];
    else if (fields[0] != data.split) throw FormatError("dataset csv: mixed split tags");
    const long long label = parse_integer(fields[1]);
    if (label < 0) throw FormatError("dataset csv: negative label");
    data.labels.push_back(static_cast<std::size_t>(label));
    for (std::size_t d = 0; d < dim; ++d) values.push_back(parse_real(fields[d + 2]));
  }
  data.inputs = Matrix(data.labels.size(), dim, std::move(values));
  return data;
}

void write_dataset(const LabeledDataset& data, const std::string& path) {
  write_file(path, dataset_to_csv(data));
}

LabeledDataset read_dataset(const std::string& path) { return dataset_from_csv(read_file(path)); }

}  // namespace protoalign
