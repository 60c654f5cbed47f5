#include "protoalign/model.hpp"

#include <map>
#include <sstream>

#include "protoalign/error.hpp"
#include "protoalign/io.hpp"

namespace protoalign {

namespace {

constexpr const char* kHeader = "protoalign-ckpt v1";

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;  // 0 for vectors
  std::vector<double> values;
};

void write_tensor(std::ostringstream& out, const std::string& name, std::size_t rows,
                  std::size_t cols, std::span<const double> values) {
  out << name << ' ' << rows;
  if (cols != 0) out << 'x' << cols;
  for (double v : values) out << ' ' << format_real(v);
  out << '\n';
}

Tensor parse_tensor(const std::vector<std::string>& fields) {
  if (fields.size() < 2) throw FormatError("checkpoint: tensor line without shape");
  Tensor t;
  const auto dims = split(fields[1], 'x');
  if (dims.size() == 1) {
    t.rows = static_cast<std::size_t>(parse_integer(dims[0]));
  } else if (dims.size() == 2) {
    t.rows = static_cast<std::size_t>(parse_integer(dims[0]));
    t.cols = static_cast<std::size_t>(parse_integer(dims[1]));
  } else {
    throw FormatError("checkpoint: bad shape '" + fields[1] + "'");
  }
  const std::size_t expected = t.cols == 0 ? t.rows : t.rows * t.cols;
  if (fields.size() - 2 != expected)
    throw FormatError("checkpoint: tensor '" + fields[0] + "' has " +
                      std::to_string(fields.size() - 2) + " values, expected " +
                      std::to_string(expected));
  for (std::size_t k = 2; k < fields.size(); ++k) t.values.push_back(parse_real(fields[k]));
  return t;
}

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

Matrix Model::probabilities(const Matrix& inputs) const {
  return class_probabilities(features(inputs), classifier);
}

std::vector<std::size_t> Model::predict(const Matrix& inputs) const {
  const Matrix logits = classifier_logits(features(inputs), classifier);
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = argmax(logits.row(i));
  return out;
}

std::string serialize_checkpoint(const Model& model) {
  std::ostringstream out;
  out << kHeader << '\n' << "layers";
  for (std::size_t s : model.extractor.sizes()) out << ' ' << s;
  out << '\n' << "temperature " << format_real(model.classifier.temperature()) << '\n';
  for (std::size_t l = 0; l < model.extractor.num_layers(); ++l) {
    const Matrix w = model.extractor.weight(l);
    write_tensor(out, "layer" + std::to_string(l) + ".weight", w.rows(), w.cols(), w.values());
    const auto b = model.extractor.bias(l);
    write_tensor(out, "layer" + std::to_string(l) + ".bias", b.size(), 0, b);
  }
  const Matrix& protos = model.classifier.weights();
  write_tensor(out, "classifier.weights", protos.rows(), protos.cols(), protos.values());
  write_tensor(out, "classifier.prior", model.classifier.prior().size(), 0, model.classifier.prior());
  return out.str();
}

Model parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader)
    throw FormatError("checkpoint: missing 'protoalign-ckpt v1' header");

  std::vector<std::size_t> sizes;
  double temperature = 0.0;
  std::map<std::string, Tensor> tensors;
  while (std::getline(in, line)) {
    const auto fields = tokens(line);
    if (fields.empty()) continue;
    if (fields[0] == "layers") {
      for (std::size_t k = 1; k < fields.size(); ++k)
        sizes.push_back(static_cast<std::size_t>(parse_integer(fields[k])));
    } else if (fields[0] == "temperature") {
      if (fields.size() != 2) throw FormatError("checkpoint: bad temperature line");
      temperature = parse_real(fields[1]);
    } else {
      if (tensors.contains(fields[0])) throw FormatError("checkpoint: duplicate tensor " + fields[0]);
      tensors.emplace(fields[0], parse_tensor(fields));
    }
  }
  if (sizes.size() < 2) throw FormatError("checkpoint: missing layer sizes");

  MlpExtractor net(sizes);
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint: missing tensor " + name);
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Tensor w = take("layer" + std::to_string(l) + ".weight");
    if (w.rows != sizes[l + 1] || w.cols != sizes[l])
      throw FormatError("checkpoint: layer" + std::to_string(l) + ".weight shape mismatch");
    net.set_weight(l, Matrix(w.rows, w.cols, std::move(w.values)));
    Tensor b = take("layer" + std::to_string(l) + ".bias");
    if (b.cols != 0 || b.rows != sizes[l + 1])
      throw FormatError("checkpoint: layer" + std::to_string(l) + ".bias shape mismatch");
    net.set_bias(l, b.values);
  }
  Tensor w = take("classifier.weights");
  Tensor prior = take("classifier.prior");
  if (w.cols != sizes.back()) throw FormatError("checkpoint: classifier dim != feature dim");
  if (!tensors.empty()) throw FormatError("checkpoint: unknown tensor " + tensors.begin()->first);
  return Model{std::move(net),
               PrototypeSet(Matrix(w.rows, w.cols, std::move(w.values)), std::move(prior.values),
                            temperature)};
}

void save_checkpoint(const Model& model, const std::string& path) {
  write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace protoalign
