#include "protoalign/run_config.hpp"

#include <functional>
#include <set>
#include <sstream>

#include "protoalign/error.hpp"
#include "protoalign/io.hpp"

namespace protoalign {

namespace {

struct Key {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::size_t to_count(const std::string& v) {
  const long long x = parse_integer(v);
  if (x < 0) throw InvalidArgument("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_seed(const std::string& v) {
  const long long x = parse_integer(v);
  if (x < 0) throw InvalidArgument("seed must be non-negative");
  return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("expected true/false, got '" + v + "'");
}

std::vector<double> to_reals(const std::string& v) {
  std::vector<double> out;
  for (const auto& f : split(v, ',')) out.push_back(parse_real(f));
  return out;
}

std::vector<std::size_t> to_counts(const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (const auto& f : split(v, ',')) out.push_back(to_count(std::string(trim(f))));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += format_real(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

#define REAL_KEY(key, field, doc)                                                   \
  Key {                                                                             \
    key, doc, [](RunConfig& c, const std::string& v) { c.field = parse_real(v); }, \
        [](const RunConfig& c) { return format_real(c.field); }                    \
  }
#define COUNT_KEY(key, field, doc)                                                \
  Key {                                                                           \
    key, doc, [](RunConfig& c, const std::string& v) { c.field = to_count(v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }               \
  }
#define SEED_KEY(key, field, doc)                                                \
  Key {                                                                          \
    key, doc, [](RunConfig& c, const std::string& v) { c.field = to_seed(v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }              \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      COUNT_KEY("classes", data.num_classes, "number of classes C"),
      COUNT_KEY("input_dim", data.input_dim, "input dimension D_in"),
      REAL_KEY("class_std", data.class_std, "per-class isotropic standard deviation"),
      REAL_KEY("separation", data.separation, "distance of each class mean from the class centroid"),
      REAL_KEY("center_norm", data.center_norm, "distance of the class-mean centroid from the origin"),
      Key{"source_proportions", "source class proportions (comma list, sums to 1)",
          [](RunConfig& c, const std::string& v) { c.data.source_proportions = to_reals(v); },
          [](const RunConfig& c) { return join(c.data.source_proportions); }},
      Key{"target_proportions", "target class proportions (comma list, sums to 1)",
          [](RunConfig& c, const std::string& v) { c.data.target_proportions = to_reals(v); },
          [](const RunConfig& c) { return join(c.data.target_proportions); }},
      REAL_KEY("rotation_angle", data.rotation_angle, "target rotation angle in radians"),
      REAL_KEY("scale", data.scale, "target scale factor"),
      REAL_KEY("shift_norm", data.shift_norm, "norm of the target translation"),
      COUNT_KEY("n_source_train", data.n_source_train, "source training samples"),
      COUNT_KEY("n_source_eval", data.n_source_eval, "source evaluation samples"),
      COUNT_KEY("n_target_train", data.n_target_train, "unlabeled target adaptation samples"),
      COUNT_KEY("n_target_eval", data.n_target_eval, "target evaluation samples"),
      SEED_KEY("data_seed", data.seed, "seed for domain generation"),
      Key{"hidden", "hidden layer widths of the extractor (comma list)",
          [](RunConfig& c, const std::string& v) { c.pretrain.hidden = to_counts(v); },
          [](const RunConfig& c) { return join(c.pretrain.hidden); }},
      COUNT_KEY("feature_dim", pretrain.feature_dim, "feature dimension D_f"),
      COUNT_KEY("pretrain_epochs", pretrain.epochs, "source pretraining epochs"),
      REAL_KEY("pretrain_lr", pretrain.lr, "source pretraining Adam learning rate"),
      COUNT_KEY("pretrain_batch_size", pretrain.batch_size, "source pretraining batch size"),
      SEED_KEY("pretrain_seed", pretrain.seed, "seed for source pretraining"),
      Key{"temperature", "softmax temperature tau (pretraining and adaptation)",
          [](RunConfig& c, const std::string& v) {
            c.adapt.temperature = parse_real(v);
            c.pretrain.temperature = c.adapt.temperature;
          },
          [](const RunConfig& c) { return format_real(c.adapt.temperature); }},
      COUNT_KEY("batch_size", adapt.batch_size, "adaptation batch size"),
      REAL_KEY("lr", adapt.lr, "adaptation Adam learning rate"),
      REAL_KEY("weight_decay", adapt.weight_decay, "decoupled weight decay"),
      COUNT_KEY("pfa_iters", adapt.pfa_iters, "alignment-stage iterations"),
      COUNT_KEY("cl_iters", adapt.cl_iters, "contrastive-stage iterations"),
      Key{"alpha", "entropy percentile alpha_c (one value or one per class)",
          [](RunConfig& c, const std::string& v) { c.adapt.alpha = to_reals(v); },
          [](const RunConfig& c) { return join(c.adapt.alpha); }},
      COUNT_KEY("queries_per_class", adapt.queries_per_class, "K, queries sampled per class"),
      COUNT_KEY("negatives_per_query", adapt.negatives_per_query, "N, negatives per query"),
      Key{"low_rank", "r_l, minimum category rank of a negative",
          [](RunConfig& c, const std::string& v) { c.adapt.low_rank = static_cast<int>(parse_integer(v)); },
          [](const RunConfig& c) { return std::to_string(c.adapt.low_rank); }},
      REAL_KEY("em_momentum", adapt.em_momentum, "EM prior momentum rho"),
      SEED_KEY("seed", adapt.seed, "adaptation seed"),
      Key{"negatives_threshold_mode", "pseudo_label | target_class",
          [](RunConfig& c, const std::string& v) { c.adapt.negatives_threshold_mode = parse_threshold_mode(v); },
          [](const RunConfig& c) { return to_string(c.adapt.negatives_threshold_mode); }},
      Key{"cl_keep_pfa_loss", "also minimize the alignment loss during the contrastive stage",
          [](RunConfig& c, const std::string& v) { c.adapt.cl_keep_pfa_loss = to_bool(v); },
          [](const RunConfig& c) { return std::string(c.adapt.cl_keep_pfa_loss ? "true" : "false"); }},
      Key{"pfa_objective", "full | t2p | p2t (ablation switch)",
          [](RunConfig& c, const std::string& v) { c.adapt.objective = parse_objective(v); },
          [](const RunConfig& c) { return to_string(c.adapt.objective); }},
      Key{"data_dir", "directory for generated datasets",
          [](RunConfig& c, const std::string& v) { c.data_dir = v; },
          [](const RunConfig& c) { return c.data_dir; }},
      Key{"work_dir", "directory for checkpoints and reports",
          [](RunConfig& c, const std::string& v) { c.work_dir = v; },
          [](const RunConfig& c) { return c.work_dir; }},
  };
  return table;
}

#undef REAL_KEY
#undef COUNT_KEY
#undef SEED_KEY

}  // namespace

const std::vector<std::pair<std::string, std::string>>& run_config_keys() {
  static const auto docs = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : keys()) out.emplace_back(k.name, k.doc);
    return out;
  }();
  return docs;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    const Key* match = nullptr;
    for (const auto& k : keys())
      if (k.name == key) match = &k;
    if (match == nullptr) throw InvalidArgument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw InvalidArgument("config: duplicate key '" + key + "'");
    try {
      match->set(config, value);
    } catch (const Error& e) {
      throw InvalidArgument("config key '" + key + "': " + e.what());
    }
  }
  // Proportions default to uniform over however many classes were asked for.
  const std::size_t c = config.data.num_classes;
  const std::vector<double> uniform(c, 1.0 / static_cast<double>(c));
  if (!seen.contains("source_proportions")) config.data.source_proportions = uniform;
  if (!seen.contains("target_proportions")) config.data.target_proportions = uniform;
  config.data.validate();
  config.adapt.validate(c);
  return config;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(config));
  return out;
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : resolved_entries(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace protoalign
