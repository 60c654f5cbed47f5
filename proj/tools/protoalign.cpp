// protoalign command-line tool. One command per process; all state passes
// through files.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "protoalign/bench.hpp"
#include "protoalign/dataset_io.hpp"
#include "protoalign/engine.hpp"
#include "protoalign/error.hpp"
#include "protoalign/gradcheck.hpp"
#include "protoalign/io.hpp"
#include "protoalign/model.hpp"
#include "protoalign/reports.hpp"
#include "protoalign/run_config.hpp"

namespace fs = std::filesystem;
using namespace protoalign;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumerical = 2;

// Raised when a numerical check (gradient suite) fails.
struct NumericalFailure : Error {
  using Error::Error;
};

const char* const kSplits[] = {"source_train", "source_eval", "target_train", "target_eval"};

RunConfig load_config(const std::string& path) {
  return path.empty() ? parse_run_config("") : load_run_config(path);
}

void ensure_parent(const std::string& file) {
  const fs::path parent = fs::path(file).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string dataset_path(const std::string& dir, const std::string& split) {
  return (fs::path(dir) / (split + ".csv")).string();
}

Json base_report(const std::string& command, const RunConfig& config) {
  Json j;
  j["command"] = command;
  j["config"] = config_json(resolved_entries(config));
  return j;
}

void check_classes(const Model& model, const RunConfig& config) {
  if (model.classifier.num_classes() != config.data.num_classes)
    throw InvalidArgument("checkpoint has " + std::to_string(model.classifier.num_classes()) +
                          " classes but the config says " + std::to_string(config.data.num_classes));
}

int gen_data(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  RunConfig config = load_config(config_path);
  if (seed) config.data.seed = *seed;
  const DomainSplits d = generate_domains(config.data);
  fs::create_directories(out_dir);
  Json manifest = base_report("gen-data", config);
  manifest["seed"] = config.data.seed;
  Json files = Json::object();
  for (const auto* split : {&d.source_train, &d.source_eval, &d.target_train, &d.target_eval}) {
    write_dataset(*split, dataset_path(out_dir, split->split));
    std::vector<std::size_t> counts(config.data.num_classes, 0);
    for (auto l : split->labels) ++counts[l];
    Json entry;
    entry["file"] = split->split + ".csv";
    entry["rows"] = split->size();
    entry["class_counts"] = counts;
    files[split->split] = entry;
  }
  manifest["files"] = files;
  write_file((fs::path(out_dir) / "manifest.json").string(), dump(manifest));
  std::cout << "wrote 4 datasets and manifest.json to " << out_dir << "\n";
  return kOk;
}

int pretrain(const std::string& config_path, const std::string& data_dir, const std::string& out,
             std::optional<std::uint64_t> seed) {
  RunConfig config = load_config(config_path);
  if (seed) config.pretrain.seed = *seed;
  const LabeledDataset source = read_dataset(dataset_path(data_dir, "source_train"));
  const PretrainResult r = pretrain_source(source, config.pretrain);
  check_classes(r.model, config);
  ensure_parent(out);
  save_checkpoint(r.model, out);

  Json log = base_report("pretrain", config);
  log["train_accuracy"] = r.train_accuracy;
  log["converged"] = r.converged;
  log["epoch_loss"] = r.epoch_loss;
  write_file(out + ".log.json", dump(log));
  std::cout << "source train accuracy " << r.train_accuracy << "\n";
  if (!r.converged) std::cerr << "warning: source training accuracy below 90%\n";
  return kOk;
}

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& f : split(text, ',')) out.push_back(parse_real(trim(f)));
  if (out.empty()) throw InvalidArgument("--alpha-sweep: empty list");
  return out;
}

int adapt_cmd(const std::string& config_path, const std::string& ckpt, const std::string& data_dir,
              const std::string& out, const std::string& stage_name, std::optional<std::uint64_t> seed,
              const std::string& sweep, bool timing) {
  RunConfig config = load_config(config_path);
  if (seed) config.adapt.seed = *seed;
  const Stages stages = parse_stages(stage_name);
  const Model source = load_checkpoint(ckpt);
  check_classes(source, config);
  const LabeledDataset target = read_dataset(dataset_path(data_dir, "target_train"));

  const AdaptResult r = adapt(source, target.inputs, config.adapt, stages);
  ensure_parent(out);
  save_checkpoint(r.model, out);

  Json report = base_report("adapt", config);
  report["stage"] = stage_name;
  if (stages == Stages::ContrastOnly)
    report["condition"] = "w/o PFA: contrastive stage run directly on the source model";
  else if (stages == Stages::AlignOnly)
    report["condition"] = "w/o CL: alignment stage only";
  else
    report["condition"] = "full two-stage pipeline";
  report["pfa"] = to_json(r.pfa, timing);
  report["cl"] = to_json(r.cl, timing);

  if (!sweep.empty()) {
    const LabeledDataset eval = read_dataset(dataset_path(data_dir, "target_eval"));
    std::string table = "alpha,accuracy,macro_recall,macro_dice,compactness\n";
    Json rows = Json::array();
    std::cout << "alpha   accuracy  macro_recall  macro_dice\n";
    for (double a : parse_alpha_list(sweep)) {
      AdaptationConfig c = config.adapt;
      c.alpha = {a};
      c.validate(config.data.num_classes);
      const MetricsReport m = evaluate(adapt(source, target.inputs, c, stages).model, eval);
      table += format_real(a) + ',' + format_real(m.accuracy) + ',' + format_real(m.macro_recall) + ',' +
               format_real(m.macro_dice) + ',' + format_real(m.compactness) + '\n';
      Json row;
      row["alpha"] = a;
      row["accuracy"] = m.accuracy;
      row["macro_recall"] = m.macro_recall;
      row["macro_dice"] = m.macro_dice;
      rows.push_back(row);
      std::printf("%-7g %-9.4f %-13.4f %.4f\n", a, m.accuracy, m.macro_recall, m.macro_dice);
    }
    report["alpha_sweep"] = rows;
    write_file(out + ".alpha_sweep.csv", table);
  }

  write_file(out + ".report.json", dump(report));
  write_file(out + ".losses.csv", loss_series_csv(r.pfa, r.cl));
  for (const auto& w : r.cl.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << out << " (" << r.pfa.iterations() << " alignment, " << r.cl.iterations()
            << " contrastive iterations)\n";
  return kOk;
}

int evaluate_cmd(const std::string& config_path, const std::string& ckpt, const std::string& data,
                 const std::string& out) {
  const RunConfig config = load_config(config_path);
  const Model model = load_checkpoint(ckpt);
  const LabeledDataset ds = read_dataset(data);
  const MetricsReport m = evaluate(model, ds);
  Json report = base_report("evaluate", config);
  report["split"] = ds.split;
  report["metrics"] = to_json(m);
  if (out.empty()) {
    std::cout << dump(report);
  } else {
    ensure_parent(out);
    write_file(out, dump(report));
    std::cout << "accuracy " << m.accuracy << "  macro dice " << m.macro_dice << "\n";
  }
  return kOk;
}

int grad_check(std::size_t seeds, std::uint64_t seed) {
  GradCheckOptions opt;
  opt.instances = seeds;
  opt.seed = seed;
  const auto results = run_gradient_suites(opt);
  bool ok = true;
  std::printf("%-22s %9s %14s %10s  %s\n", "suite", "instances", "max_rel_error", "kink_skips", "result");
  for (const auto& r : results) {
    std::printf("%-22s %9zu %14.3e %10zu  %s\n", r.suite.c_str(), r.instances, r.max_rel_error, r.kink_skips,
                r.passed ? "PASS" : "FAIL");
    ok = ok && r.passed;
  }
  if (!ok) throw NumericalFailure("gradient check failed");
  return kOk;
}

void print_keys() {
  const RunConfig defaults = parse_run_config("");
  const auto values = resolved_entries(defaults);
  const auto& docs = run_config_keys();
  for (std::size_t k = 0; k < docs.size(); ++k)
    std::cout << docs[k].first << " = " << values[k].second << "    # " << docs[k].second << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-anchored source-free domain adaptation on synthetic domain shift"};
  app.require_subcommand(1);

  std::string config_path, data, out, ckpt, stage = "both", sweep;
  std::optional<std::uint64_t> seed;
  bool timing = false;
  std::size_t seeds = 20;
  std::uint64_t grad_seed = GradCheckOptions{}.seed;

  auto* gen = app.add_subcommand("gen-data", "generate source/target datasets and a manifest");
  gen->add_option("--config", config_path, "run config file");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--seed", seed, "override data_seed");

  auto* pre = app.add_subcommand("pretrain", "train extractor and classifier on source_train.csv");
  pre->add_option("--config", config_path, "run config file");
  pre->add_option("--data", data, "dataset directory")->required();
  pre->add_option("--out", out, "output checkpoint (log goes to <out>.log.json)")->required();
  pre->add_option("--seed", seed, "override pretrain_seed");

  auto* ad = app.add_subcommand("adapt", "adapt a source checkpoint to target_train.csv");
  ad->add_option("--config", config_path, "run config file");
  ad->add_option("--checkpoint", ckpt, "source checkpoint")->required();
  ad->add_option("--data", data, "dataset directory")->required();
  ad->add_option("--out", out, "output checkpoint; reports go to <out>.report.json and <out>.losses.csv")
      ->required();
  ad->add_option("--stage", stage, "pfa | cl | both")->check(CLI::IsMember({"pfa", "cl", "both"}));
  ad->add_option("--seed", seed, "override the adaptation seed");
  ad->add_option("--alpha-sweep", sweep, "comma list of alpha values, evaluated on target_eval.csv");
  ad->add_flag("--timing", timing, "include wall time in the report");

  auto* ev = app.add_subcommand("evaluate", "metrics of a checkpoint on a labeled dataset");
  ev->add_option("--config", config_path, "run config echoed into the report");
  ev->add_option("--checkpoint", ckpt, "checkpoint")->required();
  ev->add_option("--data", data, "dataset CSV file")->required();
  ev->add_option("--out", out, "report path (stdout when omitted)");

  auto* gc = app.add_subcommand("grad-check", "finite-difference checks of every loss and backprop path");
  gc->add_option("--seeds", seeds, "instances per suite")->check(CLI::PositiveNumber);
  gc->add_option("--seed", grad_seed, "base seed");

  app.add_subcommand("config-keys", "list every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*gen) return gen_data(config_path, out, seed);
    if (*pre) return pretrain(config_path, data, out, seed);
    if (*ad) return adapt_cmd(config_path, ckpt, data, out, stage, seed, sweep, timing);
    if (*ev) return evaluate_cmd(config_path, ckpt, data, out);
    if (*gc) return grad_check(seeds, grad_seed);
    print_keys();
    return kOk;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const DegenerateInput& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
}
