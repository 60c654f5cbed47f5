#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "protoalign/dataset_io.hpp"
#include "protoalign/error.hpp"
#include "protoalign/io.hpp"
#include "protoalign/model.hpp"
#include "protoalign/reports.hpp"
#include "protoalign/run_config.hpp"

using namespace protoalign;

namespace {

Model random_model(std::uint64_t seed) {
  SeededRng rng(seed);
  MlpExtractor net = MlpExtractor::initialized({3, 5, 4}, rng);
  std::vector<double> p(net.parameters().begin(), net.parameters().end());
  for (double& x : p) x += rng.normal();  // nonzero biases too
  net.set_parameters(p);
  return Model{net, PrototypeSet(oracle::random_matrix(rng, 3, 4, 1.0), {0.2, 0.3, 0.5}, 0.07)};
}

std::string replace_line(const std::string& text, const std::string& prefix, const std::string& with) {
  const auto at = text.find(prefix);
  REQUIRE(at != std::string::npos);
  const auto end = text.find('\n', at);
  return text.substr(0, at) + with + text.substr(end);
}

}  // namespace

TEST_CASE("real formatting round-trips") {
  SeededRng rng(3);
  for (int k = 0; k < 2000; ++k) {
    const double x = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    CHECK(parse_real(format_real(x)) == x);
  }
  CHECK(parse_real(format_real(0.1)) == 0.1);
  CHECK_THROWS_AS(parse_real("1.5x"), FormatError);
  CHECK_THROWS_AS(parse_real(""), FormatError);
  CHECK(parse_integer(" 42 ") == 42);
  CHECK_THROWS_AS(parse_integer("4.2"), FormatError);
}

TEST_CASE("checkpoint") {
  const Model m = random_model(1);
  const std::string text = serialize_checkpoint(m);
  CHECK(text.rfind("protoalign-ckpt v1\nlayers 3 5 4\n", 0) == 0);

  SUBCASE("lossless round trip") {
    const Model back = parse_checkpoint(text);
    CHECK(back.extractor == m.extractor);
    CHECK(back.classifier.weights() == m.classifier.weights());
    CHECK(back.classifier.prior() == m.classifier.prior());
    CHECK(back.classifier.temperature() == m.classifier.temperature());
    CHECK(serialize_checkpoint(back) == text);
  }
  SUBCASE("file round trip") {
    const auto path = (std::filesystem::temp_directory_path() / "protoalign_test.ckpt").string();
    save_checkpoint(m, path);
    CHECK(serialize_checkpoint(load_checkpoint(path)) == text);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(parse_checkpoint(""), FormatError);
    CHECK_THROWS_AS(parse_checkpoint("protoalign-ckpt v2\n"), FormatError);
    CHECK_THROWS_AS(parse_checkpoint(replace_line(text, "layer0.bias", "layer0.bias 5 1 2 3")), FormatError);
    CHECK_THROWS_AS(parse_checkpoint(replace_line(text, "layer1.weight", "layer1.weight 4by5 0")), FormatError);
    CHECK_THROWS_AS(parse_checkpoint(replace_line(text, "layer1.bias", "")), FormatError);
    CHECK_THROWS_AS(parse_checkpoint(text + "extra.tensor 1 0\n"), FormatError);
    CHECK_THROWS_AS(parse_checkpoint(replace_line(text, "layers", "layers 3 5 6")), FormatError);
  }
}

TEST_CASE("dataset csv") {
  LabeledDataset d;
  d.split = "target_eval";
  d.inputs = Matrix::from_rows({{0.1, -2.5e-9}, {3.0, 1.0 / 3.0}, {-0.0, 7.0}});
  d.labels = {2, 0, 1};
  const std::string csv = dataset_to_csv(d);
  CHECK(csv.rfind("split,label,x0,x1\ntarget_eval,2,", 0) == 0);
  const LabeledDataset back = dataset_from_csv(csv);
  CHECK(back.split == "target_eval");
  CHECK(back.labels == d.labels);
  CHECK(back.inputs == d.inputs);

  CHECK_THROWS_AS(dataset_from_csv(""), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("split,y,x0\n"), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("split,label,x0,x2\n"), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("split,label,x0\na,0,1,2\n"), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("split,label,x0\na,0,1\nb,0,1\n"), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("split,label,x0\na,-1,1\n"), FormatError);
}

TEST_CASE("run config") {
  SUBCASE("defaults and overrides") {
    const RunConfig c = parse_run_config(
        "# comment line\n"
        "classes = 3\n"
        "  lr = 0.001  \n"
        "alpha = 60,80,95\n"
        "\n"
        "temperature = 0.2\n"
        "negatives_threshold_mode = target_class\n");
    CHECK(c.data.num_classes == 3);
    CHECK(c.adapt.lr == 0.001);
    CHECK(c.adapt.alpha == std::vector<double>{60, 80, 95});
    CHECK(c.pretrain.temperature == 0.2);
    CHECK(c.adapt.temperature == 0.2);
    CHECK(c.adapt.negatives_threshold_mode == NegativeThresholdMode::TargetClass);
    CHECK(c.data.source_proportions.size() == 3);
    CHECK(c.adapt.batch_size == AdaptationConfig{}.batch_size);
  }
  SUBCASE("formatted config parses back to the same entries") {
    const RunConfig c = parse_run_config("classes = 3\ntarget_proportions = 0.6,0.3,0.1\nseed = 9\n");
    const std::string text = format_run_config(c);
    CHECK(resolved_entries(parse_run_config(text)) == resolved_entries(c));
    CHECK(resolved_entries(c).size() == run_config_keys().size());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_run_config("nonsense = 1\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("lr = 1\nlr = 2\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("lr 1\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("lr = fast\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("temperature = 0\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("target_proportions = 0.5,0.5\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("cl_keep_pfa_loss = maybe\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_run_config("seed = -3\n"), InvalidArgument);
  }
}

TEST_CASE("reports") {
  MetricsReport m = metrics_from_predictions(std::vector<std::size_t>{0, 0, 1},
                                             std::vector<std::size_t>{0, 1, 1}, 3);
  const Json j = to_json(m);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"accuracy", "macro_recall", "macro_dice", "compactness",
                                         "mean_entropy", "recall", "dice", "prediction_histogram"});
  CHECK(j["recall"][2].is_null());
  CHECK(j["dice"][2].is_null());
  CHECK(j["prediction_histogram"] == Json::array({1, 2, 0}));

  TrainReport pfa;
  pfa.stage = "pfa";
  pfa.t2p = {1.0, 0.5};
  pfa.p2t = {0.25, 0.125};
  pfa.pfa = {1.25, 0.625};
  pfa.prior = {{0.5, 0.5}, {0.6, 0.4}};
  pfa.elapsed_seconds = 3.5;
  TrainReport cl;
  cl.stage = "cl";
  cl.cl = {0.75, 0.0};
  cl.cl_active = {true, false};
  cl.noop_iterations = 1;

  const Json jp = to_json(pfa);
  CHECK(jp["iterations"] == 2);
  CHECK(jp["final_prior"] == Json::array({0.6, 0.4}));
  CHECK(!jp.contains("elapsed_seconds"));
  CHECK(to_json(pfa, true)["elapsed_seconds"] == 3.5);
  CHECK(to_json(cl)["final_prior"].is_null());
  CHECK(to_json(cl)["noop_iterations"] == 1);

  CHECK(loss_series_csv(pfa, cl) ==
        "stage,iteration,t2p,p2t,pfa,cl,active,prior0,prior1\n"
        "pfa,0,1,0.25,1.25,,1,0.5,0.5\n"
        "pfa,1,0.5,0.125,0.625,,1,0.59999999999999998,0.40000000000000002\n"
        "cl,0,,,,0.75,1,,\n"
        "cl,1,,,,0,0,,\n");

  const Json cfg = config_json({{"b", "1"}, {"a", "2"}});
  CHECK(dump(cfg) == "{\n  \"b\": \"1\",\n  \"a\": \"2\"\n}\n");
}
