#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "protoalign/bench.hpp"
#include "protoalign/engine.hpp"
#include "protoalign/error.hpp"
#include "protoalign/pfa_loss.hpp"

using namespace protoalign;

namespace {

struct Fixture {
  DomainSplits data;
  Model source;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    DomainShiftSpec spec;
    spec.n_source_train = 800;
    spec.n_target_train = 800;
    spec.n_source_eval = spec.n_target_eval = 200;
    PretrainConfig pc;
    pc.epochs = 10;
    auto data = generate_domains(spec);
    auto model = pretrain_source(data.source_train, pc).model;
    return Fixture{std::move(data), std::move(model)};
  }();
  return f;
}

AdaptationConfig quick_config() {
  AdaptationConfig c;
  c.lr = 1e-3;
  c.batch_size = 32;
  c.pfa_iters = 20;
  c.cl_iters = 20;
  c.queries_per_class = 8;
  c.negatives_per_query = 16;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("batch sampler") {
  SUBCASE("one epoch is a permutation") {
    BatchSampler s(40, 8, 3);
    std::vector<std::size_t> seen;
    for (int b = 0; b < 5; ++b) {
      const auto batch = s.next();
      CHECK(batch.size() == 8);
      seen.insert(seen.end(), batch.begin(), batch.end());
    }
    std::ranges::sort(seen);
    std::vector<std::size_t> all(40);
    std::iota(all.begin(), all.end(), 0);
    CHECK(seen == all);
  }
  SUBCASE("no repeats within a batch across reshuffles") {
    BatchSampler s(10, 7, 1);
    for (int b = 0; b < 100; ++b) {
      const auto batch = s.next();
      CHECK(std::set<std::size_t>(batch.begin(), batch.end()).size() == 7);
      for (auto i : batch) CHECK(i < 10);
    }
  }
  SUBCASE("batches larger than the dataset repeat samples") {
    BatchSampler s(3, 5, 1);
    CHECK(s.next().size() == 5);
  }
  SUBCASE("seeded") {
    BatchSampler a(50, 16, 9), b(50, 16, 9), c(50, 16, 10);
    bool differs = false;
    for (int k = 0; k < 10; ++k) {
      const auto x = a.next();
      CHECK(x == b.next());
      differs = differs || x != c.next();
    }
    CHECK(differs);
  }
  CHECK_THROWS_AS(BatchSampler(0, 4, 1), InvalidArgument);
  CHECK_THROWS_AS(BatchSampler(4, 0, 1), InvalidArgument);
}

TEST_CASE("stage and objective names") {
  CHECK(parse_stages("both") == Stages::Both);
  CHECK(parse_stages("pfa") == Stages::AlignOnly);
  CHECK(parse_stages("cl") == Stages::ContrastOnly);
  CHECK_THROWS_AS(parse_stages("all"), InvalidArgument);
  for (auto o : {AlignmentObjective::Full, AlignmentObjective::TargetToPrototype,
                 AlignmentObjective::PrototypeToTarget})
    CHECK(parse_objective(to_string(o)) == o);
  CHECK_THROWS_AS(parse_objective("both"), InvalidArgument);
}

TEST_CASE("config validation") {
  const std::size_t C = 4;
  CHECK_NOTHROW(AdaptationConfig{}.validate(C));
  auto bad = [&](auto mutate) {
    AdaptationConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(C), InvalidArgument);
  };
  bad([](AdaptationConfig& c) { c.temperature = 0; });
  bad([](AdaptationConfig& c) { c.batch_size = 0; });
  bad([](AdaptationConfig& c) { c.lr = -1; });
  bad([](AdaptationConfig& c) { c.weight_decay = -1e-3; });
  bad([](AdaptationConfig& c) { c.alpha = {0.0}; });
  bad([](AdaptationConfig& c) { c.alpha = {101.0}; });
  bad([](AdaptationConfig& c) { c.alpha = {80, 80}; });
  bad([](AdaptationConfig& c) { c.queries_per_class = 0; });
  bad([](AdaptationConfig& c) { c.low_rank = 1; });
  bad([](AdaptationConfig& c) { c.low_rank = 5; });
  bad([](AdaptationConfig& c) { c.em_momentum = 1.0; });
  AdaptationConfig per_class;
  per_class.alpha = {60, 70, 80, 90};
  CHECK(per_class.alpha_for(C) == std::vector<double>{60, 70, 80, 90});
  CHECK(AdaptationConfig{}.alpha_for(3) == std::vector<double>(3, 80.0));
}

TEST_CASE("alignment stage") {
  const auto& f = fixture();
  const Matrix& xt = f.data.target_train.inputs;

  SUBCASE("zero iterations leave the extractor untouched") {
    auto cfg = quick_config();
    cfg.pfa_iters = 0;
    const auto [m, r] = run_pfa_stage(f.source, xt, cfg);
    CHECK(m.extractor == f.source.extractor);
    CHECK(r.iterations() == 0);
    CHECK(m.classifier.prior() == std::vector<double>(4, 0.25));
  }
  SUBCASE("classifier weights are frozen and the prior stays on the simplex") {
    const auto [m, r] = run_pfa_stage(f.source, xt, quick_config());
    CHECK(m.classifier.weights() == f.source.classifier.weights());
    CHECK(!(m.extractor == f.source.extractor));
    REQUIRE(r.prior.size() == 20);
    for (const auto& p : r.prior) {
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1).epsilon(1e-12));
      for (double v : p) CHECK(v >= 0);
    }
    CHECK(m.classifier.prior() == r.prior.back());
    for (std::size_t i = 0; i < 20; ++i) CHECK(r.pfa[i] == doctest::Approx(r.t2p[i] + r.p2t[i]));
  }
  SUBCASE("loss decreases over training") {
    auto cfg = quick_config();
    cfg.pfa_iters = 300;
    cfg.batch_size = 64;
    const auto [m, r] = run_pfa_stage(f.source, xt, cfg);
    // Compare the full-set objective before and after, with the final prior.
    const PrototypeSet protos = m.classifier;
    const double before = pfa_loss(f.source.features(xt), protos).value;
    const double after = pfa_loss(m.features(xt), protos).value;
    CHECK(after < before);
    const auto window = [&](std::size_t from) {
      return std::accumulate(r.pfa.begin() + static_cast<std::ptrdiff_t>(from),
                             r.pfa.begin() + static_cast<std::ptrdiff_t>(from + 30), 0.0);
    };
    CHECK(window(270) < window(0));
  }
  SUBCASE("ablation objectives train different models") {
    auto cfg = quick_config();
    cfg.objective = AlignmentObjective::TargetToPrototype;
    const auto a = run_pfa_stage(f.source, xt, cfg).first;
    cfg.objective = AlignmentObjective::PrototypeToTarget;
    const auto b = run_pfa_stage(f.source, xt, cfg).first;
    const auto full = run_pfa_stage(f.source, xt, quick_config()).first;
    CHECK(!(a.extractor == b.extractor));
    CHECK(!(a.extractor == full.extractor));
  }
  CHECK_THROWS_AS(run_pfa_stage(f.source, Matrix(0, 8), quick_config()), InvalidArgument);
}

TEST_CASE("contrastive stage") {
  const auto& f = fixture();
  const Matrix& xt = f.data.target_train.inputs;

  SUBCASE("snapshot is read only and the classifier is carried over") {
    const Model snapshot = f.source;
    const auto [m, r] = run_cl_stage(f.source, snapshot, xt, quick_config());
    CHECK(snapshot.extractor == f.source.extractor);
    CHECK(m.classifier.weights() == snapshot.classifier.weights());
    CHECK(m.classifier.prior() == snapshot.classifier.prior());
    CHECK(r.cl.size() == 20);
    CHECK(r.noop_iterations == 0);
    CHECK(!(m.extractor == f.source.extractor));
    CHECK(r.warnings.empty());
  }
  SUBCASE("a snapshot with identical predictions yields only no-op iterations") {
    // Zero weights: every input maps to the same feature, so all entropies
    // tie, no sample exceeds its threshold and no negatives exist.
    MlpExtractor flat({8, 16});
    std::vector<double> b(16, 0.0);
    b[0] = 1;
    flat.set_bias(0, b);
    const Model snapshot{flat, f.source.classifier};
    const auto [m, r] = run_cl_stage(f.source, snapshot, xt, quick_config());
    CHECK(r.noop_iterations == 20);
    CHECK(std::ranges::none_of(r.cl_active, [](bool x) { return x; }));
    CHECK(m.extractor == f.source.extractor);
    REQUIRE(r.warnings.size() == 1);
  }
  SUBCASE("keeping the alignment loss changes the update") {
    auto cfg = quick_config();
    const auto a = run_cl_stage(f.source, f.source, xt, cfg).first;
    cfg.cl_keep_pfa_loss = true;
    const auto b = run_cl_stage(f.source, f.source, xt, cfg).first;
    CHECK(!(a.extractor == b.extractor));
  }
  SUBCASE("single class is rejected") {
    const Model one{f.source.extractor,
                    PrototypeSet::with_uniform_prior(f.source.classifier.weights().gather_rows(std::vector<std::size_t>{0}), 0.1)};
    CHECK_THROWS_AS(run_cl_stage(one, one, xt, quick_config()), InvalidArgument);
  }
}

TEST_CASE("two-stage adaptation") {
  const auto& f = fixture();
  const Matrix& xt = f.data.target_train.inputs;

  SUBCASE("deterministic for a fixed seed") {
    const auto a = adapt(f.source, xt, quick_config());
    const auto b = adapt(f.source, xt, quick_config());
    CHECK(a.model.extractor == b.model.extractor);
    CHECK(a.pfa.pfa == b.pfa.pfa);
    CHECK(a.cl.cl == b.cl.cl);
    auto other = quick_config();
    other.seed = 6;
    CHECK(!(adapt(f.source, xt, other).model.extractor == a.model.extractor));
  }
  SUBCASE("zero iterations return the source model") {
    auto cfg = quick_config();
    cfg.pfa_iters = cfg.cl_iters = 0;
    const auto r = adapt(f.source, xt, cfg);
    CHECK(r.model.extractor == f.source.extractor);
    CHECK(r.model.classifier.weights() == f.source.classifier.weights());
    CHECK(r.model.predict(xt) == f.source.predict(xt));
  }
  SUBCASE("stage selection") {
    const auto both = adapt(f.source, xt, quick_config(), Stages::Both);
    const auto pfa = adapt(f.source, xt, quick_config(), Stages::AlignOnly);
    const auto cl = adapt(f.source, xt, quick_config(), Stages::ContrastOnly);
    CHECK(both.pfa.pfa == pfa.pfa.pfa);
    CHECK(pfa.cl.iterations() == 0);
    CHECK(cl.pfa.iterations() == 0);
    CHECK(cl.cl.iterations() == 20);
    CHECK(both.model.classifier.prior() == pfa.model.classifier.prior());
    CHECK(cl.model.classifier.prior() == f.source.classifier.prior());
    // The contrastive stage starts from the aligned model.
    CHECK(run_cl_stage(pfa.model, pfa.model, xt, quick_config()).first.extractor == both.model.extractor);
  }
}
