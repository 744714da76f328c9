#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "relpretext/error.hpp"
#include "relpretext/model.hpp"
#include "relpretext/objectives.hpp"
#include "test_util.hpp"

using namespace relpretext;
using namespace relpretext::testing;

TEST_CASE("group weights follow inverse frequency, mean 1") {
  // Batch {null x3, non_null x1}: w_null = 2/3, w_non_null = 2.
  auto w = group_weights({1, 1, 1, 0});
  CHECK(w[0] == doctest::Approx(2.0 / 3.0));
  CHECK(w[1] == doctest::Approx(2.0 / 3.0));
  CHECK(w[2] == doctest::Approx(2.0 / 3.0));
  CHECK(w[3] == doctest::Approx(2.0));
  double mean = (w[0] + w[1] + w[2] + w[3]) / 4.0;
  CHECK(mean == doctest::Approx(1.0));

  // Single-group batches are unweighted.
  auto w_same = group_weights({0, 0});
  CHECK(w_same[0] == 1.0);
  CHECK(w_same[1] == 1.0);
}

TEST_CASE("SCE analytic cases") {
  Tape tape;
  SUBCASE("parallel rows give zero") {
    Var pred = tape.input({1, 3}, {0.2, -0.4, 1.0}, true);
    Var target = tape.constant({1, 3}, {0.2, -0.4, 1.0});
    Var loss = sce_loss(tape, pred, target, {0}, 2.0);
    CHECK(loss.scalar() == 0.0);
  }
  SUBCASE("orthogonal rows give one for any alpha") {
    Var pred = tape.input({1, 2}, {1.0, 0.0}, true);
    Var target = tape.constant({1, 2}, {0.0, 1.0});
    CHECK(sce_loss(tape, pred, target, {0}, 1.0).scalar() == doctest::Approx(1.0));
    CHECK(sce_loss(tape, pred, target, {0}, 2.0).scalar() == doctest::Approx(1.0));
  }
  SUBCASE("cos 0.5 at alpha 2 gives 0.25") {
    double s = std::sqrt(3.0) / 2.0;
    Var pred = tape.input({1, 2}, {1.0, 0.0}, true);
    Var target = tape.constant({1, 2}, {0.5, s});
    Var loss = sce_loss(tape, pred, target, {0}, 2.0);
    CHECK(loss.scalar() == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("group-weighted batch matches hand computation") {
    // Rows: three null rows with cos=1 (loss 0), one non-null with cos=0.
    Var pred = tape.input({4, 2}, {1, 0, 1, 0, 1, 0, 1, 0}, true);
    Var target = tape.constant({4, 2}, {1, 0, 1, 0, 1, 0, 0, 1});
    Var loss = sce_loss(tape, pred, target, {1, 1, 1, 0}, 2.0);
    // mean(w_g (1-cos)^2) = (0+0+0+ 2*1)/4 = 0.5
    CHECK(loss.scalar() == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("SCE is scale invariant in the targets and bounded") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    Tape tape;
    std::vector<double> p(6), t(6);
    for (auto& v : p) v = rng.normal();
    for (auto& v : t) v = rng.normal();
    std::vector<int> groups = {static_cast<int>(rng.uniform_int(0, 1)),
                               static_cast<int>(rng.uniform_int(0, 1))};
    Var pred = tape.input({2, 3}, p, true);
    Var base = sce_loss(tape, pred, tape.constant({2, 3}, t), groups, 2.0);
    double c = rng.uniform(0.1, 9.0);
    std::vector<double> t_scaled = t;
    for (auto& v : t_scaled) v *= c;
    Var scaled = sce_loss(tape, pred, tape.constant({2, 3}, t_scaled), groups, 2.0);
    CHECK(base.scalar() == doctest::Approx(scaled.scalar()).epsilon(1e-9));

    auto w = group_weights(groups);
    double w_max = std::max(w[0], w[1]);
    CHECK(base.scalar() >= 0.0);
    CHECK(base.scalar() <= w_max * std::pow(2.0, 2.0));
  }
}

TEST_CASE("SCE gradient passes finite differences") {
  Rng rng(33);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    ParamSet ps;
    std::vector<double> p(8), t(8);
    for (auto& v : p) v = rng.normal();
    for (auto& v : t) v = rng.normal();
    ps.add("pred", {2, 4}, p);
    GradFn fn = [&](const ParamSet& params, ParamSet* grads) {
      Tape tape;
      Var pred = tape.input({2, 4}, params.at("pred").value, true);
      Var loss = sce_loss(tape, pred, tape.constant({2, 4}, t), {1, 0}, 2.0);
      if (grads) {
        tape.backward(loss);
        const auto& g = pred.grad();
        for (size_t i = 0; i < g.size(); ++i) grads->at("pred").value[i] += g[i];
      }
      return loss.scalar();
    };
    auto report = grad_check(fn, ps, 1e-5, 1e-4);
    CHECK_MESSAGE(report.pass, "seed ", seed, " err ", report.max_rel_error);
  }
}

TEST_CASE("mask plans never touch missing cells and honor rate 0") {
  RelationalStore store = load_toy_amz();
  EncoderConfig cfg;
  cfg.channels = 8;
  cfg.fanouts = {8, 8};
  Model model(store, cfg, 4);
  MarginalCache marginals(store);
  Rng rng(4);
  SampledSubgraph sg = model.sample_subgraph("1", 12, rng);

  MaskPlan none = make_mask_plan(model, sg, marginals, 0.0, rng);
  CHECK(none.cells.empty());

  int masked_missing = 0;
  for (int trial = 0; trial < 30; ++trial) {
    MaskPlan plan = make_mask_plan(model, sg, marginals, 0.9, rng);
    for (const auto& cell : plan.cells) {
      const Table& t = store.table(cell.table);
      if (t.columns[cell.col].missing[cell.row]) ++masked_missing;
    }
    CHECK(!plan.cells.empty());
  }
  CHECK(masked_missing == 0);
}

TEST_CASE("mae loss: perfect heads give zero numeric term; uniform logits give ln C") {
  // Single-table store with one numeric column makes the term analytic.
  TempDir tmp("mae_fixture");
  std::ofstream(tmp.path() + "/schema.json") << R"({"tables": [
    {"name": "item", "class": "dimension",
     "columns": [{"name": "item_id", "kind": "primary_key"},
                 {"name": "x", "kind": "numeric"},
                 {"name": "kind", "kind": "categorical", "cardinality": 4}]}]})";
  std::ofstream(tmp.path() + "/item.csv") << "item_id,x,kind\na,1,k0\nb,3,k1\nc,5,k2\nd,7,k3\n";
  RelationalStore store = RelationalStore::load(tmp.path() + "/schema.json", tmp.path());
  EncoderConfig cfg;
  cfg.channels = 4;
  cfg.gnn_layers = 1;
  cfg.fanouts = {4};
  Model model(store, cfg, 2);

  Rng rng(7);
  SampledSubgraph sg = model.sample_subgraph(RowRef{0, 0}, 100, rng);
  REQUIRE(sg.node_count() == 1);

  // Zero every parameter: latents become 0, recon heads output biases.
  for (auto& e : model.params().entries()) std::fill(e.value.begin(), e.value.end(), 0.0);
  // Numeric head bias set to the normalized target of row a reconstructs it
  // exactly; categorical head stays uniform (all-zero logits).
  model.params().at("head.recon.item.x.b").value[0] = model.normalized_numeric(0, 1, 0);

  Tape tape;
  Model::Bound bound = model.bind(tape, false);
  MaskPlan no_mask;
  Var loss = mae_loss(model, bound, sg, no_mask);
  // Numeric term 0 + categorical CE = ln 4.
  CHECK(loss.scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("mae loss matches a hand-computed fixture") {
  TempDir tmp("mae_hand");
  std::ofstream(tmp.path() + "/schema.json") << R"({"tables": [
    {"name": "item", "class": "dimension",
     "columns": [{"name": "item_id", "kind": "primary_key"},
                 {"name": "x", "kind": "numeric"}]}]})";
  std::ofstream(tmp.path() + "/item.csv") << "item_id,x\na,2\nb,4\nc,\nd,6\n";
  RelationalStore store = RelationalStore::load(tmp.path() + "/schema.json", tmp.path());
  EncoderConfig cfg;
  cfg.channels = 4;
  cfg.gnn_layers = 1;
  cfg.fanouts = {4};
  Model model(store, cfg, 2);
  for (auto& e : model.params().entries()) std::fill(e.value.begin(), e.value.end(), 0.0);
  model.params().at("head.recon.item.x.b").value[0] = 0.25;

  // One subgraph holding all four rows: rows {a,b,d} present, c missing.
  SampledSubgraph sg;
  sg.cutoff = 100;
  sg.tables.push_back({0, {0, 1, 2, 3}});
  sg.seed_pos = 0;
  sg.seed_local = 0;

  Tape tape;
  Model::Bound bound = model.bind(tape, false);
  MaskPlan no_mask;
  Var loss = mae_loss(model, bound, sg, no_mask);

  // Normalized targets for {2,4,6} with mean 4, population std sqrt(8/3):
  double std = std::sqrt(8.0 / 3.0);
  double t0 = (2.0 - 4.0) / std, t1 = 0.0, t3 = (6.0 - 4.0) / std;
  double expect =
      ((0.25 - t0) * (0.25 - t0) + (0.25 - t1) * (0.25 - t1) + (0.25 - t3) * (0.25 - t3)) / 3.0;
  CHECK(loss.scalar() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("InfoNCE analytic and oracle cases") {
  SUBCASE("identical projections give ln n") {
    Tape tape;
    Var z = tape.input({2, 3}, {0.3, 0.4, 0.5, 0.3, 0.4, 0.5}, true);
    Var loss = infonce_loss(tape, z, z, 1.0);
    CHECK(loss.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("aligned positives with orthogonal negatives beat identical projections") {
    Tape tape;
    Var a = tape.input({2, 2}, {1, 0, 0, 1}, true);
    Var loss = infonce_loss(tape, a, a, 1.0);
    CHECK(loss.scalar() < std::log(2.0));
  }
  SUBCASE("random fixture matches the direct-summation oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      int n = static_cast<int>(rng.uniform_int(2, 6));
      int d = static_cast<int>(rng.uniform_int(2, 5));
      std::vector<std::vector<double>> z1(n, std::vector<double>(d)), z2 = z1;
      std::vector<double> flat1, flat2;
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) {
          z1[i][k] = rng.normal();
          z2[i][k] = rng.normal();
          flat1.push_back(z1[i][k]);
          flat2.push_back(z2[i][k]);
        }
      double tau = rng.uniform(0.1, 1.5);
      Tape tape;
      Var loss = infonce_loss(tape, tape.input({n, d}, flat1, true),
                              tape.input({n, d}, flat2, true), tau);
      CHECK(loss.scalar() == doctest::Approx(oracle_infonce(z1, z2, tau)).epsilon(1e-9));
    }
  }
  SUBCASE("batch of one is rejected") {
    Tape tape;
    Var z = tape.input({1, 3}, {1, 2, 3}, true);
    try {
      infonce_loss(tape, z, z, 1.0);
      FAIL("expected BatchTooSmall");
    } catch (const Error& e) {
      CHECK(e.code() == "BatchTooSmall");
    }
  }
}

TEST_CASE("combined loss arithmetic and gradient") {
  Tape tape;
  Var a = tape.input({1, 1}, {0.5}, true);
  Var b = tape.input({1, 1}, {2.0}, true);
  Var combined = combined_loss(tape, a, b, 0.1);
  CHECK(combined.scalar() == doctest::Approx(0.7));
  Var zero_beta = combined_loss(tape, a, b, 0.0);
  CHECK(zero_beta.scalar() == doctest::Approx(0.5));

  // d combined / d a = 1, d combined / d b = beta; checked by differences.
  ParamSet ps;
  ps.add("a", {1, 1}, {0.5});
  ps.add("b", {1, 1}, {2.0});
  GradFn fn = [](const ParamSet& params, ParamSet* grads) {
    Tape t;
    Var x = t.input({1, 1}, params.at("a").value, true);
    Var y = t.input({1, 1}, params.at("b").value, true);
    Var l = combined_loss(t, t.mul(x, x), t.mul(y, y), 0.1);
    if (grads) {
      t.backward(l);
      grads->at("a").value[0] += x.grad()[0];
      grads->at("b").value[0] += y.grad()[0];
    }
    return l.scalar();
  };
  auto report = grad_check(fn, ps, 1e-6, 1e-6);
  CHECK(report.pass);
}
