#include "doctest.h"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "akgan/synthetic.hpp"
#include "akgan/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace akgan;

namespace {

// 8 items, 22 other entities, 3 canonical relations, 4 users.
struct Fixture {
  KnowledgeGraph graph;
  InteractionSet data;
};

Fixture small_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto triples = oracle::random_triples(rng, 30, 3, 70);
  // make sure every item has at least one attribute
  for (EntityId i = 0; i < 8; ++i) triples.push_back({8 + i, i % 3, i});
  testutil::QuietWarnings quiet;
  Fixture f{KnowledgeGraph::from_canonical(triples, 30, 3),
            make_interactions({{0, 2, 5}, {1, 3}, {4, 6, 7, 0}, {5}}, {{1}, {0}, {2}, {6}}, 8)};
  return f;
}

std::vector<std::pair<std::size_t, std::size_t>> touched_entries(const GradientStore& grads,
                                                                 const ParameterStore& params) {
  std::vector<std::pair<std::size_t, std::size_t>> out;  // (table, flat index)
  for (std::size_t t = 0; t < grads.tables.size(); ++t)
    for (std::uint32_t r : grads.tables[t].touched())
      for (std::size_t k = 0; k < params.table(t).cols; ++k) out.push_back({t, r * params.table(t).cols + k});
  return out;
}

void check_gradient(Variant variant, int layers, double l2, RegularizationScope scope,
                    std::uint64_t seed) {
  Fixture f = small_fixture(seed);
  const ModelSpec spec = make_model_spec(variant, f.graph, DimensionSchedule{2, 4, 10}, 1.0, layers);
  ParameterStore params = init_model_params(spec, 30, 4, seed + 1);
  // larger user vectors keep the interest ratios away from the gate
  for (double& x : params.user_vecs.data) x *= 3.0;
  const ItemBlockMeans means = forward_pass(spec, params, f.graph, 8).means;
  const std::vector<TrainTriple> batch = {{0, 2, 3}, {1, 1, 7}, {2, 6, 5}, {0, 5, 1}};
  const ModelState state{spec, f.graph, f.data, params, means, l2, scope};

  GradientStore grads(params);
  const double loss = gradients(batch, state, grads);
  CHECK(loss == doctest::Approx(bpr_loss(batch, state)).epsilon(1e-12));

  auto entries = touched_entries(grads, params);
  std::mt19937_64 rng(seed + 2);
  std::shuffle(entries.begin(), entries.end(), rng);
  if (entries.size() > 150) entries.resize(150);
  REQUIRE(entries.size() >= 100);
  int bad = 0;
  for (const auto& [t, flat] : entries) {
    double* x = &params.table(t).data[flat];
    const double numeric = oracle::central_difference([&] { return bpr_loss(batch, state); }, x, 1e-5);
    const std::size_t cols = params.table(t).cols;
    const double analytic = grads.tables[t].find(static_cast<std::uint32_t>(flat / cols))[flat % cols];
    if (oracle::relative_error(analytic, numeric) >= 1e-4) {
      ++bad;
      MESSAGE("table " << t << " entry " << flat << ": analytic " << analytic << " numeric " << numeric);
    }
  }
  CHECK(bad == 0);

  if (scope == RegularizationScope::full) return;
  // entries outside the touched set have zero derivative
  std::size_t probed = 0;
  for (std::size_t t = 0; t < params.table_count() && probed < 20; ++t)
    for (std::uint32_t r = 0; r < params.table(t).rows && probed < 20; ++r) {
      if (grads.tables[t].contains(r)) continue;
      double* x = &params.table(t).data[r * params.table(t).cols];
      CHECK(oracle::central_difference([&] { return bpr_loss(batch, state); }, x, 1e-5) == 0.0);
      ++probed;
    }
}

}  // namespace

TEST_CASE("gradient matches central finite differences") {
  SUBCASE("attentive, two layers, batch l2") { check_gradient(Variant::akgan, 2, 1e-2, RegularizationScope::batch, 10); }
  SUBCASE("attentive, three layers") { check_gradient(Variant::akgan, 3, 0.0, RegularizationScope::batch, 20); }
  SUBCASE("attentive, one layer, full l2") { check_gradient(Variant::akgan, 1, 1e-2, RegularizationScope::full, 30); }
  SUBCASE("plain user representation") { check_gradient(Variant::noatt, 2, 1e-3, RegularizationScope::batch, 40); }
  SUBCASE("mean combination") { check_gradient(Variant::mean, 2, 1e-3, RegularizationScope::batch, 50); }
  SUBCASE("sum combination") { check_gradient(Variant::sum, 2, 1e-3, RegularizationScope::batch, 60); }
}

TEST_CASE("gradient sparsity: untouched rows are absent") {
  Fixture f = small_fixture(3);
  const ModelSpec spec = make_model_spec(Variant::akgan, f.graph, DimensionSchedule{2, 4, 10}, 0.5, 1);
  const ParameterStore params = init_model_params(spec, 30, 4, 4);
  const ItemBlockMeans means = forward_pass(spec, params, f.graph, 8).means;
  const std::vector<TrainTriple> batch = {{3, 5, 2}};
  const ModelState state{spec, f.graph, f.data, params, means, 1e-3};
  GradientStore grads(params);
  gradients(batch, state, grads);
  // only user 3 is touched in the user table
  CHECK(grads.tables[params.user_table()].touched() == std::vector<std::uint32_t>{3});
  // entity rows touched are exactly the receptive field of {5, 2} under one layer
  ReceptiveField field(f.graph, std::vector<EntityId>{5, 2}, 1);
  std::size_t count = 0;
  for (std::size_t t = 0; t < params.user_table(); ++t) count += grads.tables[t].touched().size();
  CHECK(count == field.parameter_entries().size());
  for (const auto& [r, j] : field.parameter_entries()) CHECK(grads.tables[r].contains(j));
}

TEST_CASE("pairwise loss: tie, saturation, recomputation") {
  CHECK(neg_log_sigmoid(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(neg_log_sigmoid(800.0) == 0.0);
  CHECK(neg_log_sigmoid(-800.0) == doctest::Approx(800.0));
  CHECK(std::isfinite(neg_log_sigmoid(-1e300)));
  for (double x : {-30.0, -2.0, -0.1, 0.3, 5.0, 30.0})
    CHECK(neg_log_sigmoid(x) == doctest::Approx(-std::log(1.0 / (1.0 + std::exp(-x)))).epsilon(1e-12));

  // tie: positive and negative share their representation
  Fixture f = small_fixture(8);
  const ModelSpec spec = make_model_spec(Variant::noatt, f.graph, DimensionSchedule{2, 4, 10}, 0.5, 1);
  ParameterStore params = init_model_params(spec, 30, 4, 9);
  for (auto& t : params.entity_blocks) std::fill(t.data.begin(), t.data.end(), 0.1);
  const ItemBlockMeans none;
  std::vector<TrainTriple> tie;
  // items with identical neighborhoods score identically; pick two items whose
  // representations coincide under constant tables
  const auto pass = forward_pass(spec, params, f.graph, 8);
  for (ItemId a = 0; a < 8 && tie.empty(); ++a)
    for (ItemId b = 0; b < 8 && tie.empty(); ++b) {
      if (a == b || std::binary_search(f.data.train[1].begin(), f.data.train[1].end(), b)) continue;
      if (!std::binary_search(f.data.train[1].begin(), f.data.train[1].end(), a)) continue;
      const auto x = pass.items.item(a), y = pass.items.item(b);
      if (std::equal(x.begin(), x.end(), y.begin())) tie.push_back({1, a, b});
    }
  if (!tie.empty()) {
    const ModelState state{spec, f.graph, f.data, params, none, 0.0};
    CHECK(pairwise_loss(tie, state) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }

  // three-triple recomputation from full-graph representations
  params = init_model_params(spec, 30, 4, 11);
  const auto p2 = forward_pass(spec, params, f.graph, 8);
  const std::vector<TrainTriple> three = {{0, 0, 1}, {2, 7, 3}, {3, 5, 0}};
  double expected = 0.0;
  for (const auto& t : three) {
    const auto u = user_representation(t.user, spec, params, f.data, p2);
    const double diff = score(u, p2.items.item(t.positive)) - score(u, p2.items.item(t.negative));
    expected += std::log1p(std::exp(-diff));
  }
  const ModelState state{spec, f.graph, f.data, params, none, 0.0};
  CHECK(pairwise_loss(three, state) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(bpr_loss(three, state) >= 0.0);

  // saturated pair: gradients vanish
  ParameterStore big = params;
  for (double& x : big.user_vecs.data) x *= 1e4;
  for (auto& t : big.entity_blocks)
    for (double& x : t.data) x *= 1e2;
  const auto pb = forward_pass(spec, big, f.graph, 8);
  const auto ub = user_representation(0, spec, big, f.data, pb);
  ItemId hi = 1, lo = 1;
  for (ItemId i = 1; i < 8; ++i) {
    if (std::binary_search(f.data.train[0].begin(), f.data.train[0].end(), i)) continue;
    if (score(ub, pb.items.item(i)) < score(ub, pb.items.item(lo))) lo = i;
  }
  (void)hi;
  const std::vector<TrainTriple> sat = {{0, 0, lo}};
  const ModelState sstate{spec, f.graph, f.data, big, none, 0.0};
  if (score(ub, pb.items.item(0)) - score(ub, pb.items.item(lo)) > 50.0) {
    GradientStore grads(big);
    gradients(sat, sstate, grads);
    for (const auto& t : grads.tables)
      for (std::uint32_t r : t.touched())
        for (double g : t.find(r)) CHECK(std::abs(g) < 1e-8);
  }
}

TEST_CASE("negative sampling") {
  testutil::QuietWarnings quiet;
  const InteractionSet forced = make_interactions({{0, 1}}, {{}}, 3);
  std::mt19937_64 rng(1);
  for (const auto& t : sample_batch(forced, 200, rng)) {
    CHECK(t.negative == 2);
    CHECK((t.positive == 0 || t.positive == 1));
  }

  // user with every item is skipped
  const InteractionSet full = make_interactions({{0, 1, 2}}, {{}}, 3);
  CHECK(sample_batch(full, 10, rng).empty());

  // uniformity over the 10 non-interacted items: chi-square, df 9, alpha 0.01
  const InteractionSet data = make_interactions({{0, 3, 7, 11, 12}}, {{}}, 15);
  std::map<ItemId, int> counts;
  const int draws = 100000;
  for (const auto& t : sample_batch(data, draws, rng)) {
    CHECK_FALSE(std::binary_search(data.train[0].begin(), data.train[0].end(), t.negative));
    ++counts[t.negative];
  }
  CHECK(counts.size() == 10);
  double chi2 = 0.0;
  const double expected = draws / 10.0;
  for (const auto& [item, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 21.665994);

  // positives uniform over observed pairs
  const InteractionSet two = make_interactions({{0}, {1, 2, 3}}, {{}, {}}, 5);
  int user0 = 0;
  for (const auto& t : sample_batch(two, 40000, rng)) user0 += t.user == 0;
  CHECK(std::abs(user0 / 40000.0 - 0.25) < 0.015);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged and decays moments") {
    const AttributeLayout layout = build_layout({2, 2});
    ParameterStore p = init_params(layout, 3, 1, 1);
    const ParameterStore before = p;
    AdamState state(p);
    GradientStore g(p);
    g.tables[0].row(1)[0] = 1.0;
    adam_step(p, g, state, 1e-2);
    const double m1 = state.first_moment(0, 1)[0];
    CHECK(m1 == doctest::Approx(0.1));
    const ParameterStore after_one = p;
    g.clear();
    g.tables[0].row(1);  // present with zeros
    adam_step(p, g, state, 1e-2);
    CHECK(state.first_moment(0, 1)[0] == doctest::Approx(0.9 * m1));
    CHECK(p.entity_blocks[0].at(1, 1) == after_one.entity_blocks[0].at(1, 1));
    CHECK(state.steps(0, 1) == 2);
    CHECK_FALSE(state.allocated(0, 0));
    // rows never touched keep their values
    CHECK(p.entity_blocks[1] == before.entity_blocks[1]);
  }
  SUBCASE("scalar quadratic converges") {
    const AttributeLayout layout = build_layout({1});
    ParameterStore p = init_params(layout, 1, 1, 1);
    double& x = p.entity_blocks[0].data[0];
    x = 3.0;
    AdamState state(p);
    GradientStore g(p);
    int steps = 0;
    for (; steps < 2000 && x * x >= 1e-6; ++steps) {
      g.clear();
      g.tables[0].row(0)[0] = 2.0 * x;
      adam_step(p, g, state, 1e-2);
    }
    CHECK(x * x < 1e-6);
    CHECK(steps < 2000);
  }
  SUBCASE("non-finite gradient aborts before any update") {
    const AttributeLayout layout = build_layout({2});
    ParameterStore p = init_params(layout, 2, 1, 1);
    const ParameterStore before = p;
    AdamState state(p);
    GradientStore g(p);
    g.tables[0].row(0)[0] = 1.0;
    g.tables[0].row(1)[1] = std::nan("");
    CHECK_THROWS_AS(adam_step(p, g, state, 1e-2), NumericError);
    CHECK(p.entity_blocks[0] == before.entity_blocks[0]);
    CHECK_FALSE(state.allocated(0, 0));
  }
}

TEST_CASE("node dropout") {
  std::mt19937_64 rng(5);
  const auto triples = oracle::random_triples(rng, 200, 4, 2000);
  const KnowledgeGraph g = KnowledgeGraph::from_canonical(triples, 200, 4);
  CHECK(node_dropout(g, 0.0, rng) == g);
  CHECK_THROWS_AS(node_dropout(g, 1.0, rng), ContractViolation);

  // masked fraction: an entity is masked iff none of its outgoing edges survive
  std::vector<std::size_t> out_degree(200);
  for (const Triple& t : g.directed_triples()) ++out_degree[t.head];
  double masked = 0.0, eligible = 0.0;
  for (int epoch = 0; epoch < 50; ++epoch) {
    const KnowledgeGraph view = node_dropout(g, 0.3, rng);
    std::vector<std::size_t> kept(200);
    for (const Triple& t : view.directed_triples()) ++kept[t.head];
    for (EntityId e = 0; e < 200; ++e) {
      if (out_degree[e] == 0) continue;
      eligible += 1.0;
      if (kept[e] == 0) masked += 1.0;
      else CHECK(kept[e] == out_degree[e]);
    }
  }
  CHECK(std::abs(masked / eligible - 0.3) < 0.02);

  // every neighbor of (0, r) masked -> block falls back to zero
  const std::vector<Triple> star = {{1, 0, 0}, {2, 0, 0}, {3, 1, 0}};
  const KnowledgeGraph s = KnowledgeGraph::from_canonical(star, 4, 2);
  std::vector<Triple> kept;
  for (const Triple& t : s.directed_triples())
    if (t.head != 1 && t.head != 2) kept.push_back(t);
  const KnowledgeGraph view = KnowledgeGraph::from_directed(kept, 4, 2);
  const AttributeLayout layout = build_layout({2, 2, 2, 2});
  const ParameterStore p = init_params(layout, 4, 1, 2);
  const auto e0 = attribute_modeling(p, view, layout);
  for (double x : slice(e0.reps.row(0), 0, layout)) CHECK(x == 0.0);
  CHECK(slice(e0.reps.row(0), 1, layout)[0] == p.entity_blocks[1].at(3, 0));
}

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.l2 = 1e-4;
  c.temperature = 0.5;
  c.layers = 2;
  c.batch_size = 8;
  c.max_epochs = 6;
  c.patience = 100;
  c.seed = 77;
  c.schedule = DimensionSchedule{2, 6, 10};
  return c;
}

}  // namespace

TEST_CASE("trainer: loss decreases, determinism, resume") {
  SyntheticSpec world_spec;
  world_spec.users = 120;
  world_spec.items = 90;
  world_spec.relations = 4;
  world_spec.attributes_per_relation = 3;
  world_spec.sparsity = 0.25;
  world_spec.interactions_per_user = 10;
  world_spec.seed = 4;
  const SyntheticWorld world = generate_world(world_spec);
  const Fixture f{world.graph(), world.interactions()};
  testutil::QuietWarnings quiet;
  TrainConfig config = quick_config();
  config.batch_size = 64;
  config.learning_rate = 3e-3;

  Trainer a(config, f.graph, f.data);
  std::vector<double> losses;
  for (int e = 0; e < 5; ++e) losses.push_back(a.run_epoch().mean_loss);
  for (std::size_t e = 1; e < losses.size(); ++e) CHECK(losses[e] < losses[e - 1]);

  Trainer b(config, f.graph, f.data);
  for (int e = 0; e < 5; ++e) b.run_epoch();
  CHECK(a.params() == b.params());

  // resume after three epochs
  const auto dir = testutil::scratch_dir("resume");
  Trainer c(config, f.graph, f.data);
  for (int e = 0; e < 3; ++e) c.run_epoch();
  c.save_state(dir / "state.bin");
  Trainer d(config, f.graph, f.data);
  d.load_state(dir / "state.bin");
  CHECK(d.epoch() == 3);
  CHECK(d.run_epoch().mean_loss == losses[3]);
  CHECK(d.run_epoch().mean_loss == losses[4]);
  CHECK(d.params() == a.params());

  testutil::write_file(dir / "junk.bin", "NOTSTATE");
  CHECK_THROWS_AS(d.load_state(dir / "junk.bin"), LoadError);
}

TEST_CASE("trainer: early stopping keeps the best parameters") {
  Fixture f = small_fixture(22);
  testutil::QuietWarnings quiet;
  TrainConfig config = quick_config();
  config.max_epochs = 40;
  config.patience = 3;
  const TrainResult r = train(config, f.graph, f.data);
  CHECK(r.log.size() <= 40);
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& e : r.log)
    if (e.recall > best) {
      best = e.recall;
      best_epoch = e.epoch;
    }
  CHECK(r.best_epoch == best_epoch);
  if (r.log.size() < 40) CHECK(static_cast<int>(r.log.size()) - best_epoch == 3);
  const RankingResult again = evaluate(r.spec, r.best_params, f.graph, f.data, 20);
  CHECK(again.recall == best);
}

TEST_CASE("trainer: stays finite over many steps with dropout") {
  Fixture f = small_fixture(23);
  testutil::QuietWarnings quiet;
  TrainConfig config = quick_config();
  config.node_dropout = 0.2;
  config.batch_size = 4;
  config.max_epochs = 1000;
  config.max_batches_per_epoch = 1;
  config.patience = 1000000;
  Trainer t(config, f.graph, f.data);
  for (int e = 0; e < 1000; ++e) CHECK(std::isfinite(t.run_epoch().mean_loss));
  CHECK(t.params().all_finite());
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.node_dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.l2 = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(TrainConfig{}.learning_rate == 1e-4);
  CHECK(TrainConfig{}.batch_size == 1024);
  CHECK(TrainConfig{}.patience == 10);
}
