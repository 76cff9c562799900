#include "doctest.h"

#include <random>

#include "akgan/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace akgan;

TEST_CASE("rank_items: order, ties and exclusion") {
  const std::vector<double> scores = {0.1, 0.9, 0.5};
  CHECK(rank_items(scores, {}, 2).items == std::vector<ItemId>{1, 2});
  const std::vector<ItemId> train = {1};
  CHECK(rank_items(scores, train, 2).items == std::vector<ItemId>{2, 0});
  const std::vector<double> tied = {0.5, 0.5, 0.7, 0.5};
  CHECK(rank_items(tied, {}, 3).items == std::vector<ItemId>{2, 0, 1});
  const auto short_list = rank_items(scores, train, 5);
  CHECK(short_list.truncated);
  CHECK(short_list.items.size() == 2);
  CHECK_THROWS_AS(rank_items(scores, {}, 0), ContractViolation);
}

TEST_CASE("recall and ndcg closed forms") {
  const std::vector<ItemId> topk = {1, 2, 3};
  const std::vector<ItemId> test = {2, 9};
  CHECK(*recall_at_k(topk, test) == 0.5);
  CHECK(*recall_at_k(topk, std::vector<ItemId>{1, 2, 3}) == 1.0);
  CHECK_FALSE(recall_at_k(topk, {}).has_value());
  CHECK_FALSE(ndcg_at_k(topk, {}, 3).has_value());
  CHECK(*ndcg_at_k(topk, std::vector<ItemId>{1}, 3) == 1.0);
  CHECK(*ndcg_at_k(topk, std::vector<ItemId>{2}, 3) == doctest::Approx(0.6309297535714575).epsilon(1e-15));
  // hits at ranks 1 and 3 of two test items
  CHECK(*ndcg_at_k(topk, std::vector<ItemId>{1, 3}, 3) == doctest::Approx((1.0 + 0.5) / (1.0 + 0.6309297535714575)));
  // IDCG truncates at K
  std::vector<ItemId> many(30);
  for (ItemId i = 0; i < 30; ++i) many[i] = i;
  CHECK(*ndcg_at_k(topk, many, 3) == doctest::Approx(1.0));
}

TEST_CASE("metrics match a brute-force oracle on random instances") {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t items = 5 + rng() % 60;
    std::vector<double> scores(items);
    // coarse scores force ties
    std::uniform_int_distribution<int> level(0, 9);
    for (double& s : scores) s = level(rng) / 10.0;
    std::set<ItemId> train_set, test_set;
    for (ItemId i = 0; i < items; ++i) {
      const auto r = rng() % 10;
      if (r < 2) train_set.insert(i);
      else if (r < 4) test_set.insert(i);
    }
    if (test_set.empty()) continue;
    const std::vector<ItemId> train(train_set.begin(), train_set.end());
    const std::vector<ItemId> test(test_set.begin(), test_set.end());
    for (std::size_t K : {1, 5, 20}) {
      const auto expected = oracle::full_sort_topk(scores, train_set, K);
      const TopK got = rank_items(scores, train, K);
      CHECK(got.items == expected);
      for (ItemId i : got.items) CHECK_FALSE(train_set.count(i));
      CHECK(*recall_at_k(got.items, test) == oracle::recall(expected, test_set));
      CHECK(*ndcg_at_k(got.items, test, K) == oracle::ndcg(expected, test_set, K));
    }
  }
}

TEST_CASE("evaluate: perfect model, null model, skipped users") {
  ModelSpec spec;
  spec.attention = false;
  spec.layers = 0;

  // 50 items, each with its own one-hot-like attribute entity; a perfect
  // user vector points at its test items.
  const std::size_t items = 50;
  std::vector<Triple> triples;
  for (EntityId i = 0; i < items; ++i) triples.push_back({static_cast<EntityId>(items + i), 0, i});
  const KnowledgeGraph g = KnowledgeGraph::from_canonical(triples, 2 * items, 1);
  spec.layout = build_layout({static_cast<int>(items), static_cast<int>(items)});
  ParameterStore p = init_params(spec.layout, 2 * items, 3, 1);
  for (auto& t : p.entity_blocks) std::fill(t.data.begin(), t.data.end(), 0.0);
  for (EntityId i = 0; i < items; ++i) p.entity_blocks[0].at(items + i, i) = 1.0;
  std::fill(p.user_vecs.data.begin(), p.user_vecs.data.end(), 0.0);
  testutil::QuietWarnings quiet;
  const InteractionSet data = make_interactions({{0, 1}, {5}, {7}}, {{3, 4}, {}, {8, 9, 10}}, items);
  for (ItemId i : data.test[0]) p.user_vecs.at(0, i) = 10.0;
  for (ItemId i : data.test[2]) p.user_vecs.at(2, i) = 10.0;
  const RankingResult r = evaluate(spec, p, g, data, 20);
  CHECK(r.users.size() == 2);  // user 1 has no test items
  CHECK(r.recall == 1.0);
  CHECK(r.ndcg == doctest::Approx(1.0));

  // a single test item ranked second
  std::fill(p.user_vecs.data.begin(), p.user_vecs.data.end(), 0.0);
  p.user_vecs.at(0, 3) = 5.0;
  p.user_vecs.at(0, 4) = 5.0;
  p.user_vecs.at(0, 2) = 9.0;
  const InteractionSet one = make_interactions({{0}}, {{3}}, items);
  const RankingResult second = evaluate(spec, p, g, one, 20);
  CHECK(second.recall == 1.0);
  CHECK(second.ndcg == doctest::Approx(0.6309297535714575).epsilon(1e-15));
}

TEST_CASE("evaluate: random embeddings give the null-model recall") {
  std::mt19937_64 rng(31);
  const std::size_t items = 200, users = 400;
  std::vector<Triple> triples;
  for (EntityId i = 0; i < items; ++i) triples.push_back({static_cast<EntityId>(items + i % 10), 0, i});
  const KnowledgeGraph g = KnowledgeGraph::from_canonical(triples, items + 10, 1);
  ModelSpec spec;
  spec.layout = build_layout({8, 8});
  spec.attention = false;
  spec.layers = 0;
  std::vector<std::vector<ItemId>> train(users), test(users);
  for (auto& t : test)
    for (int n = 0; n < 5; ++n) t.push_back(static_cast<ItemId>(rng() % items));
  testutil::QuietWarnings quiet;
  const InteractionSet data = make_interactions(train, test, items);
  // each user scores items with independent random vectors, so ranks are uniform
  ParameterStore p = init_params(spec.layout, items + 10, users, 5);
  for (auto& t : p.entity_blocks)
    for (double& x : t.data) x = std::normal_distribution<double>()(rng);
  double expected = 0.0;
  double sum = 0.0, sq = 0.0;
  const RankingResult r = evaluate(spec, p, g, data, 20);
  for (const auto& u : r.users) {
    expected += 20.0 / items;
    sum += u.recall;
    sq += u.recall * u.recall;
  }
  const double n = static_cast<double>(r.users.size());
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  // items share 10 attribute embeddings, so correlated scores widen the spread
  CHECK(std::abs(mean - expected / n) < 4.0 * se + 0.02);
}

TEST_CASE("metrics tsv") {
  const auto dir = testutil::scratch_dir("metrics");
  RankingResult r;
  r.k = 20;
  r.recall = 0.25;
  r.ndcg = 0.125;
  r.users.push_back({3, {1, 2}, 0.25, 0.125});
  write_metrics_tsv(dir / "m.tsv", r);
  CHECK(testutil::read_file(dir / "m.tsv") == "metric\tK\tvalue\tusers\nrecall\t20\t0.25\t1\nndcg\t20\t0.125\t1\n");
  write_per_user_tsv(dir / "u.tsv", r);
  CHECK(testutil::read_file(dir / "u.tsv") == "user\trecall\tndcg\ttopk\n3\t0.25\t0.125\t1,2\n");
}
