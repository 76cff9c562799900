#include "akgan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace akgan {

void SyntheticSpec::validate() const {
  if (users == 0 || items == 0 || relations == 0 || attributes_per_relation == 0)
    throw ConfigError("synth: counts must be positive");
  if (interactions_per_user == 0) throw ConfigError("synth: interactions_per_user must be positive");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw ConfigError("synth: sparsity must be in (0, 1]");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("synth: test_fraction must be in [0, 1)");
  if (bridge && bridge_hubs == 0) throw ConfigError("synth: bridge needs at least one hub");
  if (interactions_per_user > items)
    throw ConfigError("synth: interactions_per_user exceeds the item count");
}

std::size_t SyntheticSpec::preferred_per_user() const {
  const auto k = static_cast<std::size_t>(std::lround(sparsity * static_cast<double>(relations)));
  return std::clamp<std::size_t>(k, 1, relations);
}

EntityId SyntheticWorld::attribute(RelationId m, std::size_t k) const {
  return static_cast<EntityId>(spec.items + m * spec.attributes_per_relation + k);
}

std::size_t SyntheticWorld::matches(UserId u, ItemId i) const {
  std::size_t n = 0;
  for (const Preference& p : preferences[u]) n += item_attributes[i][p.relation] == p.target;
  return n;
}

KnowledgeGraph SyntheticWorld::graph() const {
  return KnowledgeGraph::from_canonical(triples, entity_count, canonical_relations);
}

InteractionSet SyntheticWorld::interactions() const {
  return make_interactions(train, test, spec.items);
}

SyntheticWorld generate_world(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticWorld w;
  w.spec = spec;
  const std::size_t M = spec.relations, P = spec.attributes_per_relation;
  w.canonical_relations = M + (spec.bridge ? 1 : 0);
  w.entity_count = spec.items + M * P + (spec.bridge ? spec.bridge_hubs : 0);
  std::mt19937_64 rng(spec.seed);

  std::uniform_int_distribution<std::size_t> pick_attr(0, P - 1);
  w.item_attributes.assign(spec.items, std::vector<EntityId>(M));
  for (ItemId i = 0; i < spec.items; ++i)
    for (RelationId m = 0; m < M; ++m) {
      const EntityId a = w.attribute(m, pick_attr(rng));
      w.item_attributes[i][m] = a;
      w.triples.push_back({i, m, a});
    }
  if (spec.bridge) {
    const auto hub0 = static_cast<EntityId>(spec.items + M * P);
    std::uniform_int_distribution<std::size_t> pick_hub(0, spec.bridge_hubs - 1);
    for (RelationId m = 0; m < M; ++m)
      for (std::size_t k = 0; k < P; ++k)
        w.triples.push_back({w.attribute(m, k), static_cast<RelationId>(M),
                             static_cast<EntityId>(hub0 + pick_hub(rng))});
  }

  const std::size_t K = spec.preferred_per_user();
  std::vector<RelationId> order(M);
  std::iota(order.begin(), order.end(), 0);
  w.preferences.resize(spec.users);
  w.train.resize(spec.users);
  w.test.resize(spec.users);
  const auto n_test = static_cast<std::size_t>(
      std::floor(spec.test_fraction * static_cast<double>(spec.interactions_per_user)));
  for (UserId u = 0; u < spec.users; ++u) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < K; ++k) w.preferences[u].push_back({order[k], w.attribute(order[k], pick_attr(rng))});
    std::sort(w.preferences[u].begin(), w.preferences[u].end(),
              [](const Preference& a, const Preference& b) { return a.relation < b.relation; });

    std::vector<double> weight(spec.items);
    std::size_t feasible = 0;
    for (ItemId i = 0; i < spec.items; ++i) {
      weight[i] = static_cast<double>(w.matches(u, i));
      feasible += weight[i] > 0.0;
    }
    if (feasible < spec.interactions_per_user)
      throw ConfigError("synth: user " + std::to_string(u) + " matches only " +
                        std::to_string(feasible) + " items, fewer than interactions_per_user");
    std::vector<ItemId> drawn;
    for (std::size_t n = 0; n < spec.interactions_per_user; ++n) {
      std::discrete_distribution<ItemId> pick(weight.begin(), weight.end());
      const ItemId i = pick(rng);
      drawn.push_back(i);
      weight[i] = 0.0;
    }
    // drawn order is random, so the first n_test draws form an unbiased split
    w.test[u].assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(n_test));
    w.train[u].assign(drawn.begin() + static_cast<std::ptrdiff_t>(n_test), drawn.end());
    std::sort(w.train[u].begin(), w.train[u].end());
    std::sort(w.test[u].begin(), w.test[u].end());
  }
  return w;
}

namespace {

void write_lists(const std::filesystem::path& path, const std::vector<std::vector<ItemId>>& lists) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  for (std::size_t u = 0; u < lists.size(); ++u) {
    out << u;
    for (ItemId i : lists[u]) out << ' ' << i;
    out << '\n';
  }
}

}  // namespace

void write_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "kg_final.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + (dir / "kg_final.txt").string());
    for (const Triple& t : world.triples) out << t.head << ' ' << t.relation << ' ' << t.tail << '\n';
  }
  write_lists(dir / "train.txt", world.train);
  write_lists(dir / "test.txt", world.test);
  {
    std::ofstream out(dir / "answer_key.tsv", std::ios::binary | std::ios::trunc);
    out << "user\trelation\ttarget\n";
    for (std::size_t u = 0; u < world.preferences.size(); ++u)
      for (const Preference& p : world.preferences[u]) out << u << '\t' << p.relation << '\t' << p.target << '\n';
  }
  {
    std::ofstream out(dir / "relation_names.tsv", std::ios::binary | std::ios::trunc);
    const std::size_t R = world.canonical_relations;
    for (std::size_t r = 0; r < 2 * R; ++r) {
      const std::size_t c = r % R;
      std::string name = world.is_bridge(static_cast<RelationId>(c)) ? "bridge" : "attr" + std::to_string(c);
      if (r >= R) name += "_of";
      out << r << '\t' << name << '\n';
    }
  }
}

std::vector<std::vector<Preference>> read_answer_key(const std::filesystem::path& path,
                                                     std::size_t user_count) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<std::vector<Preference>> out(user_count);
  std::string line;
  std::getline(in, line);  // header
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t u = 0;
    Preference p;
    if (!(fields >> u >> p.relation >> p.target) || u >= user_count)
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": bad answer-key row");
    out[u].push_back(p);
  }
  return out;
}

}  // namespace akgan
