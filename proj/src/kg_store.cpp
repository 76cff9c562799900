#include "akgan/kg_store.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

namespace akgan {

namespace {

bool g_warnings_enabled = true;

// Splits one line into unsigned integers. Returns false on any non-numeric token.
bool parse_ids(std::string_view line, std::vector<std::uint64_t>& out) {
  out.clear();
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, value);
    if (ec != std::errc() || ptr != line.data() + end) return false;
    out.push_back(value);
    pos = end;
  }
  return true;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return in;
}

std::string at_line(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no) + ": ";
}

void sort_unique(std::vector<ItemId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

void warn(const std::string& message) {
  if (g_warnings_enabled) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings_enabled = enabled; }

KnowledgeGraph KnowledgeGraph::from_canonical(std::span<const Triple> canonical,
                                              std::size_t entity_count,
                                              std::size_t canonical_relation_count) {
  std::vector<Triple> unique(canonical.begin(), canonical.end());
  for (const Triple& t : unique) {
    if (t.head >= entity_count || t.tail >= entity_count)
      throw LoadError("triple entity id out of range");
    if (t.relation >= canonical_relation_count)
      throw LoadError("triple relation id out of range");
  }
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  const auto offset = static_cast<RelationId>(canonical_relation_count);
  std::vector<Triple> directed;
  directed.reserve(2 * unique.size());
  for (const Triple& t : unique) {
    directed.push_back(t);
    directed.push_back({t.tail, t.relation + offset, t.head});
  }
  KnowledgeGraph g = from_directed(std::move(directed), entity_count, canonical_relation_count);
  g.canonical_triples_ = unique.size();
  return g;
}

KnowledgeGraph KnowledgeGraph::from_directed(std::vector<Triple> directed,
                                             std::size_t entity_count,
                                             std::size_t canonical_relation_count) {
  KnowledgeGraph g;
  g.entity_count_ = entity_count;
  g.canonical_relations_ = canonical_relation_count;
  g.edge_counts_.assign(2 * canonical_relation_count, 0);

  std::sort(directed.begin(), directed.end(), [](const Triple& a, const Triple& b) {
    if (a.tail != b.tail) return a.tail < b.tail;
    if (a.relation != b.relation) return a.relation < b.relation;
    return a.head < b.head;
  });
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  g.group_ptr_.assign(entity_count + 1, 0);
  g.group_relation_.clear();
  g.group_begin_.clear();
  g.heads_.clear();
  g.heads_.reserve(directed.size());

  std::size_t k = 0;
  std::size_t canonical = 0;
  for (std::size_t i = 0; i < entity_count; ++i) {
    g.group_ptr_[i] = g.group_relation_.size();
    while (k < directed.size() && directed[k].tail == i) {
      const RelationId r = directed[k].relation;
      if (r >= 2 * canonical_relation_count) throw LoadError("relation id out of range");
      g.group_relation_.push_back(r);
      g.group_begin_.push_back(g.heads_.size());
      while (k < directed.size() && directed[k].tail == i && directed[k].relation == r) {
        if (directed[k].head >= entity_count) throw LoadError("entity id out of range");
        g.heads_.push_back(directed[k].head);
        ++g.edge_counts_[r];
        if (r < canonical_relation_count) ++canonical;
        ++k;
      }
    }
  }
  if (k != directed.size()) throw LoadError("entity id out of range");
  g.group_ptr_[entity_count] = g.group_relation_.size();
  g.group_begin_.push_back(g.heads_.size());
  g.canonical_triples_ = canonical;
  return g;
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId i, RelationId r) const {
  AKGAN_EXPECT(i < entity_count_, "neighbors: entity out of range");
  AKGAN_EXPECT(r < relation_count(), "neighbors: relation out of range");
  const auto first = group_relation_.begin() + static_cast<std::ptrdiff_t>(group_ptr_[i]);
  const auto last = group_relation_.begin() + static_cast<std::ptrdiff_t>(group_ptr_[i + 1]);
  const auto it = std::lower_bound(first, last, r);
  if (it == last || *it != r) return {};
  const auto g = static_cast<std::size_t>(it - group_relation_.begin());
  return {heads_.data() + group_begin_[g], group_begin_[g + 1] - group_begin_[g]};
}

std::vector<Triple> KnowledgeGraph::directed_triples() const {
  std::vector<Triple> out;
  out.reserve(heads_.size());
  for (EntityId i = 0; i < entity_count_; ++i) {
    for_each_group(i, [&](RelationId r, std::span<const EntityId> heads) {
      for (EntityId j : heads) out.push_back({j, r, i});
    });
  }
  return out;
}

std::vector<Triple> read_triples(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::vector<Triple> triples;
  std::vector<std::uint64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!parse_ids(line, ids)) throw LoadError(at_line(path, line_no) + "malformed line");
    if (ids.empty()) continue;
    if (ids.size() != 3)
      throw LoadError(at_line(path, line_no) + "expected `head relation tail`");
    constexpr std::uint64_t kMax = 0xFFFFFFFFu;
    if (ids[0] > kMax || ids[1] > kMax || ids[2] > kMax)
      throw LoadError(at_line(path, line_no) + "id out of range");
    triples.push_back({static_cast<EntityId>(ids[0]), static_cast<RelationId>(ids[1]),
                       static_cast<EntityId>(ids[2])});
  }
  return triples;
}

KnowledgeGraph load_kg(const std::filesystem::path& path, std::size_t entity_count,
                       std::size_t canonical_relation_count) {
  const std::vector<Triple> triples = read_triples(path);
  std::size_t max_entity = 0;
  std::size_t max_relation = 0;
  for (std::size_t n = 0; n < triples.size(); ++n) {
    const Triple& t = triples[n];
    max_entity = std::max<std::size_t>({max_entity, t.head + 1ull, t.tail + 1ull});
    max_relation = std::max<std::size_t>(max_relation, t.relation + 1ull);
    if (entity_count != 0 && (t.head >= entity_count || t.tail >= entity_count))
      throw LoadError(at_line(path, n + 1) + "entity id out of range (|E| = " +
                      std::to_string(entity_count) + ")");
    if (canonical_relation_count != 0 && t.relation >= canonical_relation_count)
      throw LoadError(at_line(path, n + 1) + "relation id out of range (canonical |R| = " +
                      std::to_string(canonical_relation_count) + ")");
  }
  if (entity_count == 0) entity_count = max_entity;
  if (canonical_relation_count == 0) canonical_relation_count = max_relation;
  return KnowledgeGraph::from_canonical(triples, entity_count, canonical_relation_count);
}

std::size_t InteractionSet::train_interaction_count() const {
  std::size_t n = 0;
  for (const auto& items : train) n += items.size();
  return n;
}

std::size_t InteractionSet::test_interaction_count() const {
  std::size_t n = 0;
  for (const auto& items : test) n += items.size();
  return n;
}

bool InteractionSet::has_train(UserId u, ItemId i) const {
  return std::binary_search(train[u].begin(), train[u].end(), i);
}

InteractionSet make_interactions(std::vector<std::vector<ItemId>> train,
                                 std::vector<std::vector<ItemId>> test, std::size_t item_count) {
  InteractionSet set;
  set.user_count = std::max(train.size(), test.size());
  train.resize(set.user_count);
  test.resize(set.user_count);
  std::size_t max_item = 0;
  for (auto* lists : {&train, &test}) {
    for (auto& items : *lists) {
      sort_unique(items);
      if (!items.empty()) max_item = std::max<std::size_t>(max_item, items.back() + 1ull);
    }
  }
  if (item_count == 0) item_count = max_item;
  if (max_item > item_count)
    throw LoadError("item id " + std::to_string(max_item - 1) + " >= |I| = " +
                    std::to_string(item_count));
  set.item_count = item_count;

  std::size_t overlaps = 0;
  for (UserId u = 0; u < set.user_count; ++u) {
    auto& t = test[u];
    const auto before = t.size();
    std::erase_if(t, [&](ItemId i) { return std::binary_search(train[u].begin(), train[u].end(), i); });
    overlaps += before - t.size();
    if (train[u].empty()) set.cold_users.push_back(u);
  }
  if (overlaps > 0)
    warn(std::to_string(overlaps) + " test interactions also present in train were dropped");
  if (!set.cold_users.empty())
    warn(std::to_string(set.cold_users.size()) + " user(s) have no training interactions");
  set.train = std::move(train);
  set.test = std::move(test);
  return set;
}

namespace {

std::vector<std::vector<ItemId>> read_user_lists(const std::filesystem::path& path,
                                                 std::size_t item_count) {
  std::ifstream in = open_or_throw(path);
  std::vector<std::vector<ItemId>> lists;
  std::vector<std::uint64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!parse_ids(line, ids)) throw LoadError(at_line(path, line_no) + "malformed line");
    if (ids.empty()) continue;
    if (ids[0] > 0xFFFFFFFFu) throw LoadError(at_line(path, line_no) + "user id out of range");
    const auto u = static_cast<std::size_t>(ids[0]);
    if (lists.size() <= u) lists.resize(u + 1);
    for (std::size_t k = 1; k < ids.size(); ++k) {
      if ((item_count != 0 && ids[k] >= item_count) || ids[k] > 0xFFFFFFFFu)
        throw LoadError(at_line(path, line_no) + "item id " + std::to_string(ids[k]) +
                        " out of range");
      lists[u].push_back(static_cast<ItemId>(ids[k]));
    }
  }
  return lists;
}

}  // namespace

InteractionSet load_interactions(const std::filesystem::path& train_path,
                                 const std::filesystem::path& test_path,
                                 std::size_t item_count) {
  return make_interactions(read_user_lists(train_path, item_count),
                           read_user_lists(test_path, item_count), item_count);
}

void check_items_prefix(const KnowledgeGraph& g, const InteractionSet& data) {
  if (data.item_count > g.entity_count())
    throw LoadError("items must be a prefix of entities: |I| = " +
                    std::to_string(data.item_count) + " > |E| = " +
                    std::to_string(g.entity_count()));
}

}  // namespace akgan
