#pragma once

// Knowledge graph and interaction storage.
//
// The graph is indexed by tail entity: for every entity i the heads j of all
// triples (j, r, i) are stored grouped by relation r and sorted by head id,
// which is exactly the neighbor set N_i^r used by the aggregation layers.
// Inverse relations are materialized at construction with id r + R_canonical.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "akgan/common.hpp"

namespace akgan {

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Builds the graph from canonical triples. Duplicates are removed and
  /// the inverse of every triple is added. Throws LoadError on ids out of
  /// range.
  static KnowledgeGraph from_canonical(std::span<const Triple> canonical,
                                       std::size_t entity_count,
                                       std::size_t canonical_relation_count);

  /// Builds the graph from already-directed triples (canonical and inverse
  /// ids alike). Used for masked views; no inverse augmentation happens.
  static KnowledgeGraph from_directed(std::vector<Triple> directed, std::size_t entity_count,
                                      std::size_t canonical_relation_count);

  std::size_t entity_count() const { return entity_count_; }
  std::size_t canonical_relation_count() const { return canonical_relations_; }
  std::size_t relation_count() const { return 2 * canonical_relations_; }
  std::size_t canonical_triple_count() const { return canonical_triples_; }
  std::size_t triple_count() const { return heads_.size(); }

  RelationId inverse(RelationId r) const {
    AKGAN_EXPECT(r < relation_count(), "inverse: relation out of range");
    return r < canonical_relations_ ? r + static_cast<RelationId>(canonical_relations_)
                                    : r - static_cast<RelationId>(canonical_relations_);
  }

  /// Directed edge count per relation id (canonical and inverse separately).
  const std::vector<std::size_t>& edge_counts() const { return edge_counts_; }

  /// Sorted heads j with (j, r, i) in the graph; empty when the attribute is absent.
  std::span<const EntityId> neighbors(EntityId i, RelationId r) const;

  /// Calls fn(relation, heads) for every nonempty relation group of entity i,
  /// in ascending relation order.
  template <class Fn>
  void for_each_group(EntityId i, Fn&& fn) const {
    for (std::size_t g = group_ptr_[i]; g < group_ptr_[i + 1]; ++g) {
      fn(group_relation_[g],
         std::span<const EntityId>(heads_.data() + group_begin_[g],
                                   group_begin_[g + 1] - group_begin_[g]));
    }
  }

  /// All directed triples in (tail, relation, head) index order.
  std::vector<Triple> directed_triples() const;

  bool operator==(const KnowledgeGraph&) const = default;

 private:
  std::size_t entity_count_ = 0;
  std::size_t canonical_relations_ = 0;
  std::size_t canonical_triples_ = 0;
  std::vector<std::size_t> edge_counts_;
  // group_ptr_[i]..group_ptr_[i+1] index the relation groups of tail i.
  std::vector<std::size_t> group_ptr_{0};
  std::vector<RelationId> group_relation_;
  // group_begin_ has one trailing sentinel equal to heads_.size().
  std::vector<std::size_t> group_begin_{0};
  std::vector<EntityId> heads_;
};

/// Reads a `head relation tail` file. entity_count / canonical_relation_count
/// of 0 mean "infer from the data" (max id + 1).
KnowledgeGraph load_kg(const std::filesystem::path& path, std::size_t entity_count,
                       std::size_t canonical_relation_count);

/// Parses triples without building the index. Errors name the 1-based line.
std::vector<Triple> read_triples(const std::filesystem::path& path);

struct InteractionSet {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::vector<std::vector<ItemId>> train;  // sorted, deduplicated: N_u
  std::vector<std::vector<ItemId>> test;   // sorted, deduplicated, disjoint from train
  std::vector<UserId> cold_users;          // users with an empty train list

  std::size_t train_interaction_count() const;
  std::size_t test_interaction_count() const;
  bool has_train(UserId u, ItemId i) const;
};

/// Builds an InteractionSet from per-user lists. Lists are sorted and
/// deduplicated, test items that also occur in train are dropped with a
/// warning. item_count of 0 means max id + 1.
InteractionSet make_interactions(std::vector<std::vector<ItemId>> train,
                                 std::vector<std::vector<ItemId>> test, std::size_t item_count);

/// Reads `user item item ...` files.
InteractionSet load_interactions(const std::filesystem::path& train_path,
                                 const std::filesystem::path& test_path,
                                 std::size_t item_count = 0);

/// Items must form the id prefix of the entity set.
void check_items_prefix(const KnowledgeGraph& g, const InteractionSet& data);

}  // namespace akgan
