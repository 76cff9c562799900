#pragma once

// Planted-preference world generator. Each canonical relation m has a pool of
// attribute entities and every item links to one of them (item, m, attr).
// Each user prefers a few relations and one target entity in each; the
// user's interactions are drawn without replacement with probability
// proportional to the number of preferences an item matches.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "akgan/kg_store.hpp"

namespace akgan {

struct SyntheticSpec {
  std::size_t users = 500;
  std::size_t items = 300;
  std::size_t relations = 8;
  std::size_t attributes_per_relation = 5;
  double sparsity = 0.125;  // fraction of relations each user cares about
  std::size_t interactions_per_user = 20;
  double test_fraction = 0.2;
  // Adds one extra relation linking attribute entities to hub entities.
  bool bridge = false;
  std::size_t bridge_hubs = 4;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  std::size_t preferred_per_user() const;
};

struct Preference {
  RelationId relation = 0;  // canonical relation id
  EntityId target = 0;

  bool operator==(const Preference&) const = default;
};

struct SyntheticWorld {
  SyntheticSpec spec;
  std::size_t entity_count = 0;
  std::size_t canonical_relations = 0;  // planted relations plus the bridge
  std::vector<Triple> triples;
  std::vector<std::vector<ItemId>> train;
  std::vector<std::vector<ItemId>> test;
  std::vector<std::vector<Preference>> preferences;
  std::vector<std::vector<EntityId>> item_attributes;  // [item][relation]

  /// Entity id of attribute k in relation m's pool.
  EntityId attribute(RelationId m, std::size_t k) const;
  bool is_bridge(RelationId canonical) const { return spec.bridge && canonical == spec.relations; }
  /// Number of a user's preferences that item i matches.
  std::size_t matches(UserId u, ItemId i) const;

  KnowledgeGraph graph() const;
  InteractionSet interactions() const;
};

/// Throws ConfigError when the spec is invalid or infeasible.
SyntheticWorld generate_world(const SyntheticSpec& spec);

/// Writes kg_final.txt, train.txt, test.txt, answer_key.tsv and
/// relation_names.tsv into dir.
void write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

/// Reads answer_key.tsv: user -> preferred canonical relations.
std::vector<std::vector<Preference>> read_answer_key(const std::filesystem::path& path,
                                                     std::size_t user_count);

}  // namespace akgan
