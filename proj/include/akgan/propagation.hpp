#pragma once

// Item-side network: the attribute modeling layer (per-relation neighbor
// means placed in their own blocks), the attribute propagation layers
// (relation-grouped means summed over relations) and the layer-sum readout.
//
// Every operation here is linear in the entity tables and acts on all
// columns of a representation identically after layer 0, which is what
// keeps block m a function of attribute space m alone.

#include <span>
#include <utility>
#include <vector>

#include "akgan/common.hpp"
#include "akgan/embedding_space.hpp"
#include "akgan/kg_store.hpp"

namespace akgan {

enum class CombineMode { concat, mean, sum };

/// D for concatenation; the common block width for mean/sum.
std::size_t representation_width(const AttributeLayout& layout, CombineMode mode);

struct LayerState {
  Matrix reps;  // |E| x width
  int layer = 0;
};

/// e^{(0)}: block m of entity i is the mean of e_j^{r_m} over N_i^{r_m},
/// zero when that set is empty. mean/sum modes fold the present blocks
/// elementwise instead of concatenating them.
LayerState attribute_modeling(const ParameterStore& params, const KnowledgeGraph& g,
                              const AttributeLayout& layout,
                              CombineMode mode = CombineMode::concat);

/// e^{(l)}_i = sum_r mean_{j in N_i^r} e^{(l-1)}_j; empty groups contribute nothing.
LayerState propagate(const LayerState& prev, const KnowledgeGraph& g);

/// Layer-summed representations. Items are the first item_count rows.
struct ItemRepresentation {
  Matrix entity_reps;
  std::size_t item_count = 0;

  std::span<const double> item(ItemId i) const {
    AKGAN_EXPECT(i < item_count, "item id out of range");
    return entity_reps.row(i);
  }
  std::size_t width() const { return entity_reps.cols; }
};

/// e* = sum over layers 0..L.
ItemRepresentation readout(std::span<const LayerState> layers, int L, std::size_t item_count);

/// Combines attribute blocks of one entity: concatenation, elementwise mean
/// or elementwise sum. mean/sum require equal widths.
std::vector<double> ablation_combine(CombineMode mode,
                                     std::span<const std::vector<double>> blocks);

/// Full-graph forward pass: attribute modeling, L propagation layers, readout.
ItemRepresentation forward_full(const ParameterStore& params, const KnowledgeGraph& g,
                                const AttributeLayout& layout, CombineMode mode, int L,
                                std::size_t item_count);

/// Sparse accumulator of gradient rows for one parameter table.
class SparseRows {
 public:
  SparseRows() = default;
  SparseRows(std::size_t rows, std::size_t width);

  std::span<double> row(std::size_t r);
  std::span<const double> find(std::size_t r) const;
  bool contains(std::size_t r) const { return slot_[r] >= 0; }
  /// Rows in first-touch order.
  const std::vector<std::uint32_t>& touched() const { return touched_; }
  std::size_t width() const { return width_; }
  void clear();

 private:
  std::size_t width_ = 0;
  std::vector<std::int32_t> slot_;
  std::vector<std::uint32_t> touched_;
  std::vector<double> values_;
};

/// Gradient rows for every table of a ParameterStore (entity tables in
/// relation order, then the user table).
struct GradientStore {
  std::vector<SparseRows> tables;

  GradientStore() = default;
  explicit GradientStore(const ParameterStore& params);
  void clear();
  std::size_t touched_rows() const;
};

/// Forward/backward restricted to the receptive field of a target set: the
/// entities within L + 1 hops (in-neighbor direction) that can influence
/// e*_t for some target t. Results equal the full-graph pass on the targets.
class ReceptiveField {
 public:
  ReceptiveField(const KnowledgeGraph& g, std::span<const EntityId> targets, int L);

  /// Deduplicated, sorted targets; rows of forward() follow this order.
  const std::vector<EntityId>& targets() const { return levels_[0]; }
  /// Local row of a target, or -1.
  std::int32_t target_row(EntityId e) const;

  /// e* of every target.
  Matrix forward(const ParameterStore& params, const AttributeLayout& layout, CombineMode mode);

  /// Pushes d loss / d e*_t (rows in target order) back to the entity tables.
  void backward(const Matrix& grad_targets, const AttributeLayout& layout, CombineMode mode,
                GradientStore& grads) const;

  /// (relation, row) entries of the entity tables read by forward(), sorted.
  /// backward() touches exactly these rows.
  const std::vector<std::pair<RelationId, EntityId>>& parameter_entries() const {
    return param_entries_;
  }

 private:
  const KnowledgeGraph& g_;
  int L_;
  // levels_[k]: entities within k hops of the targets, sorted.
  std::vector<std::vector<EntityId>> levels_;
  std::vector<std::vector<std::int32_t>> local_;
  std::vector<std::pair<RelationId, EntityId>> param_entries_;
};

}  // namespace akgan
