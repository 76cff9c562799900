#include "akgan/propagation.hpp"

#include <algorithm>

namespace akgan {

std::size_t representation_width(const AttributeLayout& layout, CombineMode mode) {
  if (mode == CombineMode::concat) return layout.total();
  AKGAN_EXPECT(layout.relation_count() > 0, "layout has no relations");
  const int width = layout.dim(0);
  for (int d : layout.dims())
    AKGAN_EXPECT(d == width, "mean/sum combination requires a uniform block width");
  return static_cast<std::size_t>(width);
}

namespace {

// Mean of table rows over heads, scaled by `scale`, added into out.
void add_mean_rows(const Matrix& table, std::span<const EntityId> heads, double scale,
                   std::span<double> out) {
  const double w = scale / static_cast<double>(heads.size());
  for (EntityId j : heads) axpy(w, table.row(j), out);
}

std::size_t group_count(const KnowledgeGraph& g, EntityId i) {
  std::size_t n = 0;
  g.for_each_group(i, [&](RelationId, std::span<const EntityId>) { ++n; });
  return n;
}

// Layer-0 representation of one entity into out (already zeroed).
void model_entity(const ParameterStore& params, const KnowledgeGraph& g,
                  const AttributeLayout& layout, CombineMode mode, EntityId i,
                  std::span<double> out) {
  if (mode == CombineMode::concat) {
    g.for_each_group(i, [&](RelationId r, std::span<const EntityId> heads) {
      add_mean_rows(params.entity_blocks[r], heads, 1.0, slice(out, r, layout));
    });
    return;
  }
  const double scale =
      mode == CombineMode::mean ? 1.0 / static_cast<double>(std::max<std::size_t>(1, group_count(g, i)))
                                : 1.0;
  g.for_each_group(i, [&](RelationId r, std::span<const EntityId> heads) {
    add_mean_rows(params.entity_blocks[r], heads, scale, out);
  });
}

void propagate_entity(const Matrix& prev, const KnowledgeGraph& g, EntityId i,
                      const std::vector<std::int32_t>* prev_local, std::span<double> out) {
  g.for_each_group(i, [&](RelationId, std::span<const EntityId> heads) {
    const double w = 1.0 / static_cast<double>(heads.size());
    for (EntityId j : heads) {
      const std::size_t row = prev_local ? static_cast<std::size_t>((*prev_local)[j]) : j;
      axpy(w, prev.row(row), out);
    }
  });
}

}  // namespace

LayerState attribute_modeling(const ParameterStore& params, const KnowledgeGraph& g,
                              const AttributeLayout& layout, CombineMode mode) {
  AKGAN_EXPECT(params.entity_blocks.size() == layout.relation_count(),
               "attribute_modeling: parameter tables do not match layout");
  AKGAN_EXPECT(layout.relation_count() == g.relation_count(),
               "attribute_modeling: layout does not match graph relations");
  LayerState s{Matrix(g.entity_count(), representation_width(layout, mode)), 0};
  for (EntityId i = 0; i < g.entity_count(); ++i)
    model_entity(params, g, layout, mode, i, s.reps.row(i));
  return s;
}

LayerState propagate(const LayerState& prev, const KnowledgeGraph& g) {
  AKGAN_EXPECT(prev.reps.rows == g.entity_count(), "propagate: state does not match graph");
  LayerState s{Matrix(prev.reps.rows, prev.reps.cols), prev.layer + 1};
  for (EntityId i = 0; i < g.entity_count(); ++i) propagate_entity(prev.reps, g, i, nullptr, s.reps.row(i));
  return s;
}

ItemRepresentation readout(std::span<const LayerState> layers, int L, std::size_t item_count) {
  AKGAN_EXPECT(L >= 0 && layers.size() >= static_cast<std::size_t>(L) + 1,
               "readout: layers 0..L required");
  ItemRepresentation out;
  out.item_count = item_count;
  out.entity_reps = layers[0].reps;
  AKGAN_EXPECT(item_count <= out.entity_reps.rows, "readout: more items than entities");
  for (int l = 1; l <= L; ++l) {
    const Matrix& m = layers[static_cast<std::size_t>(l)].reps;
    AKGAN_EXPECT(m.rows == out.entity_reps.rows && m.cols == out.entity_reps.cols,
                 "readout: layer width mismatch");
    for (std::size_t k = 0; k < m.data.size(); ++k) out.entity_reps.data[k] += m.data[k];
  }
  return out;
}

std::vector<double> ablation_combine(CombineMode mode,
                                     std::span<const std::vector<double>> blocks) {
  std::vector<double> out;
  if (mode == CombineMode::concat) {
    for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
    return out;
  }
  if (blocks.empty()) return out;
  out.assign(blocks[0].size(), 0.0);
  for (const auto& b : blocks) {
    AKGAN_EXPECT(b.size() == out.size(), "ablation_combine: blocks differ in width");
    axpy(1.0, b, out);
  }
  if (mode == CombineMode::mean)
    for (double& x : out) x /= static_cast<double>(blocks.size());
  return out;
}

ItemRepresentation forward_full(const ParameterStore& params, const KnowledgeGraph& g,
                                const AttributeLayout& layout, CombineMode mode, int L,
                                std::size_t item_count) {
  AKGAN_EXPECT(L >= 0, "forward_full: negative layer count");
  LayerState layer = attribute_modeling(params, g, layout, mode);
  ItemRepresentation out;
  out.item_count = item_count;
  out.entity_reps = layer.reps;
  for (int l = 1; l <= L; ++l) {
    layer = propagate(layer, g);
    for (std::size_t k = 0; k < layer.reps.data.size(); ++k) out.entity_reps.data[k] += layer.reps.data[k];
  }
  return out;
}

SparseRows::SparseRows(std::size_t rows, std::size_t width)
    : width_(width), slot_(rows, -1) {}

std::span<double> SparseRows::row(std::size_t r) {
  if (slot_[r] < 0) {
    slot_[r] = static_cast<std::int32_t>(touched_.size());
    touched_.push_back(static_cast<std::uint32_t>(r));
    values_.resize(values_.size() + width_, 0.0);
  }
  return {values_.data() + static_cast<std::size_t>(slot_[r]) * width_, width_};
}

std::span<const double> SparseRows::find(std::size_t r) const {
  if (slot_[r] < 0) return {};
  return {values_.data() + static_cast<std::size_t>(slot_[r]) * width_, width_};
}

void SparseRows::clear() {
  for (std::uint32_t r : touched_) slot_[r] = -1;
  touched_.clear();
  values_.clear();
}

GradientStore::GradientStore(const ParameterStore& params) {
  tables.reserve(params.table_count());
  for (std::size_t t = 0; t < params.table_count(); ++t)
    tables.emplace_back(params.table(t).rows, params.table(t).cols);
}

void GradientStore::clear() {
  for (auto& t : tables) t.clear();
}

std::size_t GradientStore::touched_rows() const {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.touched().size();
  return n;
}

ReceptiveField::ReceptiveField(const KnowledgeGraph& g, std::span<const EntityId> targets, int L)
    : g_(g), L_(L) {
  AKGAN_EXPECT(L >= 0, "ReceptiveField: negative layer count");
  std::vector<EntityId> level(targets.begin(), targets.end());
  std::sort(level.begin(), level.end());
  level.erase(std::unique(level.begin(), level.end()), level.end());
  for (EntityId t : level) AKGAN_EXPECT(t < g.entity_count(), "ReceptiveField: target out of range");

  // levels_[k+1] = levels_[k] plus all in-neighbors of levels_[k].
  for (int k = 0; k <= L + 1; ++k) {
    std::vector<std::int32_t> local(g.entity_count(), -1);
    for (std::size_t n = 0; n < level.size(); ++n) local[level[n]] = static_cast<std::int32_t>(n);
    levels_.push_back(level);
    local_.push_back(std::move(local));
    if (k == L + 1) break;
    std::vector<EntityId> next = level;
    for (EntityId i : level)
      g.for_each_group(i, [&](RelationId, std::span<const EntityId> heads) {
        next.insert(next.end(), heads.begin(), heads.end());
      });
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    level = std::move(next);
  }
  // Entity-table rows read by layer 0: in-neighbors of the deepest level.
  for (EntityId i : levels_[static_cast<std::size_t>(L)])
    g.for_each_group(i, [&](RelationId r, std::span<const EntityId> heads) {
      for (EntityId j : heads) param_entries_.emplace_back(r, j);
    });
  std::sort(param_entries_.begin(), param_entries_.end());
  param_entries_.erase(std::unique(param_entries_.begin(), param_entries_.end()),
                       param_entries_.end());
  levels_.pop_back();
  local_.pop_back();
}

std::int32_t ReceptiveField::target_row(EntityId e) const { return local_[0][e]; }

Matrix ReceptiveField::forward(const ParameterStore& params, const AttributeLayout& layout,
                               CombineMode mode) {
  const std::size_t width = representation_width(layout, mode);
  const auto L = static_cast<std::size_t>(L_);
  // Layer l lives on levels_[L - l].
  const std::vector<EntityId>& base = levels_[L];
  Matrix layer(base.size(), width);
  for (std::size_t n = 0; n < base.size(); ++n)
    model_entity(params, g_, layout, mode, base[n], layer.row(n));

  Matrix out(levels_[0].size(), width);
  auto accumulate = [&](const Matrix& m, std::size_t level) {
    const auto& loc = local_[level];
    for (std::size_t n = 0; n < levels_[0].size(); ++n)
      axpy(1.0, m.row(static_cast<std::size_t>(loc[levels_[0][n]])), out.row(n));
  };
  accumulate(layer, L);
  for (std::size_t l = 1; l <= L; ++l) {
    const std::size_t level = L - l;
    Matrix next(levels_[level].size(), width);
    for (std::size_t n = 0; n < levels_[level].size(); ++n)
      propagate_entity(layer, g_, levels_[level][n], &local_[level + 1], next.row(n));
    layer = std::move(next);
    accumulate(layer, level);
  }
  return out;
}

void ReceptiveField::backward(const Matrix& grad_targets, const AttributeLayout& layout,
                              CombineMode mode, GradientStore& grads) const {
  const std::size_t width = representation_width(layout, mode);
  AKGAN_EXPECT(grad_targets.rows == levels_[0].size() && grad_targets.cols == width,
               "ReceptiveField::backward: gradient shape mismatch");
  const auto L = static_cast<std::size_t>(L_);

  // d loss / d e^{(l)} on levels_[L - l]; every layer receives the readout gradient at targets.
  auto seed = [&](Matrix& m, std::size_t level) {
    const auto& loc = local_[level];
    for (std::size_t n = 0; n < levels_[0].size(); ++n)
      axpy(1.0, grad_targets.row(n), m.row(static_cast<std::size_t>(loc[levels_[0][n]])));
  };
  Matrix grad(levels_[0].size(), width);
  seed(grad, 0);
  for (std::size_t l = L; l >= 1; --l) {
    const std::size_t level = L - l;
    Matrix prev(levels_[level + 1].size(), width);
    seed(prev, level + 1);
    const auto& loc = local_[level + 1];
    for (std::size_t n = 0; n < levels_[level].size(); ++n) {
      const auto g_row = grad.row(n);
      g_.for_each_group(levels_[level][n], [&](RelationId, std::span<const EntityId> heads) {
        const double w = 1.0 / static_cast<double>(heads.size());
        for (EntityId j : heads) axpy(w, g_row, prev.row(static_cast<std::size_t>(loc[j])));
      });
    }
    grad = std::move(prev);
  }

  const std::vector<EntityId>& base = levels_[L];
  for (std::size_t n = 0; n < base.size(); ++n) {
    const auto g_row = grad.row(n);
    const double scale =
        mode == CombineMode::mean
            ? 1.0 / static_cast<double>(std::max<std::size_t>(1, group_count(g_, base[n])))
            : 1.0;
    g_.for_each_group(base[n], [&](RelationId r, std::span<const EntityId> heads) {
      const std::span<const double> block =
          mode == CombineMode::concat ? slice(g_row, r, layout) : g_row;
      const double w = scale / static_cast<double>(heads.size());
      for (EntityId j : heads) axpy(w, block, grads.tables[r].row(j));
    });
  }
}

}  // namespace akgan
