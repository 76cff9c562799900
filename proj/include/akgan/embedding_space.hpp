#pragma once

// Per-relation attribute spaces: block widths, the concatenated layout and
// the trainable parameter tables.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "akgan/common.hpp"

namespace akgan {

/// Linear edge-count ramp between d_min and d_max, saturating at c edges.
struct DimensionSchedule {
  int d_min = 4;
  int d_max = 64;
  int c = 5000;

  void validate() const;
};

/// d^m = round(d_min + (d_max - d_min) * |r_m| / c), clamped to [d_min, d_max].
std::vector<int> compute_dims(std::span<const std::size_t> edge_counts,
                              const DimensionSchedule& schedule);

class AttributeLayout {
 public:
  AttributeLayout() = default;
  explicit AttributeLayout(std::vector<int> dims);

  std::size_t relation_count() const { return dims_.size(); }
  int dim(RelationId m) const { return dims_.at(m); }
  std::size_t offset(RelationId m) const { return offsets_.at(m); }
  std::size_t total() const { return total_; }
  const std::vector<int>& dims() const { return dims_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  bool operator==(const AttributeLayout&) const = default;

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

AttributeLayout build_layout(std::vector<int> dims);

/// Block m of a length-D vector.
std::span<double> slice(std::span<double> vec, RelationId m, const AttributeLayout& layout);
std::span<const double> slice(std::span<const double> vec, RelationId m,
                              const AttributeLayout& layout);

/// Theta: one |E| x d^m table per relation, plus the |U| x W user table.
/// W is the representation width (D for concatenation, d_max for the
/// mean/sum ablations).
struct ParameterStore {
  std::vector<Matrix> entity_blocks;
  Matrix user_vecs;

  std::size_t table_count() const { return entity_blocks.size() + 1; }
  Matrix& table(std::size_t t) { return t < entity_blocks.size() ? entity_blocks[t] : user_vecs; }
  const Matrix& table(std::size_t t) const {
    return t < entity_blocks.size() ? entity_blocks[t] : user_vecs;
  }
  std::size_t user_table() const { return entity_blocks.size(); }
  bool all_finite() const;

  bool operator==(const ParameterStore&) const = default;
};

/// Xavier-uniform initialization with fan_in = fan_out = block width, so
/// entries are drawn from U(-sqrt(3/d), sqrt(3/d)). User vectors use the
/// bound of the block each element falls into. user_width == layout.total()
/// for the concatenated model; otherwise it is a single block of that width.
ParameterStore init_params(const AttributeLayout& layout, std::size_t entity_count,
                           std::size_t user_count, std::uint64_t seed,
                           std::size_t user_width = 0);

double xavier_bound(int width);

/// Binary checkpoint: magic, version, |E|, |U|, relation dims, user width,
/// then little-endian float64 entity blocks in relation order and the user
/// table. Throws LoadError on a bad magic, version or truncated file.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
ParameterStore load_checkpoint(const std::filesystem::path& path);

struct CheckpointHeader {
  std::uint64_t entity_count = 0;
  std::uint64_t user_count = 0;
  std::vector<int> dims;
  std::uint64_t user_width = 0;
};
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

}  // namespace akgan
