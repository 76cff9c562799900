#include "akgan/embedding_space.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace akgan {

void DimensionSchedule::validate() const {
  if (d_min < 1 || d_max < d_min || c < 1)
    throw ConfigError("dimension schedule requires 1 <= d_min <= d_max and c >= 1");
}

std::vector<int> compute_dims(std::span<const std::size_t> edge_counts,
                              const DimensionSchedule& schedule) {
  schedule.validate();
  std::vector<int> dims;
  dims.reserve(edge_counts.size());
  const double slope = static_cast<double>(schedule.d_max - schedule.d_min) / schedule.c;
  for (std::size_t count : edge_counts) {
    const double ramp = std::min<double>(schedule.d_max,
                                         schedule.d_min + slope * static_cast<double>(count));
    const int d = static_cast<int>(std::lround(ramp));
    dims.push_back(std::clamp(d, schedule.d_min, schedule.d_max));
  }
  return dims;
}

AttributeLayout::AttributeLayout(std::vector<int> dims) : dims_(std::move(dims)) {
  offsets_.reserve(dims_.size());
  for (int d : dims_) {
    AKGAN_EXPECT(d >= 1, "layout: every block width must be >= 1");
    offsets_.push_back(total_);
    total_ += static_cast<std::size_t>(d);
  }
}

AttributeLayout build_layout(std::vector<int> dims) { return AttributeLayout(std::move(dims)); }

std::span<double> slice(std::span<double> vec, RelationId m, const AttributeLayout& layout) {
  AKGAN_EXPECT(m < layout.relation_count(), "slice: relation out of range");
  AKGAN_EXPECT(vec.size() == layout.total(), "slice: vector length differs from layout width");
  return vec.subspan(layout.offset(m), static_cast<std::size_t>(layout.dim(m)));
}

std::span<const double> slice(std::span<const double> vec, RelationId m,
                              const AttributeLayout& layout) {
  AKGAN_EXPECT(m < layout.relation_count(), "slice: relation out of range");
  AKGAN_EXPECT(vec.size() == layout.total(), "slice: vector length differs from layout width");
  return vec.subspan(layout.offset(m), static_cast<std::size_t>(layout.dim(m)));
}

bool ParameterStore::all_finite() const {
  for (std::size_t t = 0; t < table_count(); ++t)
    for (double x : table(t).data)
      if (!std::isfinite(x)) return false;
  return true;
}

double xavier_bound(int width) { return std::sqrt(6.0 / (2.0 * width)); }

ParameterStore init_params(const AttributeLayout& layout, std::size_t entity_count,
                           std::size_t user_count, std::uint64_t seed, std::size_t user_width) {
  AKGAN_EXPECT(entity_count > 0 && user_count > 0, "init_params: counts must be positive");
  if (user_width == 0) user_width = layout.total();
  std::mt19937_64 rng(seed);
  ParameterStore p;
  p.entity_blocks.reserve(layout.relation_count());
  for (RelationId m = 0; m < layout.relation_count(); ++m) {
    Matrix table(entity_count, static_cast<std::size_t>(layout.dim(m)));
    std::uniform_real_distribution<double> dist(-xavier_bound(layout.dim(m)),
                                                xavier_bound(layout.dim(m)));
    for (double& x : table.data) x = dist(rng);
    p.entity_blocks.push_back(std::move(table));
  }

  // Per-column bound: the block a column belongs to, or one block for the ablation width.
  std::vector<double> bounds(user_width, xavier_bound(static_cast<int>(user_width)));
  if (user_width == layout.total()) {
    for (RelationId m = 0; m < layout.relation_count(); ++m)
      std::fill_n(bounds.begin() + static_cast<std::ptrdiff_t>(layout.offset(m)), layout.dim(m),
                  xavier_bound(layout.dim(m)));
  }
  p.user_vecs = Matrix(user_count, user_width);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t u = 0; u < user_count; ++u)
    for (std::size_t k = 0; k < user_width; ++k) p.user_vecs.at(u, k) = bounds[k] * unit(rng);
  return p;
}

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'K', 'G', 'A', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <class T>
void put_le(std::ofstream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::ifstream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw LoadError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

CheckpointHeader read_header(std::ifstream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw LoadError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion)
    throw LoadError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointHeader h;
  h.entity_count = get_le<std::uint64_t>(in);
  h.user_count = get_le<std::uint64_t>(in);
  const auto relations = get_le<std::uint32_t>(in);
  h.dims.resize(relations);
  for (int& d : h.dims) {
    d = static_cast<int>(get_le<std::uint32_t>(in));
    if (d < 1) throw LoadError("checkpoint: invalid block width");
  }
  h.user_width = get_le<std::uint64_t>(in);
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  const std::uint64_t entities = params.entity_blocks.empty() ? 0 : params.entity_blocks[0].rows;
  put_le<std::uint64_t>(out, entities);
  put_le<std::uint64_t>(out, params.user_vecs.rows);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.entity_blocks.size()));
  for (const Matrix& block : params.entity_blocks)
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(block.cols));
  put_le<std::uint64_t>(out, params.user_vecs.cols);
  for (std::size_t t = 0; t < params.table_count(); ++t)
    for (double x : params.table(t).data) put_le<double>(out, x);
  if (!out) throw LoadError("failed writing " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return read_header(in);
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  const CheckpointHeader h = read_header(in);
  ParameterStore p;
  for (int d : h.dims) p.entity_blocks.emplace_back(h.entity_count, static_cast<std::size_t>(d));
  p.user_vecs = Matrix(h.user_count, h.user_width);
  for (std::size_t t = 0; t < p.table_count(); ++t)
    for (double& x : p.table(t).data) x = get_le<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError("checkpoint: trailing bytes");
  return p;
}

}  // namespace akgan
