#pragma once

// Assembled model: item network + user side, as used by training,
// evaluation and the explain command.

#include <vector>

#include "akgan/embedding_space.hpp"
#include "akgan/interest_attention.hpp"
#include "akgan/kg_store.hpp"
#include "akgan/propagation.hpp"

namespace akgan {

/// Ablation variants. mean/sum replace concatenation and drop attention;
/// noatt keeps concatenation with plain average pooling of the history.
enum class Variant { akgan, noatt, mean, sum };

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelSpec {
  AttributeLayout layout;
  CombineMode combine = CombineMode::concat;
  bool attention = true;
  double temperature = 0.1;
  int layers = 2;

  std::size_t width() const { return representation_width(layout, combine); }
};

/// Layout and combination mode for a variant: mean/sum use d_max for every block.
ModelSpec make_model_spec(Variant variant, const KnowledgeGraph& g,
                          const DimensionSchedule& schedule, double temperature, int layers);

/// Full-graph item representations plus the item mean used by the interest scores.
struct ForwardPass {
  ItemRepresentation items;
  ItemBlockMeans means;
};

ForwardPass forward_pass(const ModelSpec& spec, const ParameterStore& params,
                         const KnowledgeGraph& g, std::size_t item_count,
                         std::uint64_t stamp = 0);

/// e*_u under the spec (attentive or plain).
std::vector<double> user_representation(UserId u, const ModelSpec& spec,
                                        const ParameterStore& params, const InteractionSet& data,
                                        const ForwardPass& pass);

ParameterStore init_model_params(const ModelSpec& spec, std::size_t entity_count,
                                 std::size_t user_count, std::uint64_t seed);

}  // namespace akgan
