#include "akgan/model.hpp"

namespace akgan {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::akgan: return "akgan";
    case Variant::noatt: return "noatt";
    case Variant::mean: return "mean";
    case Variant::sum: return "sum";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "akgan" || name == "none") return Variant::akgan;
  if (name == "noatt") return Variant::noatt;
  if (name == "mean") return Variant::mean;
  if (name == "sum") return Variant::sum;
  throw ConfigError("unknown ablation variant '" + name + "' (expected none|noatt|mean|sum)");
}

ModelSpec make_model_spec(Variant variant, const KnowledgeGraph& g,
                          const DimensionSchedule& schedule, double temperature, int layers) {
  ModelSpec spec;
  spec.temperature = temperature;
  spec.layers = layers;
  switch (variant) {
    case Variant::akgan:
    case Variant::noatt:
      spec.layout = build_layout(compute_dims(g.edge_counts(), schedule));
      spec.combine = CombineMode::concat;
      spec.attention = variant == Variant::akgan;
      break;
    case Variant::mean:
    case Variant::sum:
      schedule.validate();
      spec.layout = build_layout(std::vector<int>(g.relation_count(), schedule.d_max));
      spec.combine = variant == Variant::mean ? CombineMode::mean : CombineMode::sum;
      spec.attention = false;
      break;
  }
  return spec;
}

ForwardPass forward_pass(const ModelSpec& spec, const ParameterStore& params,
                         const KnowledgeGraph& g, std::size_t item_count, std::uint64_t stamp) {
  ForwardPass pass;
  pass.items = forward_full(params, g, spec.layout, spec.combine, spec.layers, item_count);
  pass.means = item_block_means(pass.items, stamp);
  return pass;
}

std::vector<double> user_representation(UserId u, const ModelSpec& spec,
                                        const ParameterStore& params, const InteractionSet& data,
                                        const ForwardPass& pass) {
  if (!spec.attention) return user_rep_plain(u, params, data, pass.items);
  const InterestProfile profile = compute_profile(u, params, data, pass.items, pass.means,
                                                  spec.layout, spec.temperature);
  return user_rep_attentive(u, params, data, pass.items, profile, spec.layout);
}

ParameterStore init_model_params(const ModelSpec& spec, std::size_t entity_count,
                                 std::size_t user_count, std::uint64_t seed) {
  return init_params(spec.layout, entity_count, user_count, seed, spec.width());
}

}  // namespace akgan
