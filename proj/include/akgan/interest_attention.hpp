#pragma once

// User side: per-relation interest scores and the gated user representation.
//
//   f(u, m) = tanh(relu(tau * num / den))
//   num = < e_u^m, mean_{i in N_u} e*_i^m >
//   den = < e_u^m, mean_{i in I}   e*_i^m >     (den uses a cached item mean)
//
// The ratio is forced to 0 when |den| < kDenominatorEpsilon or when den < 0
// while num > 0.

#include <cstdint>
#include <span>
#include <vector>

#include "akgan/common.hpp"
#include "akgan/embedding_space.hpp"
#include "akgan/kg_store.hpp"
#include "akgan/propagation.hpp"

namespace akgan {

inline constexpr double kDenominatorEpsilon = 1e-8;

/// (1/|I|) sum_i e*_i, stamped with the refresh point it was computed at.
struct ItemBlockMeans {
  std::vector<double> mean;
  std::uint64_t stamp = 0;

  std::span<const double> block(RelationId m, const AttributeLayout& layout) const {
    return slice(std::span<const double>(mean), m, layout);
  }
};

ItemBlockMeans item_block_means(const ItemRepresentation& item_reps, std::uint64_t stamp = 0);

/// Intermediate values of one interest score.
struct InterestTerms {
  double numerator = 0.0;
  double denominator = 0.0;
  double logit = 0.0;  // relu(tau * ratio), 0 when gated
  double score = 0.0;  // tanh(logit), kept strictly below 1
  bool gated = false;  // denominator guard fired
};

/// Score from the three blocks it depends on.
InterestTerms interest_terms(std::span<const double> user_block,
                             std::span<const double> history_block,
                             std::span<const double> item_mean_block, double tau);

/// f_att(u, r_m). Cold users (empty N_u) score 0 with a warning.
double interest_score(UserId u, RelationId m, const ParameterStore& params,
                      const InteractionSet& data, const ItemRepresentation& item_reps,
                      const ItemBlockMeans& means, const AttributeLayout& layout, double tau);

struct InterestProfile {
  UserId user = 0;
  std::vector<double> scores;  // one per relation, in [0, 1)
  std::vector<double> logits;  // pre-tanh arguments, same order as scores
  double temperature = 0.0;
  bool cold = false;
  std::uint64_t stamp = 0;     // ItemBlockMeans refresh point used
};

InterestProfile compute_profile(UserId u, const ParameterStore& params,
                                const InteractionSet& data, const ItemRepresentation& item_reps,
                                const ItemBlockMeans& means, const AttributeLayout& layout,
                                double tau);

/// e_u + mean of e*_i over N_u (e_u alone when N_u is empty).
std::vector<double> user_rep_plain(UserId u, const ParameterStore& params,
                                   const InteractionSet& data,
                                   const ItemRepresentation& item_reps);

/// e_u + concat_m f(u, m) * mean_{i in N_u} e*_i^m.
std::vector<double> user_rep_attentive(UserId u, const ParameterStore& params,
                                       const InteractionSet& data,
                                       const ItemRepresentation& item_reps,
                                       const InterestProfile& profile,
                                       const AttributeLayout& layout);

/// y(u, i) = <u_rep, i_rep>.
double score(std::span<const double> user_rep, std::span<const double> item_rep);

/// Forward values of one user representation kept for the backward pass.
struct UserForward {
  std::vector<double> history_mean;  // mean of e*_i over N_u
  std::vector<double> rep;
  std::vector<InterestTerms> terms;  // empty unless attentive
  bool attentive = false;
};

/// Computes the user representation from its inputs. history rows are the
/// e*_i of N_u; item_means is ignored unless attentive.
UserForward user_forward(std::span<const double> user_vec,
                         std::span<const std::span<const double>> history,
                         std::span<const double> item_means, const AttributeLayout& layout,
                         double tau, bool attentive);

/// Backward of user_forward: adds d loss / d e_u into grad_user and
/// d loss / d history_mean into grad_history_mean. The item mean is a
/// constant. grad_history_mean is spread over N_u by the caller.
void user_backward(const UserForward& fw, std::span<const double> user_vec,
                   std::span<const double> item_means, const AttributeLayout& layout, double tau,
                   std::span<const double> grad_rep, std::span<double> grad_user,
                   std::span<double> grad_history_mean);

}  // namespace akgan
