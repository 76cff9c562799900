#include "akgan/interest_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace akgan {

namespace {

const double kBelowOne = std::nextafter(1.0, 0.0);

std::vector<std::span<const double>> history_rows(UserId u, const InteractionSet& data,
                                                  const ItemRepresentation& item_reps) {
  std::vector<std::span<const double>> rows;
  rows.reserve(data.train[u].size());
  for (ItemId i : data.train[u]) rows.push_back(item_reps.item(i));
  return rows;
}

}  // namespace

ItemBlockMeans item_block_means(const ItemRepresentation& item_reps, std::uint64_t stamp) {
  AKGAN_EXPECT(item_reps.item_count > 0, "item_block_means: no items");
  ItemBlockMeans out;
  out.stamp = stamp;
  out.mean.assign(item_reps.width(), 0.0);
  for (ItemId i = 0; i < item_reps.item_count; ++i) axpy(1.0, item_reps.item(i), out.mean);
  for (double& x : out.mean) x /= static_cast<double>(item_reps.item_count);
  return out;
}

InterestTerms interest_terms(std::span<const double> user_block,
                             std::span<const double> history_block,
                             std::span<const double> item_mean_block, double tau) {
  AKGAN_EXPECT(tau > 0.0, "interest score: temperature must be positive");
  InterestTerms t;
  t.numerator = dot(user_block, history_block);
  t.denominator = dot(user_block, item_mean_block);
  t.gated = std::abs(t.denominator) < kDenominatorEpsilon ||
            (t.denominator < 0.0 && t.numerator > 0.0);
  if (!t.gated) t.logit = std::max(0.0, tau * t.numerator / t.denominator);
  t.score = std::min(std::tanh(t.logit), kBelowOne);
  return t;
}

double interest_score(UserId u, RelationId m, const ParameterStore& params,
                      const InteractionSet& data, const ItemRepresentation& item_reps,
                      const ItemBlockMeans& means, const AttributeLayout& layout, double tau) {
  AKGAN_EXPECT(u < data.user_count, "interest_score: user out of range");
  AKGAN_EXPECT(m < layout.relation_count(), "interest_score: relation out of range");
  AKGAN_EXPECT(tau > 0.0, "interest score: temperature must be positive");
  if (data.train[u].empty()) {
    warn("user " + std::to_string(u) + " has no interactions; interest score is 0");
    return 0.0;
  }
  const auto rows = history_rows(u, data, item_reps);
  const UserForward fw = user_forward(params.user_vecs.row(u), rows, means.mean, layout, tau, true);
  return fw.terms[m].score;
}

InterestProfile compute_profile(UserId u, const ParameterStore& params,
                                const InteractionSet& data, const ItemRepresentation& item_reps,
                                const ItemBlockMeans& means, const AttributeLayout& layout,
                                double tau) {
  AKGAN_EXPECT(u < data.user_count, "compute_profile: user out of range");
  InterestProfile p;
  p.user = u;
  p.temperature = tau;
  p.stamp = means.stamp;
  p.scores.assign(layout.relation_count(), 0.0);
  p.logits.assign(layout.relation_count(), 0.0);
  if (data.train[u].empty()) {
    p.cold = true;
    return p;
  }
  const auto rows = history_rows(u, data, item_reps);
  const UserForward fw = user_forward(params.user_vecs.row(u), rows, means.mean, layout, tau, true);
  for (std::size_t m = 0; m < fw.terms.size(); ++m) {
    p.scores[m] = fw.terms[m].score;
    p.logits[m] = fw.terms[m].logit;
  }
  return p;
}

std::vector<double> user_rep_plain(UserId u, const ParameterStore& params,
                                   const InteractionSet& data,
                                   const ItemRepresentation& item_reps) {
  AKGAN_EXPECT(u < data.user_count, "user_rep_plain: user out of range");
  const auto e_u = params.user_vecs.row(u);
  AKGAN_EXPECT(e_u.size() == item_reps.width(), "user_rep_plain: width mismatch");
  std::vector<double> rep(e_u.begin(), e_u.end());
  const auto& items = data.train[u];
  if (items.empty()) return rep;
  const double w = 1.0 / static_cast<double>(items.size());
  for (ItemId i : items) axpy(w, item_reps.item(i), rep);
  return rep;
}

std::vector<double> user_rep_attentive(UserId u, const ParameterStore& params,
                                       const InteractionSet& data,
                                       const ItemRepresentation& item_reps,
                                       const InterestProfile& profile,
                                       const AttributeLayout& layout) {
  AKGAN_EXPECT(u < data.user_count, "user_rep_attentive: user out of range");
  AKGAN_EXPECT(profile.scores.size() == layout.relation_count(),
               "user_rep_attentive: profile does not match layout");
  const auto e_u = params.user_vecs.row(u);
  std::vector<double> rep(e_u.begin(), e_u.end());
  const auto& items = data.train[u];
  if (items.empty()) return rep;
  std::vector<double> history(rep.size(), 0.0);
  const double w = 1.0 / static_cast<double>(items.size());
  for (ItemId i : items) axpy(w, item_reps.item(i), history);
  for (RelationId m = 0; m < layout.relation_count(); ++m)
    axpy(profile.scores[m], slice(std::span<const double>(history), m, layout),
         slice(std::span<double>(rep), m, layout));
  return rep;
}

double score(std::span<const double> user_rep, std::span<const double> item_rep) {
  AKGAN_EXPECT(user_rep.size() == item_rep.size(), "score: length mismatch");
  return dot(user_rep, item_rep);
}

UserForward user_forward(std::span<const double> user_vec,
                         std::span<const std::span<const double>> history,
                         std::span<const double> item_means, const AttributeLayout& layout,
                         double tau, bool attentive) {
  UserForward fw;
  fw.attentive = attentive;
  fw.history_mean.assign(user_vec.size(), 0.0);
  fw.rep.assign(user_vec.begin(), user_vec.end());
  if (history.empty()) {
    if (attentive) fw.terms.assign(layout.relation_count(), InterestTerms{});
    return fw;
  }
  const double w = 1.0 / static_cast<double>(history.size());
  for (auto row : history) axpy(w, row, fw.history_mean);
  if (!attentive) {
    axpy(1.0, fw.history_mean, fw.rep);
    return fw;
  }
  AKGAN_EXPECT(user_vec.size() == layout.total(), "attentive user rep requires the concatenated layout");
  fw.terms.reserve(layout.relation_count());
  const std::span<const double> hist(fw.history_mean);
  for (RelationId m = 0; m < layout.relation_count(); ++m) {
    InterestTerms t = interest_terms(slice(user_vec, m, layout), slice(hist, m, layout),
                                     slice(item_means, m, layout), tau);
    axpy(t.score, slice(hist, m, layout), slice(std::span<double>(fw.rep), m, layout));
    fw.terms.push_back(t);
  }
  return fw;
}

void user_backward(const UserForward& fw, std::span<const double> user_vec,
                   std::span<const double> item_means, const AttributeLayout& layout, double tau,
                   std::span<const double> grad_rep, std::span<double> grad_user,
                   std::span<double> grad_history_mean) {
  axpy(1.0, grad_rep, grad_user);
  if (!fw.attentive) {
    axpy(1.0, grad_rep, grad_history_mean);
    return;
  }
  const std::span<const double> hist(fw.history_mean);
  for (RelationId m = 0; m < layout.relation_count(); ++m) {
    const InterestTerms& t = fw.terms[m];
    const auto g_block = slice(grad_rep, m, layout);
    const auto h_block = slice(hist, m, layout);
    const auto gh_block = slice(grad_history_mean, m, layout);
    axpy(t.score, g_block, gh_block);
    if (t.gated || t.logit <= 0.0) continue;
    // d loss / d logit, then through logit = tau * num / den.
    const double th = std::tanh(t.logit);
    const double d_logit = dot(g_block, h_block) * (1.0 - th * th);
    const double d_num = d_logit * tau / t.denominator;
    const double d_den = -d_logit * tau * t.numerator / (t.denominator * t.denominator);
    const auto gu_block = slice(grad_user, m, layout);
    axpy(d_num, h_block, gu_block);
    axpy(d_den, slice(item_means, m, layout), gu_block);
    axpy(d_num, slice(user_vec, m, layout), gh_block);
  }
}

}  // namespace akgan
