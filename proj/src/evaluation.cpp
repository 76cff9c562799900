#include "akgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace akgan {

TopK rank_items(std::span<const double> scores, std::span<const ItemId> train_items,
                std::size_t K) {
  AKGAN_EXPECT(K >= 1, "rank_items: K must be >= 1");
  std::vector<ItemId> candidates;
  candidates.reserve(scores.size());
  std::size_t t = 0;
  for (ItemId i = 0; i < scores.size(); ++i) {
    while (t < train_items.size() && train_items[t] < i) ++t;
    if (t < train_items.size() && train_items[t] == i) continue;
    candidates.push_back(i);
  }
  TopK out;
  out.truncated = candidates.size() < K;
  const std::size_t n = std::min(K, candidates.size());
  auto better = [&](ItemId a, ItemId b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  candidates.resize(n);
  out.items = std::move(candidates);
  return out;
}

TopK rank_items(std::span<const double> user_rep, const ItemRepresentation& item_reps,
                std::span<const ItemId> train_items, std::size_t K) {
  std::vector<double> scores(item_reps.item_count);
  for (ItemId i = 0; i < item_reps.item_count; ++i) scores[i] = score(user_rep, item_reps.item(i));
  return rank_items(scores, train_items, K);
}

std::optional<double> recall_at_k(std::span<const ItemId> topk, std::span<const ItemId> test) {
  if (test.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (ItemId i : topk) hits += std::binary_search(test.begin(), test.end(), i) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::optional<double> ndcg_at_k(std::span<const ItemId> topk, std::span<const ItemId> test,
                                std::size_t K) {
  if (test.empty()) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t p = 0; p < std::min(K, topk.size()); ++p)
    if (std::binary_search(test.begin(), test.end(), topk[p])) dcg += 1.0 / std::log2(p + 2.0);
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(K, test.size()); ++p) idcg += 1.0 / std::log2(p + 2.0);
  return dcg / idcg;
}

RankingResult evaluate(const ModelSpec& spec, const ParameterStore& params,
                       const KnowledgeGraph& g, const InteractionSet& data, std::size_t K) {
  return evaluate(spec, params, forward_pass(spec, params, g, data.item_count), data, K);
}

RankingResult evaluate(const ModelSpec& spec, const ParameterStore& params,
                       const ForwardPass& pass, const InteractionSet& data, std::size_t K) {
  RankingResult result;
  result.k = K;
  std::vector<double> scores(data.item_count);
  for (UserId u = 0; u < data.user_count; ++u) {
    if (data.test[u].empty()) continue;
    const std::vector<double> rep = user_representation(u, spec, params, data, pass);
    for (ItemId i = 0; i < data.item_count; ++i) scores[i] = dot(rep, pass.items.item(i));
    UserRanking r;
    r.user = u;
    r.topk = rank_items(scores, data.train[u], K).items;
    r.recall = *recall_at_k(r.topk, data.test[u]);
    r.ndcg = *ndcg_at_k(r.topk, data.test[u], K);
    result.recall += r.recall;
    result.ndcg += r.ndcg;
    result.users.push_back(std::move(r));
  }
  if (!result.users.empty()) {
    result.recall /= static_cast<double>(result.users.size());
    result.ndcg /= static_cast<double>(result.users.size());
  }
  return result;
}

void write_metrics_tsv(const std::filesystem::path& path, const RankingResult& result) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out.precision(17);
  out << "metric\tK\tvalue\tusers\n";
  out << "recall\t" << result.k << '\t' << result.recall << '\t' << result.users.size() << '\n';
  out << "ndcg\t" << result.k << '\t' << result.ndcg << '\t' << result.users.size() << '\n';
}

void write_per_user_tsv(const std::filesystem::path& path, const RankingResult& result) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out.precision(17);
  out << "user\trecall\tndcg\ttopk\n";
  for (const UserRanking& r : result.users) {
    out << r.user << '\t' << r.recall << '\t' << r.ndcg << '\t';
    for (std::size_t p = 0; p < r.topk.size(); ++p) out << (p ? "," : "") << r.topk[p];
    out << '\n';
  }
}

}  // namespace akgan
