#pragma once

// Full-ranking top-K evaluation with Recall@K and NDCG@K.

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "akgan/model.hpp"

namespace akgan {

struct TopK {
  std::vector<ItemId> items;
  bool truncated = false;  // fewer than K candidates were available
};

/// Items by descending score, ties by ascending id, excluding train_items
/// (which must be sorted).
TopK rank_items(std::span<const double> scores, std::span<const ItemId> train_items,
                std::size_t K);

TopK rank_items(std::span<const double> user_rep, const ItemRepresentation& item_reps,
                std::span<const ItemId> train_items, std::size_t K);

/// |topk ∩ test| / |test|; nullopt when test is empty. test must be sorted.
std::optional<double> recall_at_k(std::span<const ItemId> topk, std::span<const ItemId> test);

/// Binary-gain NDCG with log2 discount and IDCG truncated at min(|test|, K),
/// K = topk.size(). nullopt when test is empty.
std::optional<double> ndcg_at_k(std::span<const ItemId> topk, std::span<const ItemId> test,
                                std::size_t K);

struct UserRanking {
  UserId user = 0;
  std::vector<ItemId> topk;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct RankingResult {
  std::size_t k = 20;
  std::vector<UserRanking> users;  // users with a nonempty test list
  double recall = 0.0;
  double ndcg = 0.0;
};

RankingResult evaluate(const ModelSpec& spec, const ParameterStore& params,
                       const KnowledgeGraph& g, const InteractionSet& data, std::size_t K = 20);

/// Same, reusing an already computed forward pass.
RankingResult evaluate(const ModelSpec& spec, const ParameterStore& params,
                       const ForwardPass& pass, const InteractionSet& data, std::size_t K = 20);

/// TSV: metric, K, value, users.
void write_metrics_tsv(const std::filesystem::path& path, const RankingResult& result);
/// TSV: user, recall, ndcg, top-K ids (comma separated).
void write_per_user_tsv(const std::filesystem::path& path, const RankingResult& result);

}  // namespace akgan
