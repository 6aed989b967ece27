#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "saferank/data.hpp"
#include "saferank/policy.hpp"

namespace saferank {

enum class EvalMode { greedy, expected };

std::string_view to_string(EvalMode mode);

struct EvalReport {
  double ndcg_at_k = 0.0;
  EvalMode mode = EvalMode::expected;
  std::size_t k = 5;
  std::vector<double> per_query;  // in dataset query order
  std::size_t mc_samples = 0;     // 0 in greedy mode
};

/// Gain 2^label - 1 discounted by log2(rank + 1) over the first k positions of `ranking`.
double dcg_at_k(const Query& query, std::span<const std::uint32_t> ranking, std::size_t k);
/// DCG of the descending-label ordering.
double ideal_dcg_at_k(const Query& query, std::size_t k);
/// DCG / IDCG, or 1.0 when the ideal DCG is zero. Throws std::domain_error when k < 1.
double query_ndcg(const Query& query, std::span<const std::uint32_t> ranking, std::size_t k);

/// Mean per-query NDCG@k of `policy` on `dataset`. The expected mode averages each query
/// over `mc_samples` sampled rankings drawn from substreams of `seed`.
EvalReport ndcg_at_k(const RankingPolicy& policy, const Dataset& dataset, std::size_t k,
                     EvalMode mode, std::size_t mc_samples = 100, std::uint64_t seed = 0);

}  // namespace saferank
