#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "saferank/bias.hpp"
#include "saferank/data.hpp"
#include "saferank/rng.hpp"
#include "saferank/scorer.hpp"

namespace saferank {

/// Plackett-Luce distribution over top-K rankings induced by a scorer.
struct RankingPolicy {
  Scorer scorer;
  std::size_t top_k = 5;
  double temperature = 1.0;

  /// Number of displayed positions for a query with `n_docs` candidates.
  std::size_t display_length(std::size_t n_docs) const noexcept {
    return n_docs < top_k ? n_docs : top_k;
  }
};

/// A displayed top-K ranking; docs are indices into the query's document list.
struct Ranking {
  std::uint32_t query_index = 0;
  std::vector<std::uint32_t> docs;

  /// 1-based rank of `doc`, or nullopt when not displayed.
  std::optional<std::size_t> rank_of(std::uint32_t doc) const noexcept;

  bool operator==(const Ranking&) const = default;
};

/// Sequential softmax sampling without replacement over one query's scores.
class PlackettLuce {
 public:
  PlackettLuce(std::span<const double> scores, double temperature);

  std::size_t size() const noexcept { return logits_.size(); }
  double temperature() const noexcept { return temperature_; }
  std::span<const double> logits() const noexcept { return logits_; }

  /// Draws `length` distinct documents; `out` is overwritten.
  void sample(Rng& rng, std::size_t length, std::vector<std::uint32_t>& out) const;

  double log_probability(std::span<const std::uint32_t> prefix) const;

  /// dscores += weight * d log P(prefix) / d scores.
  void accumulate_log_prob_gradient(std::span<const std::uint32_t> prefix, double weight,
                                    std::span<double> dscores) const;

 private:
  std::vector<double> logits_;   // scores / temperature
  std::vector<double> weights_;  // exp(logit - max logit)
  double temperature_;
};

struct WeightedRanking {
  std::vector<std::uint32_t> docs;
  double probability = 0.0;
};

/// Every ordered prefix of length min(length, n) with its probability.
/// Throws ContractError when n exceeds `max_docs`.
std::vector<WeightedRanking> enumerate_rankings(const PlackettLuce& distribution,
                                                std::size_t length, std::size_t max_docs = 8);

std::vector<double> policy_scores(const RankingPolicy& policy, const Query& query);

Ranking sample_ranking(const RankingPolicy& policy, const Query& query, Rng& rng,
                       std::uint32_t query_index = 0);

/// Descending score order, ties broken by ascending doc id; truncated to top_k.
Ranking greedy_ranking(const RankingPolicy& policy, const Query& query,
                       std::uint32_t query_index = 0);

/// Expected examination (rho) and metric weight (omega) per document.
struct ExposureProfile {
  std::vector<double> rho;
  std::vector<double> omega;
  double z_alpha = 0.0;
  double z_omega = 0.0;
  std::size_t n_samples = 0;  // 0 when computed by enumeration
};

enum class ExposureMode { monte_carlo, enumerate };

ExposureProfile exposure_profile(const RankingPolicy& policy, const Query& query,
                                 const BiasParams& bias, std::size_t n_samples, ExposureMode mode,
                                 Rng& rng);

/// Monte-Carlo profile over already drawn rankings of a query with `n_docs` documents.
ExposureProfile exposure_from_rankings(std::span<const std::vector<std::uint32_t>> rankings,
                                       std::size_t n_docs, const BiasParams& bias);

/// Exact profile from an enumerated distribution.
ExposureProfile exposure_from_enumeration(std::span<const WeightedRanking> rankings,
                                          std::size_t n_docs, const BiasParams& bias);

/// grad += sum_d dscores[d] * d score(d) / d parameters.
void chain_score_gradient(const Scorer& scorer, const Query& query, std::span<const double> dscores,
                          std::span<double> grad);

/// REINFORCE estimate (1/M) sum_m (R(y_m) - baseline) grad log pi(y_m | q), where
/// R(y) = sum_t rank_weights[t] * per_doc_reward[y_t]. An empty `rank_weights` weighs
/// every displayed position by 1.
std::vector<double> reinforce_gradient(const RankingPolicy& policy, const Query& query,
                                       std::span<const Ranking> rankings,
                                       std::span<const double> per_doc_reward, double baseline,
                                       std::span<const double> rank_weights = {});

/// 1 / log2(rank + 1) for 1-based ranks.
double dcg_weight(std::size_t rank);

}  // namespace saferank
