#include "saferank/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "saferank/errors.hpp"

namespace saferank {

std::optional<std::size_t> Ranking::rank_of(std::uint32_t doc) const noexcept {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i] == doc) return i + 1;
  }
  return std::nullopt;
}

PlackettLuce::PlackettLuce(std::span<const double> scores, double temperature)
    : logits_(scores.size()), weights_(scores.size()), temperature_(temperature) {
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ContractError("non-finite document score");
    logits_[i] = scores[i] / temperature;
    max_logit = std::max(max_logit, logits_[i]);
  }
  for (std::size_t i = 0; i < scores.size(); ++i) weights_[i] = std::exp(logits_[i] - max_logit);
}

void PlackettLuce::sample(Rng& rng, std::size_t length, std::vector<std::uint32_t>& out) const {
  const std::size_t n = logits_.size();
  length = std::min(length, n);
  out.clear();
  if (length == 0) return;

  // Small lists: keep a taken mask and rescan. Rescale when the remaining mass underflows.
  thread_local std::vector<double> weights;
  thread_local std::vector<char> taken;
  weights.assign(weights_.begin(), weights_.end());
  taken.assign(n, 0);
  for (std::size_t step = 0; step < length; ++step) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) total += weights[i];
    }
    if (!(total > 1e-280)) {
      double max_logit = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) max_logit = std::max(max_logit, logits_[i]);
      }
      total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) {
          weights[i] = std::exp(logits_[i] - max_logit);
          total += weights[i];
        }
      }
    }
    double target = uniform01(rng) * total;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      chosen = i;
      target -= weights[i];
      if (target < 0.0) break;
    }
    taken[chosen] = 1;
    out.push_back(static_cast<std::uint32_t>(chosen));
  }
}

double PlackettLuce::log_probability(std::span<const std::uint32_t> prefix) const {
  const std::size_t n = logits_.size();
  std::vector<char> taken(n, 0);
  double log_p = 0.0;
  for (auto doc : prefix) {
    if (doc >= n || taken[doc]) throw ContractError("invalid ranking prefix");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) max_logit = std::max(max_logit, logits_[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) total += std::exp(logits_[i] - max_logit);
    }
    log_p += logits_[doc] - max_logit - std::log(total);
    taken[doc] = 1;
  }
  return log_p;
}

void PlackettLuce::accumulate_log_prob_gradient(std::span<const std::uint32_t> prefix,
                                                double weight, std::span<double> dscores) const {
  const std::size_t n = logits_.size();
  if (dscores.size() != n) throw ContractError("score gradient buffer size mismatch");
  if (weight == 0.0) return;
  thread_local std::vector<char> taken;
  thread_local std::vector<double> probs;
  taken.assign(n, 0);
  probs.assign(n, 0.0);
  const double scale = weight / temperature_;
  for (auto doc : prefix) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) max_logit = std::max(max_logit, logits_[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = taken[i] ? 0.0 : std::exp(logits_[i] - max_logit);
      total += probs[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) dscores[i] -= scale * probs[i] / total;
    }
    dscores[doc] += scale;
    taken[doc] = 1;
  }
}

namespace {

void enumerate_recursive(std::span<const double> logits, std::size_t length,
                         std::vector<std::uint32_t>& prefix, std::vector<char>& taken,
                         double probability, std::vector<WeightedRanking>& out) {
  if (prefix.size() == length) {
    out.push_back(WeightedRanking{prefix, probability});
    return;
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!taken[i]) max_logit = std::max(max_logit, logits[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!taken[i]) total += std::exp(logits[i] - max_logit);
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (taken[i]) continue;
    const double p = std::exp(logits[i] - max_logit) / total;
    taken[i] = 1;
    prefix.push_back(static_cast<std::uint32_t>(i));
    enumerate_recursive(logits, length, prefix, taken, probability * p, out);
    prefix.pop_back();
    taken[i] = 0;
  }
}

}  // namespace

std::vector<WeightedRanking> enumerate_rankings(const PlackettLuce& distribution,
                                                std::size_t length, std::size_t max_docs) {
  const std::size_t n = distribution.size();
  if (n > max_docs) {
    throw ContractError("enumeration over " + std::to_string(n) + " documents exceeds the guard of " +
                        std::to_string(max_docs));
  }
  length = std::min(length, n);
  std::vector<WeightedRanking> out;
  std::vector<std::uint32_t> prefix;
  std::vector<char> taken(n, 0);
  enumerate_recursive(distribution.logits(), length, prefix, taken, 1.0, out);
  return out;
}

std::vector<double> policy_scores(const RankingPolicy& policy, const Query& query) {
  return score_documents(policy.scorer, query);
}

Ranking sample_ranking(const RankingPolicy& policy, const Query& query, Rng& rng,
                       std::uint32_t query_index) {
  PlackettLuce distribution(policy_scores(policy, query), policy.temperature);
  Ranking ranking;
  ranking.query_index = query_index;
  distribution.sample(rng, policy.display_length(query.size()), ranking.docs);
  return ranking;
}

Ranking greedy_ranking(const RankingPolicy& policy, const Query& query, std::uint32_t query_index) {
  auto scores = policy_scores(policy, query);
  std::vector<std::uint32_t> order(query.size());
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return query.documents[a].doc_id < query.documents[b].doc_id;
  });
  order.resize(policy.display_length(query.size()));
  return Ranking{query_index, std::move(order)};
}

ExposureProfile exposure_from_rankings(std::span<const std::vector<std::uint32_t>> rankings,
                                       std::size_t n_docs, const BiasParams& bias) {
  if (rankings.empty()) throw ContractError("exposure profile needs at least one ranking");
  ExposureProfile profile;
  profile.rho.assign(n_docs, 0.0);
  profile.omega.assign(n_docs, 0.0);
  for (const auto& docs : rankings) {
    for (std::size_t t = 0; t < docs.size(); ++t) {
      profile.rho[docs[t]] += bias.alpha_at(t + 1);
      profile.omega[docs[t]] += bias.metric_weight_at(t + 1);
    }
  }
  const double inv = 1.0 / static_cast<double>(rankings.size());
  for (std::size_t d = 0; d < n_docs; ++d) {
    profile.rho[d] *= inv;
    profile.omega[d] *= inv;
  }
  const std::size_t length = rankings.front().size();
  profile.z_alpha = bias.alpha_mass(length);
  profile.z_omega = bias.metric_mass(length);
  profile.n_samples = rankings.size();
  return profile;
}

ExposureProfile exposure_from_enumeration(std::span<const WeightedRanking> rankings,
                                          std::size_t n_docs, const BiasParams& bias) {
  if (rankings.empty()) throw ContractError("exposure profile needs at least one ranking");
  ExposureProfile profile;
  profile.rho.assign(n_docs, 0.0);
  profile.omega.assign(n_docs, 0.0);
  for (const auto& ranking : rankings) {
    for (std::size_t t = 0; t < ranking.docs.size(); ++t) {
      profile.rho[ranking.docs[t]] += ranking.probability * bias.alpha_at(t + 1);
      profile.omega[ranking.docs[t]] += ranking.probability * bias.metric_weight_at(t + 1);
    }
  }
  const std::size_t length = rankings.front().docs.size();
  profile.z_alpha = bias.alpha_mass(length);
  profile.z_omega = bias.metric_mass(length);
  profile.n_samples = 0;
  return profile;
}

ExposureProfile exposure_profile(const RankingPolicy& policy, const Query& query,
                                 const BiasParams& bias, std::size_t n_samples, ExposureMode mode,
                                 Rng& rng) {
  PlackettLuce distribution(policy_scores(policy, query), policy.temperature);
  const std::size_t length = policy.display_length(query.size());
  if (mode == ExposureMode::enumerate) {
    auto rankings = enumerate_rankings(distribution, length);
    return exposure_from_enumeration(rankings, query.size(), bias);
  }
  if (n_samples == 0) throw ContractError("monte_carlo exposure needs n_samples > 0");
  std::vector<std::vector<std::uint32_t>> rankings(n_samples);
  for (auto& docs : rankings) distribution.sample(rng, length, docs);
  return exposure_from_rankings(rankings, query.size(), bias);
}

void chain_score_gradient(const Scorer& scorer, const Query& query, std::span<const double> dscores,
                          std::span<double> grad) {
  if (dscores.size() != query.size()) throw ContractError("score gradient length mismatch");
  for (std::size_t d = 0; d < query.size(); ++d) {
    scorer.accumulate_gradient(query.documents[d].features, dscores[d], grad);
  }
}

std::vector<double> reinforce_gradient(const RankingPolicy& policy, const Query& query,
                                       std::span<const Ranking> rankings,
                                       std::span<const double> per_doc_reward, double baseline,
                                       std::span<const double> rank_weights) {
  if (rankings.empty()) throw ContractError("reinforce_gradient needs at least one ranking");
  if (per_doc_reward.size() != query.size()) throw ContractError("per-document reward size mismatch");
  PlackettLuce distribution(policy_scores(policy, query), policy.temperature);
  std::vector<double> dscores(query.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(rankings.size());
  for (const auto& ranking : rankings) {
    double reward = 0.0;
    for (std::size_t t = 0; t < ranking.docs.size(); ++t) {
      double w = rank_weights.empty() ? 1.0 : (t < rank_weights.size() ? rank_weights[t] : 0.0);
      reward += w * per_doc_reward[ranking.docs[t]];
    }
    distribution.accumulate_log_prob_gradient(ranking.docs, (reward - baseline) * inv, dscores);
  }
  std::vector<double> grad(policy.scorer.num_parameters(), 0.0);
  chain_score_gradient(policy.scorer, query, dscores, grad);
  return grad;
}

double dcg_weight(std::size_t rank) {
  if (rank < 1) throw std::domain_error("rank must be >= 1");
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

}  // namespace saferank
