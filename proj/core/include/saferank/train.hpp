#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "saferank/bias.hpp"
#include "saferank/data.hpp"
#include "saferank/objective.hpp"
#include "saferank/policy.hpp"
#include "saferank/simulate.hpp"

namespace saferank {

struct TrainConfig {
  ObjectiveSpec objective;
  double learning_rate = 1e-2;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t batch_queries = 10;
  std::size_t mc_samples_per_query = 32;
  std::size_t validation_mc_samples = 64;
  std::uint64_t seed = 0;
  double momentum = 0.0;
  /// Leave-one-out per-query mean reward subtracted from each sampled ranking's return.
  bool control_variate = true;
  /// Keeps the safety penalty in the objective value but drops it from the gradient.
  bool detached_penalty = false;
};

void validate(const TrainConfig& config);

struct TrainReport {
  RankingPolicy final_policy;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_validation_value = 0.0;
  std::vector<double> objective_trace;
  std::vector<double> validation_trace;
  bool stopped_early = false;
};

/// Stochastic policy-gradient ascent on `objective`, evaluated over `train`'s queries, with
/// early stopping on `validation_objective` over `validation`'s queries. The best policy
/// by validation value is returned.
TrainReport train_against(const RankingPolicy& init, const Dataset& train, const Objective& objective,
                          const Dataset& validation, const Objective& validation_objective,
                          const TrainConfig& config, const BiasParams& bias);

/// Click-based training: the objective is built from `log` (clipped propensities) and early
/// stopping uses the same objective on `validation_log` (unclipped propensities).
TrainReport train_policy(const RankingPolicy& init, const Dataset& train, const ClickLog& log,
                         const Dataset& validation, const ClickLog& validation_log,
                         const TrainConfig& config, const BiasParams& bias);

/// Trains on the true expected utility of the labels, early-stopped on the validation labels.
TrainReport train_skyline(const RankingPolicy& init, const Dataset& train, const Dataset& validation,
                          const TrainConfig& config, const BiasParams& bias);

struct PolicyGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Objective value and its exact parameter gradient, with every query's ranking
/// distribution enumerated. Intended for small fixtures.
PolicyGradient exact_policy_gradient(const RankingPolicy& policy, const Dataset& dataset,
                                     const Objective& objective, const BiasParams& bias,
                                     bool detach_penalty = false);

/// Exposure profiles of `policy` for the given query slots; other slots stay empty.
std::vector<ExposureProfile> policy_profiles(const RankingPolicy& policy, const Dataset& dataset,
                                             const std::vector<std::uint32_t>& queries,
                                             const BiasParams& bias, std::size_t n_samples,
                                             ExposureMode mode, std::uint64_t seed);

}  // namespace saferank
