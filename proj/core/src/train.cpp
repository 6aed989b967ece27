#include "saferank/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "saferank/errors.hpp"
#include "saferank/rng.hpp"

namespace saferank {

void validate(const TrainConfig& config) {
  validate(config.objective);
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (config.max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (config.patience == 0) throw ConfigError("patience must be positive");
  if (config.batch_queries == 0) throw ConfigError("batch_queries must be positive");
  if (config.mc_samples_per_query < 2) throw ConfigError("mc_samples_per_query must be at least 2");
  if (config.validation_mc_samples == 0) throw ConfigError("validation_mc_samples must be positive");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

std::vector<ExposureProfile> policy_profiles(const RankingPolicy& policy, const Dataset& dataset,
                                             const std::vector<std::uint32_t>& queries,
                                             const BiasParams& bias, std::size_t n_samples,
                                             ExposureMode mode, std::uint64_t seed) {
  std::vector<ExposureProfile> profiles(dataset.queries.size());
  for (auto q : queries) {
    Rng rng = make_stream(seed, q);
    profiles.at(q) = exposure_profile(policy, dataset.queries[q], bias, n_samples, mode, rng);
  }
  return profiles;
}

namespace {

// Return of one ranking under per-document derivatives of the objective.
double ranking_return(std::span<const std::uint32_t> docs, const std::vector<double>& d_omega,
                      const std::vector<double>* d_rho, const BiasParams& bias) {
  double total = 0.0;
  for (std::size_t t = 0; t < docs.size(); ++t) {
    total += bias.metric_weight_at(t + 1) * d_omega[docs[t]];
    if (d_rho && !d_rho->empty()) total += bias.alpha_at(t + 1) * (*d_rho)[docs[t]];
  }
  return total;
}

const std::vector<double>* rho_row(const ObjectiveValue& value, std::uint32_t q) {
  return value.d_rho.empty() ? nullptr : &value.d_rho[q];
}

void check_finite(std::span<const double> grad) {
  for (double g : grad) {
    if (!std::isfinite(g)) throw std::runtime_error("non-finite policy gradient; aborting training");
  }
}

}  // namespace

PolicyGradient exact_policy_gradient(const RankingPolicy& policy, const Dataset& dataset,
                                     const Objective& objective, const BiasParams& bias,
                                     bool detach_penalty) {
  std::vector<ExposureProfile> profiles(dataset.queries.size());
  std::vector<std::vector<WeightedRanking>> enumerated(dataset.queries.size());
  for (auto q : objective.queries()) {
    const auto& query = dataset.queries.at(q);
    PlackettLuce pl(policy_scores(policy, query), policy.temperature);
    enumerated[q] = enumerate_rankings(pl, policy.display_length(query.size()));
    profiles[q] = exposure_from_enumeration(enumerated[q], query.size(), bias);
  }
  const auto value = objective.evaluate(profiles, true, detach_penalty);
  PolicyGradient out;
  out.value = value.value;
  out.gradient.assign(policy.scorer.num_parameters(), 0.0);
  for (auto q : objective.queries()) {
    const auto& query = dataset.queries[q];
    PlackettLuce pl(policy_scores(policy, query), policy.temperature);
    std::vector<double> dscores(query.size(), 0.0);
    for (const auto& ranking : enumerated[q]) {
      const double r = ranking_return(ranking.docs, value.d_omega[q], rho_row(value, q), bias);
      pl.accumulate_log_prob_gradient(ranking.docs, ranking.probability * r, dscores);
    }
    chain_score_gradient(policy.scorer, query, dscores, out.gradient);
  }
  return out;
}

TrainReport train_against(const RankingPolicy& init, const Dataset& train, const Objective& objective,
                          const Dataset& validation, const Objective& validation_objective,
                          const TrainConfig& config, const BiasParams& bias) {
  validate(config);
  if (objective.queries().empty()) throw EmptyDataError("training objective covers no queries");
  if (objective.num_slots() != train.queries.size() ||
      validation_objective.num_slots() != validation.queries.size()) {
    throw ContractError("objective does not match its dataset");
  }

  RankingPolicy policy = init;
  const auto& queries = objective.queries();
  const std::size_t m = config.mc_samples_per_query;
  const std::size_t n_params = policy.scorer.num_parameters();
  std::vector<double> velocity(n_params, 0.0);
  std::vector<double> grad(n_params, 0.0);

  Rng order_rng = make_stream(config.seed, 0x0de7);
  const std::uint64_t sample_seed = mix_seed(config.seed, 0x5a3);
  const std::uint64_t validation_seed = mix_seed(config.seed, 0x7a1);

  auto profiles = policy_profiles(policy, train, queries, bias, m, ExposureMode::monte_carlo,
                                  mix_seed(sample_seed, 0));
  TrainReport report;
  report.final_policy = policy;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::uint32_t> order = queries;
  std::vector<std::vector<std::vector<std::uint32_t>>> batch_samples;
  std::vector<double> returns(m);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_queries) {
      const std::size_t end = std::min(order.size(), start + config.batch_queries);
      std::vector<PlackettLuce> distributions;
      distributions.reserve(end - start);
      batch_samples.resize(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto q = order[b];
        const auto& query = train.queries[q];
        distributions.emplace_back(policy_scores(policy, query), policy.temperature);
        Rng rng = make_stream(mix_seed(sample_seed, epoch), q);
        auto& samples = batch_samples[b - start];
        samples.resize(m);
        for (auto& docs : samples) distributions.back().sample(rng, policy.display_length(query.size()), docs);
        profiles[q] = exposure_from_rankings(samples, query.size(), bias);
      }
      const auto value = objective.evaluate(profiles, true, config.detached_penalty);

      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto q = order[b];
        const auto& query = train.queries[q];
        const auto& pl = distributions[b - start];
        const auto& samples = batch_samples[b - start];
        double total = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
          returns[s] = ranking_return(samples[s], value.d_omega[q], rho_row(value, q), bias);
          total += returns[s];
        }
        std::vector<double> dscores(query.size(), 0.0);
        for (std::size_t s = 0; s < m; ++s) {
          const double baseline = config.control_variate ? (total - returns[s]) / static_cast<double>(m - 1) : 0.0;
          pl.accumulate_log_prob_gradient(samples[s], (returns[s] - baseline) / static_cast<double>(m), dscores);
        }
        chain_score_gradient(policy.scorer, query, dscores, grad);
      }
      const double scale = static_cast<double>(queries.size()) / static_cast<double>(end - start);
      for (auto& g : grad) g *= scale;
      check_finite(grad);
      auto params = policy.scorer.parameters();
      for (std::size_t i = 0; i < n_params; ++i) {
        velocity[i] = config.momentum * velocity[i] + grad[i];
        params[i] += config.learning_rate * velocity[i];
      }
    }

    profiles = policy_profiles(policy, train, queries, bias, m, ExposureMode::monte_carlo,
                               mix_seed(sample_seed, epoch + 0x10000));
    report.objective_trace.push_back(objective.evaluate(profiles, false).value);
    const auto validation_profiles =
        policy_profiles(policy, validation, validation_objective.queries(), bias,
                        config.validation_mc_samples, ExposureMode::monte_carlo, validation_seed);
    const double validation_value = validation_objective.evaluate(validation_profiles, false).value;
    report.validation_trace.push_back(validation_value);
    report.epochs_run = epoch;
    if (validation_value > best) {
      best = validation_value;
      report.final_policy = policy;
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      report.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  report.best_validation_value = best;
  return report;
}

TrainReport train_policy(const RankingPolicy& init, const Dataset& train, const ClickLog& log,
                         const Dataset& validation, const ClickLog& validation_log,
                         const TrainConfig& config, const BiasParams& bias) {
  if (log.empty()) throw EmptyDataError("empty training log");
  if (validation_log.empty()) throw EmptyDataError("empty validation log");
  const auto objective = Objective::from_log(config.objective, log, bias, true);
  const auto validation_objective =
      Objective::from_log(config.objective, validation_log, bias, false, log.size());
  return train_against(init, train, objective, validation, validation_objective, config, bias);
}

TrainReport train_skyline(const RankingPolicy& init, const Dataset& train, const Dataset& validation,
                          const TrainConfig& config, const BiasParams& bias) {
  const auto objective = Objective::from_labels(train, bias);
  const auto validation_objective = Objective::from_labels(validation, bias);
  return train_against(init, train, objective, validation, validation_objective, config, bias);
}

}  // namespace saferank
