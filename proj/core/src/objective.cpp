#include "saferank/objective.hpp"

#include <algorithm>
#include <string>
#include <tuple>

#include "saferank/errors.hpp"

namespace saferank {

std::string_view to_string(Estimator estimator) {
  return estimator == Estimator::ips ? "ips" : "dr";
}

Estimator parse_estimator(std::string_view text) {
  if (text == "ips") return Estimator::ips;
  if (text == "dr") return Estimator::dr;
  throw ConfigError("unknown estimator '" + std::string(text) + "'");
}

void validate(const ObjectiveSpec& spec) {
  const auto mode = spec.safety.mode;
  if (mode == SafetyMode::safe_ips && spec.estimator != Estimator::ips) {
    throw ConfigError("safe_ips requires the ips estimator");
  }
  if ((mode == SafetyMode::safe_dr || mode == SafetyMode::prpo) && spec.estimator != Estimator::dr) {
    throw ConfigError(std::string(to_string(mode)) + " requires the dr estimator");
  }
  if ((mode == SafetyMode::safe_ips || mode == SafetyMode::safe_dr) &&
      !(spec.safety.delta > 0.0 && spec.safety.delta < 1.0)) {
    throw ConfigError("safety delta must lie in (0, 1)");
  }
}

DocValues divergence_reference(const ClickLog& log, const DocValues& weights) {
  constexpr double kFloorFraction = 1e-3;
  DocValues reference(log.num_queries());
  for (auto q : log.logged_queries()) {
    double sum = 0.0;
    std::size_t positive = 0;
    for (auto w : weights.at(q)) {
      if (w > 0.0) {
        sum += w;
        ++positive;
      }
    }
    const double floor = positive ? kFloorFraction * sum / static_cast<double>(positive) : 1.0;
    reference[q] = weights.at(q);
    for (auto& w : reference[q]) {
      if (w <= 0.0) w = floor;
    }
  }
  return reference;
}

Objective Objective::from_log(const ObjectiveSpec& spec, const ClickLog& log, const BiasParams& bias,
                              bool clip, std::size_t schedule_n) {
  validate(spec);
  if (log.empty()) throw EmptyDataError("objective over an empty click log");
  Objective obj;
  obj.bias_ = bias;
  obj.queries_ = log.logged_queries();
  obj.n_ = log.size();
  obj.counts_.assign(log.num_queries(), 0);
  for (auto q : obj.queries_) obj.counts_[q] = log.stats(q).sessions;
  obj.delta_ = spec.safety.delta;

  const DocValues rho0 = clip ? clip_propensities(log.estimated_rho0(), log.size()) : log.estimated_rho0();
  if (spec.estimator == Estimator::ips) {
    obj.coefficients_ = ips_coefficients(log, rho0, bias, spec.ips_correction);
  }
  RegressionModel regression;
  if (spec.estimator == Estimator::dr) {
    regression = fit_regression(log, bias);
    obj.coefficients_ = dr_coefficients(log, rho0, regression, bias);
  }

  switch (spec.safety.mode) {
    case SafetyMode::none:
      obj.form_ = Form::linear;
      break;
    case SafetyMode::safe_ips:
      obj.form_ = Form::safe_ips;
      obj.divergence_reference_ = divergence_reference(log, log.estimated_rho0());
      break;
    case SafetyMode::safe_dr:
      obj.form_ = Form::safe_dr;
      bias.trust_factor();  // requires every alpha_k > 0
      obj.divergence_reference_ = divergence_reference(log, log.estimated_omega0());
      break;
    case SafetyMode::prpo: {
      obj.form_ = Form::prpo;
      obj.omega0_ = log.estimated_omega0();
      obj.rewards_ = per_doc_reward(log, regression, bias, obj.omega0_, rho0).r;
      std::tie(obj.eps_minus_, obj.eps_plus_) =
          adaptive_epsilons(spec.safety.schedule, schedule_n ? schedule_n : log.size());
      break;
    }
  }
  return obj;
}

Objective Objective::from_labels(const Dataset& dataset, const BiasParams& bias) {
  if (dataset.queries.empty()) throw EmptyDataError("objective over an empty dataset");
  Objective obj;
  obj.bias_ = bias;
  obj.form_ = Form::linear;
  const std::size_t n_queries = dataset.queries.size();
  obj.counts_.assign(n_queries, 1);
  obj.n_ = n_queries;
  obj.coefficients_.resize(n_queries);
  const double inv = 1.0 / static_cast<double>(n_queries);
  for (std::size_t q = 0; q < n_queries; ++q) {
    obj.queries_.push_back(static_cast<std::uint32_t>(q));
    for (const auto& doc : dataset.queries[q].documents) {
      obj.coefficients_[q].push_back(relevance_probability(doc.relevance_label) * inv);
    }
  }
  return obj;
}

ObjectiveValue Objective::evaluate(std::span<const ExposureProfile> profiles, bool with_gradient,
                                   bool detach_penalty) const {
  if (profiles.size() != counts_.size()) throw ContractError("one exposure profile per query slot expected");
  ObjectiveValue out;
  DocValues omega(counts_.size());
  DocValues rho;
  if (form_ == Form::safe_ips) rho.resize(counts_.size());
  for (auto q : queries_) {
    if (profiles[q].omega.size() != coefficients_[q].size()) {
      throw ContractError("exposure profile does not match the query's documents");
    }
    omega[q] = profiles[q].omega;
    if (form_ == Form::safe_ips) rho[q] = profiles[q].rho;
  }

  if (form_ == Form::prpo) {
    const double inv_n = 1.0 / static_cast<double>(n_);
    const auto ratios = weight_ratios(omega, omega0_);
    out.value = prpo_objective(ratios, rewards_, eps_minus_, eps_plus_) * inv_n;
    out.estimate = out.value;
    if (with_gradient) {
      out.d_omega.resize(counts_.size());
      for (auto q : queries_) {
        auto& row = out.d_omega[q];
        row.assign(omega[q].size(), 0.0);
        for (std::size_t d = 0; d < row.size(); ++d) {
          if (omega0_[q][d] <= 0.0) continue;
          const double r = rewards_[q][d];
          if (prpo_gradient_mask(ratios[q][d], eps_minus_, eps_plus_, r)) {
            row[d] = r / omega0_[q][d] * inv_n;
          }
        }
      }
    }
    return out;
  }

  for (auto q : queries_) {
    for (std::size_t d = 0; d < omega[q].size(); ++d) out.estimate += coefficients_[q][d] * omega[q][d];
  }
  out.value = out.estimate;
  if (with_gradient) out.d_omega = coefficients_;
  if (form_ == Form::linear) return out;

  const DocValues& weights = form_ == Form::safe_ips ? rho : omega;
  const auto report = renyi_divergence(weights, divergence_reference_, counts_);
  out.penalty = form_ == Form::safe_ips ? safe_ips_penalty(report, delta_)
                                        : safe_dr_penalty(report, delta_, bias_);
  out.value = out.estimate - out.penalty;
  if (!with_gradient || detach_penalty || out.penalty <= 0.0) {
    if (with_gradient && form_ == Form::safe_ips) out.d_rho.resize(counts_.size());
    return out;
  }
  // penalty = sqrt(c * d2), so d penalty / d d2 = penalty / (2 d2).
  const double factor = out.penalty / (2.0 * report.d2);
  const auto d_div = renyi_divergence_gradient(weights, divergence_reference_, counts_);
  DocValues& target = form_ == Form::safe_ips ? out.d_rho : out.d_omega;
  if (form_ == Form::safe_ips) target.resize(counts_.size());
  for (auto q : queries_) {
    if (target[q].empty()) target[q].assign(d_div[q].size(), 0.0);
    for (std::size_t d = 0; d < d_div[q].size(); ++d) target[q][d] -= factor * d_div[q][d];
  }
  return out;
}

}  // namespace saferank
