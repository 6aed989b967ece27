#include "saferank/estimate.hpp"

#include <algorithm>
#include <cmath>

#include "saferank/errors.hpp"

namespace saferank {

namespace {

void require_cover(const ClickLog& log, const DocValues& values, const char* what) {
  if (values.size() != log.num_queries()) {
    throw ContractError(std::string(what) + " must have one slot per query");
  }
  for (auto q : log.logged_queries()) {
    if (values[q].size() != log.doc_count(q)) {
      throw ContractError(std::string(what) + " does not cover every logged document");
    }
  }
}

// (1 / rho) * numerator, where a zero numerator on an unexposed document contributes 0.
double inverse_weight(double numerator, double rho, bool touched) {
  if (rho > 0.0) return numerator / rho;
  if (touched) throw ContractError("zero propensity on a displayed document; clip propensities first");
  return 0.0;
}

}  // namespace

RegressionModel fit_regression(const ClickLog& log, const BiasParams& bias) {
  RegressionModel model;
  model.r_hat.resize(log.num_queries());
  for (auto q : log.logged_queries()) {
    const auto& stats = log.stats(q);
    auto& row = model.r_hat[q];
    row.resize(log.doc_count(q));
    for (std::size_t d = 0; d < row.size(); ++d) {
      const double denominator = stats.alpha_sum(d, bias);
      if (denominator <= 0.0) {
        row[d] = 0.5;
        continue;
      }
      const double numerator = stats.clicks(d) - stats.beta_sum(d, bias);
      row[d] = std::clamp(numerator / denominator, 0.0, 1.0);
    }
  }
  return model;
}

DocValues ips_coefficients(const ClickLog& log, const DocValues& rho0, const BiasParams& bias,
                           IpsCorrection correction) {
  require_cover(log, rho0, "propensities");
  const double inv_n = 1.0 / static_cast<double>(log.size());
  DocValues g(log.num_queries());
  for (auto q : log.logged_queries()) {
    const auto& stats = log.stats(q);
    g[q].resize(log.doc_count(q));
    for (std::size_t d = 0; d < g[q].size(); ++d) {
      double numerator = stats.clicks(d);
      if (correction == IpsCorrection::affine) numerator -= stats.beta_sum(d, bias);
      const bool touched = stats.times_shown(d) > 0.0;
      g[q][d] = inverse_weight(numerator, rho0[q][d], touched && numerator != 0.0) * inv_n;
    }
  }
  return g;
}

DocValues dm_coefficients(const ClickLog& log, const RegressionModel& regression) {
  require_cover(log, regression.r_hat, "regression");
  const double inv_n = 1.0 / static_cast<double>(log.size());
  DocValues g(log.num_queries());
  for (auto q : log.logged_queries()) {
    const double n_q = static_cast<double>(log.stats(q).sessions);
    g[q].resize(log.doc_count(q));
    for (std::size_t d = 0; d < g[q].size(); ++d) g[q][d] = n_q * regression.r_hat[q][d] * inv_n;
  }
  return g;
}

DocValues dr_coefficients(const ClickLog& log, const DocValues& rho0,
                          const RegressionModel& regression, const BiasParams& bias) {
  require_cover(log, rho0, "propensities");
  DocValues g = dm_coefficients(log, regression);
  const double inv_n = 1.0 / static_cast<double>(log.size());
  for (auto q : log.logged_queries()) {
    const auto& stats = log.stats(q);
    for (std::size_t d = 0; d < g[q].size(); ++d) {
      const double residual = stats.clicks(d) - regression.r_hat[q][d] * stats.alpha_sum(d, bias) -
                              stats.beta_sum(d, bias);
      const bool touched = stats.times_shown(d) > 0.0;
      g[q][d] += inverse_weight(residual, rho0[q][d], touched) * inv_n;
    }
  }
  return g;
}

double linear_estimate(const ClickLog& log, const DocValues& coefficients, const DocValues& omega) {
  require_cover(log, omega, "metric weights");
  double total = 0.0;
  for (auto q : log.logged_queries()) {
    double query_total = 0.0;
    for (std::size_t d = 0; d < coefficients[q].size(); ++d) query_total += coefficients[q][d] * omega[q][d];
    total += query_total;
  }
  return total;
}

double ips_utility(const ClickLog& log, const DocValues& omega, const DocValues& rho0,
                   const BiasParams& bias, IpsCorrection correction) {
  return linear_estimate(log, ips_coefficients(log, rho0, bias, correction), omega);
}

double dm_utility(const ClickLog& log, const DocValues& omega, const RegressionModel& regression) {
  return linear_estimate(log, dm_coefficients(log, regression), omega);
}

double dr_utility(const ClickLog& log, const DocValues& omega, const DocValues& rho0,
                  const RegressionModel& regression, const BiasParams& bias) {
  return linear_estimate(log, dr_coefficients(log, rho0, regression, bias), omega);
}

DocReward per_doc_reward(const ClickLog& log, const RegressionModel& regression,
                         const BiasParams& bias, const DocValues& omega0, const DocValues& rho0) {
  require_cover(log, omega0, "logging metric weights");
  DocValues g = dr_coefficients(log, rho0, regression, bias);
  const double n = static_cast<double>(log.size());
  DocReward reward;
  reward.r.resize(log.num_queries());
  for (auto q : log.logged_queries()) {
    reward.r[q].resize(g[q].size());
    for (std::size_t d = 0; d < g[q].size(); ++d) {
      const double value = omega0[q][d] > 0.0 ? omega0[q][d] * g[q][d] * n : 0.0;
      if (!std::isfinite(value)) throw ContractError("non-finite per-document reward");
      reward.r[q][d] = value;
    }
  }
  return reward;
}

}  // namespace saferank
