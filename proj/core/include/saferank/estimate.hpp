#pragma once

#include <cstddef>

#include "saferank/bias.hpp"
#include "saferank/simulate.hpp"

namespace saferank {

/// Estimated relevance R-hat(d|q) in [0, 1] for every doc of every logged query.
struct RegressionModel {
  DocValues r_hat;
};

/// Estimated per-document reward r(d|q) used by the clipped objective; may be negative.
struct DocReward {
  DocValues r;
};

/// Bias-corrected click-through rate clamp(sum(c - beta) / sum(alpha), 0, 1) per (q, d);
/// 0.5 for documents that were never displayed.
RegressionModel fit_regression(const ClickLog& log, const BiasParams& bias);

enum class IpsCorrection { none, affine };

/// Coefficients g with estimate(omega) = sum_q sum_d g[q][d] * omega[q][d].
/// The plain form weighs clicks, the affine form clicks minus beta at the displayed rank.
/// Throws ContractError on a zero propensity for a document with displays or clicks.
DocValues ips_coefficients(const ClickLog& log, const DocValues& rho0, const BiasParams& bias,
                           IpsCorrection correction = IpsCorrection::none);
DocValues dm_coefficients(const ClickLog& log, const RegressionModel& regression);
DocValues dr_coefficients(const ClickLog& log, const DocValues& rho0,
                          const RegressionModel& regression, const BiasParams& bias);

/// sum_q sum_d coefficients[q][d] * omega[q][d] over the logged queries.
double linear_estimate(const ClickLog& log, const DocValues& coefficients, const DocValues& omega);

/// (1/N) sum_i sum_d (omega_i(d) / rho0(d)) c_i(d), optionally with c - beta.
double ips_utility(const ClickLog& log, const DocValues& omega, const DocValues& rho0,
                   const BiasParams& bias, IpsCorrection correction = IpsCorrection::none);
/// (1/N) sum_i sum_d omega_i(d) R-hat_i(d).
double dm_utility(const ClickLog& log, const DocValues& omega, const RegressionModel& regression);
/// DM plus the inverse-propensity correction of the regression residuals.
double dr_utility(const ClickLog& log, const DocValues& omega, const DocValues& rho0,
                  const RegressionModel& regression, const BiasParams& bias);

/// r(d|q) = omega0(d) * (n_q R-hat + sum_i (c - alpha R-hat - beta) / rho0(d)), so that
/// sum (omega / omega0) * r equals N times the DR estimate.
DocReward per_doc_reward(const ClickLog& log, const RegressionModel& regression,
                         const BiasParams& bias, const DocValues& omega0, const DocValues& rho0);

}  // namespace saferank
