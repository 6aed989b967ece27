#pragma once

#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include "saferank/bias.hpp"
#include "saferank/simulate.hpp"

namespace saferank {

enum class SafetyMode { none, safe_ips, safe_dr, prpo };
enum class ClipSchedule { constant, inverse_n, inverse_log_n };

std::string_view to_string(SafetyMode mode);
SafetyMode parse_safety_mode(std::string_view text);
std::string_view to_string(ClipSchedule schedule);
ClipSchedule parse_clip_schedule(std::string_view text);

struct ClipScheduleConfig {
  ClipSchedule kind = ClipSchedule::inverse_n;
  double coefficient = 100.0;
};

struct SafetyConfig {
  SafetyMode mode = SafetyMode::none;
  double delta = 0.95;  // confidence parameter of the safe modes
  ClipScheduleConfig schedule;
};

struct DivergenceReport {
  double d2 = 1.0;
  double z = 0.0;  // session-weighted mean of the per-query logging weight sums
  std::size_t n = 0;
};

/// Session-weighted mean over logged queries of sum_d (w'(d) / w0'(d))^2 w0'(d), with each
/// query's weights normalized to sum to one. `query_counts[q]` is the session count of q;
/// queries with a zero count are skipped. Throws std::domain_error when a positive new
/// weight meets a zero logging weight.
DivergenceReport renyi_divergence(const DocValues& new_weights, const DocValues& logging_weights,
                                  const std::vector<std::size_t>& query_counts);

/// Partial derivatives of the d2 value above with respect to each unnormalized new weight.
DocValues renyi_divergence_gradient(const DocValues& new_weights, const DocValues& logging_weights,
                                    const std::vector<std::size_t>& query_counts);

/// sqrt((Z / N) ((1 - delta) / delta) d2).
double safe_ips_penalty(const DivergenceReport& divergence, double delta);
/// (1 + max_k beta_k / alpha_k) sqrt((2 Z / N) ((1 - delta) / delta) d2).
double safe_dr_penalty(const DivergenceReport& divergence, double delta, const BiasParams& bias);

double safe_ips_objective(double u_ips, const DivergenceReport& divergence, double delta);
double safe_dr_objective(double u_dr, const DivergenceReport& divergence, double delta,
                         const BiasParams& bias);

/// min(x, eps_plus) r for r >= 0, max(x, eps_minus) r otherwise.
double prpo_clip(double x, double eps_minus, double eps_plus, double r);

/// 1 when the unclipped branch is active: (r > 0 and x <= eps_plus) or (r < 0 and x >= eps_minus).
int prpo_gradient_mask(double x, double eps_minus, double eps_plus, double r);

/// omega / omega0 per entry; NaN where omega0 is zero.
DocValues weight_ratios(const DocValues& omega, const DocValues& omega0);

/// Sum of prpo_clip over all (q, d) with a finite ratio. Pairs with a NaN ratio are skipped
/// and counted in `excluded` when given.
double prpo_objective(const DocValues& ratios, const DocValues& rewards, double eps_minus,
                      double eps_plus, std::size_t* excluded = nullptr);

/// (delta(N), 1 / delta(N)) for the configured schedule.
std::pair<double, double> adaptive_epsilons(const ClipScheduleConfig& schedule, std::size_t n);

}  // namespace saferank
