#include "saferank/safety.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "saferank/errors.hpp"

namespace saferank {

std::string_view to_string(SafetyMode mode) {
  switch (mode) {
    case SafetyMode::none: return "none";
    case SafetyMode::safe_ips: return "safe_ips";
    case SafetyMode::safe_dr: return "safe_dr";
    case SafetyMode::prpo: return "prpo";
  }
  return "none";
}

SafetyMode parse_safety_mode(std::string_view text) {
  if (text == "none") return SafetyMode::none;
  if (text == "safe_ips") return SafetyMode::safe_ips;
  if (text == "safe_dr") return SafetyMode::safe_dr;
  if (text == "prpo") return SafetyMode::prpo;
  throw ConfigError("unknown safety mode '" + std::string(text) + "'");
}

std::string_view to_string(ClipSchedule schedule) {
  switch (schedule) {
    case ClipSchedule::constant: return "constant";
    case ClipSchedule::inverse_n: return "inverse_n";
    case ClipSchedule::inverse_log_n: return "inverse_log_n";
  }
  return "constant";
}

ClipSchedule parse_clip_schedule(std::string_view text) {
  if (text == "constant") return ClipSchedule::constant;
  if (text == "inverse_n") return ClipSchedule::inverse_n;
  if (text == "inverse_log_n") return ClipSchedule::inverse_log_n;
  throw ConfigError("unknown clipping schedule '" + std::string(text) + "'");
}

namespace {

struct QueryDivergence {
  double value = 0.0;
  double new_sum = 0.0;
  double log_sum = 0.0;
};

QueryDivergence query_divergence(const std::vector<double>& w, const std::vector<double>& w0) {
  if (w.size() != w0.size()) throw ContractError("weight vectors differ in length");
  QueryDivergence out;
  for (std::size_t d = 0; d < w.size(); ++d) {
    out.new_sum += w[d];
    out.log_sum += w0[d];
  }
  if (out.new_sum <= 0.0 || out.log_sum <= 0.0) throw std::domain_error("divergence of an empty weight vector");
  for (std::size_t d = 0; d < w.size(); ++d) {
    if (w[d] <= 0.0) continue;
    if (w0[d] <= 0.0) throw std::domain_error("divergence undefined: new weight on a zero logging weight");
    const double p = w[d] / out.new_sum;
    const double p0 = w0[d] / out.log_sum;
    out.value += p * p / p0;
  }
  return out;
}

}  // namespace

DivergenceReport renyi_divergence(const DocValues& new_weights, const DocValues& logging_weights,
                                  const std::vector<std::size_t>& query_counts) {
  if (new_weights.size() != logging_weights.size() || query_counts.size() != new_weights.size()) {
    throw ContractError("divergence inputs must share the query slots");
  }
  DivergenceReport report;
  report.d2 = 0.0;
  double z = 0.0;
  for (std::size_t q = 0; q < new_weights.size(); ++q) {
    const auto count = query_counts[q];
    if (count == 0) continue;
    const auto part = query_divergence(new_weights[q], logging_weights[q]);
    report.d2 += static_cast<double>(count) * part.value;
    z += static_cast<double>(count) * part.log_sum;
    report.n += count;
  }
  if (report.n == 0) throw EmptyDataError("divergence over zero sessions");
  report.d2 /= static_cast<double>(report.n);
  report.z = z / static_cast<double>(report.n);
  return report;
}

DocValues renyi_divergence_gradient(const DocValues& new_weights, const DocValues& logging_weights,
                                    const std::vector<std::size_t>& query_counts) {
  if (new_weights.size() != logging_weights.size() || query_counts.size() != new_weights.size()) {
    throw ContractError("divergence inputs must share the query slots");
  }
  std::size_t n = 0;
  for (auto count : query_counts) n += count;
  if (n == 0) throw EmptyDataError("divergence over zero sessions");
  DocValues grad(new_weights.size());
  for (std::size_t q = 0; q < new_weights.size(); ++q) {
    if (query_counts[q] == 0) continue;
    const auto& w = new_weights[q];
    const auto& w0 = logging_weights[q];
    const auto part = query_divergence(w, w0);
    const double scale = static_cast<double>(query_counts[q]) / static_cast<double>(n);
    // d/dw_j of sum_d (w_d / S)^2 * L / w0_d with S = sum_d w_d.
    grad[q].assign(w.size(), 0.0);
    for (std::size_t d = 0; d < w.size(); ++d) {
      const double direct = w0[d] > 0.0 ? 2.0 * w[d] * part.log_sum / (w0[d] * part.new_sum * part.new_sum) : 0.0;
      grad[q][d] = scale * (direct - 2.0 * part.value / part.new_sum);
    }
  }
  return grad;
}

namespace {

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("delta must lie in (0, 1)");
}

}  // namespace

double safe_ips_penalty(const DivergenceReport& divergence, double delta) {
  check_delta(delta);
  if (divergence.n == 0) throw ContractError("penalty needs N >= 1");
  const double n = static_cast<double>(divergence.n);
  return std::sqrt(divergence.z / n * ((1.0 - delta) / delta) * std::max(divergence.d2, 0.0));
}

double safe_dr_penalty(const DivergenceReport& divergence, double delta, const BiasParams& bias) {
  check_delta(delta);
  if (divergence.n == 0) throw ContractError("penalty needs N >= 1");
  const double n = static_cast<double>(divergence.n);
  return bias.trust_factor() *
         std::sqrt(2.0 * divergence.z / n * ((1.0 - delta) / delta) * std::max(divergence.d2, 0.0));
}

double safe_ips_objective(double u_ips, const DivergenceReport& divergence, double delta) {
  return u_ips - safe_ips_penalty(divergence, delta);
}

double safe_dr_objective(double u_dr, const DivergenceReport& divergence, double delta,
                         const BiasParams& bias) {
  return u_dr - safe_dr_penalty(divergence, delta, bias);
}

double prpo_clip(double x, double eps_minus, double eps_plus, double r) {
  if (eps_minus > eps_plus) throw ContractError("eps_minus must not exceed eps_plus");
  return r >= 0.0 ? std::min(x, eps_plus) * r : std::max(x, eps_minus) * r;
}

int prpo_gradient_mask(double x, double eps_minus, double eps_plus, double r) {
  if (eps_minus > eps_plus) throw ContractError("eps_minus must not exceed eps_plus");
  return (r > 0.0 && x <= eps_plus) || (r < 0.0 && x >= eps_minus) ? 1 : 0;
}

DocValues weight_ratios(const DocValues& omega, const DocValues& omega0) {
  if (omega.size() != omega0.size()) throw ContractError("weight maps must share the query slots");
  DocValues ratios(omega.size());
  for (std::size_t q = 0; q < omega.size(); ++q) {
    if (omega0[q].empty()) continue;
    if (omega[q].size() != omega0[q].size()) throw ContractError("weight maps differ in length");
    ratios[q].resize(omega[q].size());
    for (std::size_t d = 0; d < omega[q].size(); ++d) {
      ratios[q][d] = omega0[q][d] > 0.0 ? omega[q][d] / omega0[q][d]
                                        : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return ratios;
}

double prpo_objective(const DocValues& ratios, const DocValues& rewards, double eps_minus,
                      double eps_plus, std::size_t* excluded) {
  if (ratios.size() != rewards.size()) throw ContractError("ratios and rewards must share the query slots");
  double total = 0.0;
  std::size_t skipped = 0;
  for (std::size_t q = 0; q < ratios.size(); ++q) {
    if (ratios[q].size() != rewards[q].size()) throw ContractError("ratios and rewards differ in length");
    for (std::size_t d = 0; d < ratios[q].size(); ++d) {
      if (std::isnan(ratios[q][d])) {
        ++skipped;
        continue;
      }
      total += prpo_clip(ratios[q][d], eps_minus, eps_plus, rewards[q][d]);
    }
  }
  if (excluded) *excluded = skipped;
  return total;
}

std::pair<double, double> adaptive_epsilons(const ClipScheduleConfig& schedule, std::size_t n) {
  if (n == 0) throw ContractError("clipping schedule needs N >= 1");
  const double count = static_cast<double>(n);
  double delta = 1.0;
  switch (schedule.kind) {
    case ClipSchedule::constant:
      delta = schedule.coefficient;
      break;
    case ClipSchedule::inverse_n:
      delta = std::min(1.0, schedule.coefficient / count);
      break;
    case ClipSchedule::inverse_log_n:
      delta = n <= 2 ? 1.0 : std::min(1.0, 1.0 / std::log(count));
      break;
  }
  if (!(delta > 0.0) || delta > 1.0) {
    throw ConfigError("clipping schedule yields delta(N) outside (0, 1]");
  }
  return {delta, 1.0 / delta};
}

}  // namespace saferank
