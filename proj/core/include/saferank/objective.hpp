#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "saferank/bias.hpp"
#include "saferank/data.hpp"
#include "saferank/estimate.hpp"
#include "saferank/policy.hpp"
#include "saferank/safety.hpp"
#include "saferank/simulate.hpp"

namespace saferank {

enum class Estimator { ips, dr };

std::string_view to_string(Estimator estimator);
Estimator parse_estimator(std::string_view text);

/// Estimator plus safety mode. safe_ips pairs with ips; safe_dr and prpo pair with dr.
struct ObjectiveSpec {
  Estimator estimator = Estimator::dr;
  SafetyConfig safety;
  IpsCorrection ips_correction = IpsCorrection::affine;
};

void validate(const ObjectiveSpec& spec);

/// Value of an objective and its partial derivatives with respect to the policy's
/// per-document metric weights (omega) and propensities (rho).
struct ObjectiveValue {
  double value = 0.0;
  double estimate = 0.0;  // value before the safety penalty
  double penalty = 0.0;
  DocValues d_omega;
  DocValues d_rho;  // only filled for safe_ips
};

/// A policy objective expressed through per-query exposure profiles.
class Objective {
 public:
  /// Builds the click-based objective of `spec` from `log`. Training logs pass
  /// `clip = true` to floor propensities at 10 / sqrt(N). `schedule_n` overrides the session
  /// count fed to the clipping schedule (0 uses the log size).
  static Objective from_log(const ObjectiveSpec& spec, const ClickLog& log, const BiasParams& bias,
                            bool clip, std::size_t schedule_n = 0);

  /// Full-information utility (1/|Q|) sum_q sum_d omega(d) P(R=1 | d).
  static Objective from_labels(const Dataset& dataset, const BiasParams& bias);

  /// Query slots the objective depends on, ascending.
  const std::vector<std::uint32_t>& queries() const noexcept { return queries_; }
  std::size_t num_slots() const noexcept { return counts_.size(); }
  std::size_t sessions() const noexcept { return n_; }
  std::pair<double, double> epsilons() const noexcept { return {eps_minus_, eps_plus_}; }

  /// `profiles` is indexed by query slot; only the slots in queries() are read.
  ObjectiveValue evaluate(std::span<const ExposureProfile> profiles, bool with_gradient,
                          bool detach_penalty = false) const;

 private:
  enum class Form { linear, safe_ips, safe_dr, prpo };

  Form form_ = Form::linear;
  std::vector<std::uint32_t> queries_;
  std::vector<std::size_t> counts_;
  std::size_t n_ = 0;
  DocValues coefficients_;
  DocValues divergence_reference_;
  DocValues rewards_;
  DocValues omega0_;
  double delta_ = 0.95;
  double eps_minus_ = 1.0;
  double eps_plus_ = 1.0;
  BiasParams bias_;
};

/// Logging weights usable as a divergence reference: zero entries of each logged query are
/// raised to 1e-3 of that query's mean positive weight.
DocValues divergence_reference(const ClickLog& log, const DocValues& weights);

}  // namespace saferank
