#include "saferank/bias.hpp"

#include <algorithm>
#include <stdexcept>

#include "saferank/errors.hpp"

namespace saferank {

BiasParams::BiasParams(std::vector<double> alpha, std::vector<double> beta)
    : alpha_(std::move(alpha)), beta_(std::move(beta)) {
  if (alpha_.empty() || alpha_.size() != beta_.size()) {
    throw ContractError("bias alpha and beta must be non-empty and of equal length");
  }
  for (std::size_t k = 0; k < alpha_.size(); ++k) {
    const double a = alpha_[k];
    const double b = beta_[k];
    if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0) || !(a + b <= 1.0 + 1e-12)) {
      throw ContractError("bias parameters at rank " + std::to_string(k + 1) +
                          " violate alpha, beta, alpha + beta in [0, 1]");
    }
  }
}

BiasParams BiasParams::trust_bias_default() {
  return BiasParams({0.35, 0.53, 0.55, 0.54, 0.52}, {0.65, 0.26, 0.15, 0.11, 0.08});
}

double BiasParams::alpha_mass(std::size_t list_length) const noexcept {
  double total = 0.0;
  for (std::size_t k = 0; k < std::min(list_length, alpha_.size()); ++k) total += alpha_[k];
  return total;
}

double BiasParams::metric_mass(std::size_t list_length) const noexcept {
  double total = 0.0;
  for (std::size_t k = 0; k < std::min(list_length, alpha_.size()); ++k) {
    total += alpha_[k] + beta_[k];
  }
  return total;
}

double BiasParams::trust_factor() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < alpha_.size(); ++k) {
    if (alpha_[k] <= 0.0) throw std::domain_error("trust factor needs alpha_k > 0 at every rank");
    worst = std::max(worst, beta_[k] / alpha_[k]);
  }
  return 1.0 + worst;
}

}  // namespace saferank
