#pragma once

#include <cstddef>
#include <vector>

namespace saferank {

/// Per-rank trust-bias parameters: P(C=1 | d, k) = alpha_k * P(R=1 | d) + beta_k.
/// Ranks beyond top_k() receive alpha = beta = 0.
class BiasParams {
 public:
  BiasParams() = default;
  /// Validates alpha_k, beta_k, alpha_k + beta_k in [0, 1] and equal lengths.
  BiasParams(std::vector<double> alpha, std::vector<double> beta);

  /// Values observed for trust bias in web search: K = 5.
  static BiasParams trust_bias_default();

  std::size_t top_k() const noexcept { return alpha_.size(); }
  const std::vector<double>& alpha() const noexcept { return alpha_; }
  const std::vector<double>& beta() const noexcept { return beta_; }

  /// 1-based rank lookups; zero beyond the cutoff.
  double alpha_at(std::size_t rank) const noexcept {
    return rank >= 1 && rank <= alpha_.size() ? alpha_[rank - 1] : 0.0;
  }
  double beta_at(std::size_t rank) const noexcept {
    return rank >= 1 && rank <= beta_.size() ? beta_[rank - 1] : 0.0;
  }
  double metric_weight_at(std::size_t rank) const noexcept {
    return alpha_at(rank) + beta_at(rank);
  }

  /// Sum of alpha over the first `list_length` ranks (the exposure normalizer).
  double alpha_mass(std::size_t list_length) const noexcept;
  /// Sum of alpha + beta over the first `list_length` ranks.
  double metric_mass(std::size_t list_length) const noexcept;

  /// 1 + max_k beta_k / alpha_k. Throws std::domain_error if some alpha_k is 0.
  double trust_factor() const;

  bool operator==(const BiasParams&) const = default;

 private:
  std::vector<double> alpha_;
  std::vector<double> beta_;
};

}  // namespace saferank
