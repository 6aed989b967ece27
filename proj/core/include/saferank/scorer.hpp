#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "saferank/data.hpp"

namespace saferank {

enum class ScorerKind { linear, two_layer };

std::string_view to_string(ScorerKind kind);
ScorerKind parse_scorer_kind(std::string_view text);

/// Parametric document scorer feeding the Plackett-Luce policy.
///
/// linear:    s(x) = <w, x>
/// two_layer: s(x) = <v, tanh(W x + b)> + c, with W stored row-major (hidden x feature).
class Scorer {
 public:
  Scorer() = default;

  static Scorer linear(std::size_t feature_dim);
  static Scorer two_layer(std::size_t feature_dim, std::size_t hidden_dim);

  static std::size_t parameter_count(ScorerKind kind, std::size_t feature_dim,
                                     std::size_t hidden_dim);

  ScorerKind kind() const noexcept { return kind_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t num_parameters() const noexcept { return parameters_.size(); }

  std::span<const double> parameters() const noexcept { return parameters_; }
  std::span<double> parameters() noexcept { return parameters_; }
  void set_parameters(std::span<const double> values);

  /// Zero-mean uniform initialization of total width `width`.
  void initialize_uniform(std::uint64_t seed, double width = 0.01);

  double score(std::span<const double> features) const;

  /// grad += upstream * d score(features) / d parameters.
  void accumulate_gradient(std::span<const double> features, double upstream,
                           std::span<double> grad) const;

  void save(std::ostream& out) const;
  static Scorer load(std::istream& in);

  bool operator==(const Scorer&) const = default;

 private:
  ScorerKind kind_ = ScorerKind::linear;
  std::size_t feature_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::vector<double> parameters_;
};

/// One score per document, in the query's document order.
std::vector<double> score_documents(const Scorer& scorer, const Query& query);

}  // namespace saferank
