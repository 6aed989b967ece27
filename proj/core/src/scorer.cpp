#include "saferank/scorer.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "saferank/errors.hpp"
#include "saferank/rng.hpp"

namespace saferank {

std::string_view to_string(ScorerKind kind) {
  return kind == ScorerKind::linear ? "linear" : "two_layer";
}

ScorerKind parse_scorer_kind(std::string_view text) {
  if (text == "linear") return ScorerKind::linear;
  if (text == "two_layer" || text == "mlp") return ScorerKind::two_layer;
  throw ConfigError("unknown scorer kind '" + std::string(text) + "'");
}

std::size_t Scorer::parameter_count(ScorerKind kind, std::size_t feature_dim,
                                    std::size_t hidden_dim) {
  if (kind == ScorerKind::linear) return feature_dim;
  return hidden_dim * feature_dim + 2 * hidden_dim + 1;
}

Scorer Scorer::linear(std::size_t feature_dim) {
  if (feature_dim == 0) throw ContractError("scorer feature_dim must be positive");
  Scorer scorer;
  scorer.kind_ = ScorerKind::linear;
  scorer.feature_dim_ = feature_dim;
  scorer.parameters_.assign(feature_dim, 0.0);
  return scorer;
}

Scorer Scorer::two_layer(std::size_t feature_dim, std::size_t hidden_dim) {
  if (feature_dim == 0 || hidden_dim == 0) {
    throw ContractError("two_layer scorer needs positive feature and hidden dims");
  }
  Scorer scorer;
  scorer.kind_ = ScorerKind::two_layer;
  scorer.feature_dim_ = feature_dim;
  scorer.hidden_dim_ = hidden_dim;
  scorer.parameters_.assign(parameter_count(ScorerKind::two_layer, feature_dim, hidden_dim), 0.0);
  return scorer;
}

void Scorer::set_parameters(std::span<const double> values) {
  if (values.size() != parameters_.size()) throw ContractError("scorer parameter length mismatch");
  parameters_.assign(values.begin(), values.end());
}

void Scorer::initialize_uniform(std::uint64_t seed, double width) {
  Rng rng = make_stream(seed, 0x1417);
  for (auto& p : parameters_) p = width * (uniform01(rng) - 0.5);
}

double Scorer::score(std::span<const double> x) const {
  if (x.size() != feature_dim_) {
    throw ContractError("feature dimension " + std::to_string(x.size()) +
                        " does not match scorer dimension " + std::to_string(feature_dim_));
  }
  if (kind_ == ScorerKind::linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < feature_dim_; ++i) s += parameters_[i] * x[i];
    return s;
  }
  const double* w1 = parameters_.data();
  const double* b1 = w1 + hidden_dim_ * feature_dim_;
  const double* w2 = b1 + hidden_dim_;
  double s = w2[hidden_dim_];
  for (std::size_t j = 0; j < hidden_dim_; ++j) {
    double pre = b1[j];
    for (std::size_t i = 0; i < feature_dim_; ++i) pre += w1[j * feature_dim_ + i] * x[i];
    s += w2[j] * std::tanh(pre);
  }
  return s;
}

void Scorer::accumulate_gradient(std::span<const double> x, double upstream,
                                 std::span<double> grad) const {
  if (x.size() != feature_dim_ || grad.size() != parameters_.size()) {
    throw ContractError("gradient buffer or feature dimension mismatch");
  }
  if (upstream == 0.0) return;
  if (kind_ == ScorerKind::linear) {
    for (std::size_t i = 0; i < feature_dim_; ++i) grad[i] += upstream * x[i];
    return;
  }
  const double* w1 = parameters_.data();
  const double* b1 = w1 + hidden_dim_ * feature_dim_;
  const double* w2 = b1 + hidden_dim_;
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + hidden_dim_ * feature_dim_;
  double* g_w2 = g_b1 + hidden_dim_;
  for (std::size_t j = 0; j < hidden_dim_; ++j) {
    double pre = b1[j];
    for (std::size_t i = 0; i < feature_dim_; ++i) pre += w1[j * feature_dim_ + i] * x[i];
    const double h = std::tanh(pre);
    g_w2[j] += upstream * h;
    const double back = upstream * w2[j] * (1.0 - h * h);
    g_b1[j] += back;
    for (std::size_t i = 0; i < feature_dim_; ++i) g_w1[j * feature_dim_ + i] += back * x[i];
  }
  g_w2[hidden_dim_] += upstream;
}

void Scorer::save(std::ostream& out) const {
  out << "saferank-scorer 1\n"
      << "kind " << to_string(kind_) << '\n'
      << "feature_dim " << feature_dim_ << '\n'
      << "hidden_dim " << hidden_dim_ << '\n'
      << "parameters " << parameters_.size() << '\n';
  char buffer[40];
  for (double p : parameters_) {
    std::snprintf(buffer, sizeof(buffer), "%.17g", p);
    out << buffer << '\n';
  }
}

Scorer Scorer::load(std::istream& in) {
  std::string magic;
  int version = 0;
  std::string key;
  std::string kind_text;
  std::size_t feature_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version) || magic != "saferank-scorer" || version != 1) {
    throw ParseError("not a saferank scorer file", 1);
  }
  if (!(in >> key >> kind_text) || key != "kind") throw ParseError("expected 'kind'", 2);
  if (!(in >> key >> feature_dim) || key != "feature_dim") {
    throw ParseError("expected 'feature_dim'", 3);
  }
  if (!(in >> key >> hidden_dim) || key != "hidden_dim") throw ParseError("expected 'hidden_dim'", 4);
  if (!(in >> key >> count) || key != "parameters") throw ParseError("expected 'parameters'", 5);

  const ScorerKind kind = parse_scorer_kind(kind_text);
  Scorer scorer = kind == ScorerKind::linear ? linear(feature_dim) : two_layer(feature_dim, hidden_dim);
  if (count != scorer.num_parameters()) throw ParseError("parameter count does not match dims", 5);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> scorer.parameters_[i])) throw ParseError("truncated parameter list", 6 + i);
  }
  return scorer;
}

std::vector<double> score_documents(const Scorer& scorer, const Query& query) {
  std::vector<double> scores;
  scores.reserve(query.documents.size());
  for (const auto& doc : query.documents) scores.push_back(scorer.score(doc.features));
  return scores;
}

}  // namespace saferank
