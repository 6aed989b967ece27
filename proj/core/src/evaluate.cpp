#include "saferank/evaluate.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <stdexcept>

#include "saferank/errors.hpp"
#include "saferank/rng.hpp"

namespace saferank {

std::string_view to_string(EvalMode mode) {
  return mode == EvalMode::greedy ? "greedy" : "expected";
}

namespace {

double gain(int label) { return std::exp2(static_cast<double>(label)) - 1.0; }

void check_k(std::size_t k) {
  if (k < 1) throw std::domain_error("NDCG cutoff k must be >= 1");
}

}  // namespace

double dcg_at_k(const Query& query, std::span<const std::uint32_t> ranking, std::size_t k) {
  check_k(k);
  double total = 0.0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t t = 0; t < depth; ++t) {
    total += gain(query.documents.at(ranking[t]).relevance_label) * dcg_weight(t + 1);
  }
  return total;
}

double ideal_dcg_at_k(const Query& query, std::size_t k) {
  check_k(k);
  std::vector<int> labels;
  labels.reserve(query.size());
  for (const auto& doc : query.documents) labels.push_back(doc.relevance_label);
  std::sort(labels.begin(), labels.end(), std::greater<>());
  double total = 0.0;
  for (std::size_t t = 0; t < std::min(k, labels.size()); ++t) total += gain(labels[t]) * dcg_weight(t + 1);
  return total;
}

double query_ndcg(const Query& query, std::span<const std::uint32_t> ranking, std::size_t k) {
  const double ideal = ideal_dcg_at_k(query, k);
  if (ideal <= 0.0) return 1.0;
  return dcg_at_k(query, ranking, k) / ideal;
}

EvalReport ndcg_at_k(const RankingPolicy& policy, const Dataset& dataset, std::size_t k,
                     EvalMode mode, std::size_t mc_samples, std::uint64_t seed) {
  check_k(k);
  if (dataset.queries.empty()) throw EmptyDataError("cannot evaluate on an empty dataset");
  if (mode == EvalMode::expected && mc_samples == 0) throw ContractError("expected mode needs mc_samples > 0");
  EvalReport report;
  report.mode = mode;
  report.k = k;
  report.mc_samples = mode == EvalMode::expected ? mc_samples : 0;
  report.per_query.reserve(dataset.queries.size());
  std::vector<std::uint32_t> docs;
  for (std::size_t q = 0; q < dataset.queries.size(); ++q) {
    const auto& query = dataset.queries[q];
    const double ideal = ideal_dcg_at_k(query, k);
    if (ideal <= 0.0) {
      report.per_query.push_back(1.0);
      continue;
    }
    const std::size_t length = std::min(k, query.size());
    if (mode == EvalMode::greedy) {
      RankingPolicy deep = policy;
      deep.top_k = length;
      const auto ranking = greedy_ranking(deep, query, static_cast<std::uint32_t>(q));
      report.per_query.push_back(dcg_at_k(query, ranking.docs, k) / ideal);
      continue;
    }
    PlackettLuce pl(policy_scores(policy, query), policy.temperature);
    Rng rng = make_stream(seed, q);
    double total = 0.0;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      pl.sample(rng, length, docs);
      total += dcg_at_k(query, docs, k);
    }
    report.per_query.push_back(total / static_cast<double>(mc_samples) / ideal);
  }
  double sum = 0.0;
  for (double v : report.per_query) sum += v;
  report.ndcg_at_k = sum / static_cast<double>(report.per_query.size());
  return report;
}

}  // namespace saferank
