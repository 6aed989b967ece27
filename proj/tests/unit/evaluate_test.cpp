#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "saferank/evaluate.hpp"
#include "support/oracle.hpp"

namespace saferank {
namespace {

RankingPolicy linear_policy(std::vector<double> w, std::size_t top_k = 5, double temperature = 1.0) {
  RankingPolicy policy;
  policy.scorer = Scorer::linear(w.size());
  policy.scorer.set_parameters(w);
  policy.top_k = top_k;
  policy.temperature = temperature;
  return policy;
}

Query labelled(const std::vector<int>& labels) {
  std::vector<std::vector<double>> features;
  for (int l : labels) features.push_back({double(l)});
  return oracle::make_query("q", labels, features);
}

TEST(Ndcg, HandExample) {
  const auto q = labelled({3, 1, 0});
  const std::vector<std::uint32_t> ranking{1, 0, 2};
  EXPECT_NEAR(dcg_at_k(q, ranking, 2), 1.0 + 7.0 / std::log2(3.0), 1e-12);
  EXPECT_NEAR(ideal_dcg_at_k(q, 2), 7.0 + 1.0 / std::log2(3.0), 1e-12);
  EXPECT_NEAR(query_ndcg(q, ranking, 2), 0.710, 0.0005);
}

TEST(Ndcg, IdealAndDegenerateCases) {
  const auto q = labelled({1, 4, 0, 2});
  EXPECT_DOUBLE_EQ(query_ndcg(q, std::vector<std::uint32_t>{1, 3, 0, 2}, 3), 1.0);
  EXPECT_EQ(query_ndcg(labelled({0, 0, 0}), std::vector<std::uint32_t>{2, 1, 0}, 5), 1.0);
  EXPECT_THROW(query_ndcg(q, std::vector<std::uint32_t>{0}, 0), std::domain_error);
  // Changes below the cutoff do not matter.
  EXPECT_EQ(query_ndcg(q, std::vector<std::uint32_t>{3, 0, 1, 2}, 2),
            query_ndcg(q, std::vector<std::uint32_t>{3, 0, 2, 1}, 2));
}

TEST(Ndcg, ExchangeProperty) {
  auto rng = make_stream(1, 0);
  std::uniform_int_distribution<int> label(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> labels(6);
    for (auto& l : labels) l = label(rng);
    const auto q = labelled(labels);
    std::vector<std::uint32_t> ranking{0, 1, 2, 3, 4, 5};
    std::shuffle(ranking.begin(), ranking.end(), rng);
    const std::size_t i = trial % 5, j = i + 1 + trial % (5 - i);
    if (labels[ranking[i]] >= labels[ranking[j]]) continue;
    auto swapped = ranking;
    std::swap(swapped[i], swapped[j]);
    EXPECT_GE(query_ndcg(q, swapped, 5) + 1e-15, query_ndcg(q, ranking, 5));
  }
}

TEST(Ndcg, InvariantUnderDocIdRelabeling) {
  auto q = labelled({2, 0, 3, 1});
  const std::vector<std::uint32_t> ranking{3, 2, 0, 1};
  const double before = query_ndcg(q, ranking, 3);
  for (auto& d : q.documents) d.doc_id += 100;
  EXPECT_EQ(query_ndcg(q, ranking, 3), before);
}

TEST(NdcgAtK, GreedyPolicyOnIdealScores) {
  Dataset data;
  data.feature_dim = 1;
  data.queries = {labelled({0, 3, 1}), labelled({4, 2})};
  data.queries[1].query_id = "r";
  const auto report = ndcg_at_k(linear_policy({1.0}), data, 5, EvalMode::greedy);
  EXPECT_EQ(report.ndcg_at_k, 1.0);
  EXPECT_EQ(report.per_query.size(), 2u);
  EXPECT_EQ(report.mc_samples, 0u);
  const auto reversed = ndcg_at_k(linear_policy({-1.0}), data, 5, EvalMode::greedy);
  EXPECT_LT(reversed.ndcg_at_k, 1.0);
  EXPECT_DOUBLE_EQ(reversed.ndcg_at_k, (reversed.per_query[0] + reversed.per_query[1]) / 2);
}

TEST(NdcgAtK, ExpectedModeMatchesEnumeration) {
  const auto data = oracle::random_dataset(2, 3, 3, 5, 2);
  const std::vector<double> w{0.7, -0.4};
  const auto report = ndcg_at_k(linear_policy(w), data, 3, EvalMode::expected, 20000, 5);
  for (std::size_t q = 0; q < 3; ++q) {
    double exact = 0.0;
    for (const auto& o : oracle::pl_prefixes(oracle::linear_scores(w, data.queries[q]), 5)) {
      exact += o.probability * query_ndcg(data.queries[q], o.docs, 3);
    }
    EXPECT_NEAR(report.per_query[q], exact, 0.01);
  }
  EXPECT_EQ(report.mc_samples, 20000u);
  EXPECT_EQ(ndcg_at_k(linear_policy(w), data, 3, EvalMode::expected, 50, 5).per_query,
            ndcg_at_k(linear_policy(w), data, 3, EvalMode::expected, 50, 5).per_query);
}

TEST(NdcgAtK, ColdTemperatureApproachesGreedy) {
  SyntheticSpec spec;
  spec.train_queries = 20;
  const auto data = generate_synthetic(spec).train;
  auto policy = linear_policy(std::vector<double>(spec.feature_dim, 0.0), 5, 1e-3);
  policy.scorer.initialize_uniform(4, 2.0);
  const double greedy = ndcg_at_k(policy, data, 5, EvalMode::greedy).ndcg_at_k;
  const double expected = ndcg_at_k(policy, data, 5, EvalMode::expected, 100, 1).ndcg_at_k;
  EXPECT_LT(std::abs(greedy - expected), 0.01);
}

TEST(NdcgAtK, CutoffMustBePositive) {
  Dataset data;
  data.feature_dim = 1;
  data.queries = {labelled({0, 3})};
  EXPECT_THROW(ndcg_at_k(linear_policy({1.0}), data, 0, EvalMode::greedy), std::domain_error);
}

}  // namespace
}  // namespace saferank
