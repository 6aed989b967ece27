#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "saferank/errors.hpp"
#include "saferank/simulate.hpp"
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

Dataset one_doc_dataset(int label) {
  Dataset data;
  data.feature_dim = 1;
  data.queries.push_back(oracle::make_query("only", {label}, {{1.0}}));
  return data;
}

TEST(ClickProbability, TrustBiasAndAdversarial) {
  const auto bias = BiasParams::trust_bias_default();
  EXPECT_DOUBLE_EQ(click_probability(1.0, 1, bias, false), 1.0);
  EXPECT_DOUBLE_EQ(click_probability(1.0, 1, bias, true), 0.0);
  EXPECT_DOUBLE_EQ(click_probability(0.5, 2, bias, false), 0.53 * 0.5 + 0.26);
  EXPECT_DOUBLE_EQ(click_probability(0.0, 5, bias, false), 0.08);
  EXPECT_THROW(click_probability(0.5, 6, bias, false), std::domain_error);
  EXPECT_THROW(click_probability(0.5, 0, bias, false), std::domain_error);
  for (std::size_t k = 1; k <= 5; ++k) {
    for (double r : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      EXPECT_NEAR(click_probability(r, k, bias, false) + click_probability(r, k, bias, true), 1.0, 1e-15);
    }
  }
}

TEST(Simulate, ZeroAndCertainClickModels) {
  const auto data = oracle::random_dataset(3, 4, 2, 6, 2);
  const auto policy = linear_policy({1.0, 0.5}, 3);
  SimulationOptions options;
  options.seed = 5;
  auto none = simulate_sessions(policy, data, BiasParams({0, 0, 0}, {0, 0, 0}), 500, options);
  auto all = simulate_sessions(policy, data, BiasParams({0, 0, 0}, {1, 1, 1}), 500, options);
  for (std::size_t i = 0; i < 500; ++i) {
    for (auto c : none.entry(i).clicks) EXPECT_EQ(c, 0);
    for (auto c : all.entry(i).clicks) EXPECT_EQ(c, 1);
  }
}

TEST(Simulate, SingleDocumentClickRate) {
  const auto data = one_doc_dataset(2);
  SimulationOptions options;
  options.seed = 11;
  options.keep_sessions = false;
  const auto log = simulate_sessions(linear_policy({1.0}, 1), data, BiasParams({0.35}, {0.65}), 100000, options);
  EXPECT_FALSE(log.has_sessions());
  const double ctr = log.stats(0).clicks(0) / 100000.0;
  EXPECT_NEAR(ctr, 0.825, 0.004);
}

TEST(Simulate, EmpiricalClickRatesPerCell) {
  const auto data = oracle::random_dataset(8, 3, 3, 3, 2);
  const auto bias = BiasParams::trust_bias_default();
  SimulationOptions options;
  options.seed = 2;
  options.keep_sessions = false;
  const auto log = simulate_sessions(linear_policy({0.4, -0.2}), data, bias, 60000, options);
  for (auto q : log.logged_queries()) {
    const auto& stats = log.stats(q);
    for (std::size_t d = 0; d < stats.n_docs(); ++d) {
      for (std::size_t k = 1; k <= stats.top_k; ++k) {
        const double shown = stats.shown_at_rank[d * stats.top_k + k - 1];
        if (shown < 1000) continue;
        const double p = click_probability(
            relevance_probability(data.queries[q].documents[d].relevance_label), k, bias, false);
        const double sigma = std::sqrt(p * (1 - p) / shown);
        EXPECT_NEAR(stats.clicks_at_rank[d * stats.top_k + k - 1] / shown, p, 4 * sigma + 1e-12);
      }
    }
  }
}

TEST(Simulate, DisplaysAndQueriesAreValid) {
  const auto data = oracle::random_dataset(4, 6, 1, 8, 2);
  const auto bias = BiasParams::trust_bias_default();
  SimulationOptions options;
  options.seed = 7;
  const auto log = simulate_sessions(linear_policy({1.0, 1.0}), data, bias, 3000, options);
  EXPECT_EQ(log.size(), 3000u);
  std::vector<int> per_query(6, 0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto e = log.entry(i);
    per_query[e.query_index]++;
    EXPECT_EQ(e.displayed.docs.size(), std::min<std::size_t>(5, data.queries[e.query_index].size()));
  }
  for (int c : per_query) EXPECT_NEAR(c, 500, 4 * std::sqrt(3000 * (1.0 / 6) * (5.0 / 6)));
}

TEST(Simulate, IndependentOfWorkerCount) {
  const auto data = oracle::random_dataset(5, 10, 3, 9, 3);
  const auto policy = linear_policy({0.3, -0.1, 0.8});
  const auto bias = BiasParams::trust_bias_default();
  SimulationOptions options;
  options.seed = 99;
  const auto one = simulate_sessions(policy, data, bias, 20000, options);
  options.workers = 4;
  EXPECT_EQ(simulate_sessions(policy, data, bias, 20000, options), one);
  options.seed = 100;
  EXPECT_NE(simulate_sessions(policy, data, bias, 20000, options), one);
}

TEST(Simulate, Errors) {
  const auto data = oracle::random_dataset(5, 2, 3, 4, 1);
  EXPECT_THROW(simulate_sessions(linear_policy({1.0}), data, BiasParams::trust_bias_default(), 0, {}),
               EmptyDataError);
  EXPECT_THROW(simulate_sessions(linear_policy({1.0}, 6), data, BiasParams::trust_bias_default(), 5, {}),
               ContractError);
}

ClickLog manual_log(const std::vector<std::uint32_t>& doc_counts, const BiasParams& bias) {
  return ClickLog(doc_counts, bias, false, "manual");
}

TEST(LoggingStatistics, Examples) {
  const std::uint8_t none[] = {0, 0};
  const std::uint32_t first[] = {0, 1};
  const std::uint32_t second[] = {1, 0};
  auto log = ClickLog({3}, BiasParams({0.35, 0.53}, {0.65, 0.26}), false, "manual");
  log.append(0, first, none);
  log.append(0, second, none);
  auto [rho, omega] = estimate_logging_statistics(log, log.bias());
  EXPECT_DOUBLE_EQ(rho[0][0], 0.44);
  EXPECT_DOUBLE_EQ(rho[0][1], 0.44);
  EXPECT_DOUBLE_EQ(omega[0][0], (1.0 + 0.79) / 2);
  EXPECT_EQ(rho[0][2], 0.0);
  EXPECT_EQ(omega[0][2], 0.0);
}

TEST(LoggingStatistics, DeterministicPolicyRecoversRankValues) {
  const auto data = oracle::random_dataset(12, 5, 2, 7, 2);
  const auto bias = BiasParams::trust_bias_default();
  const auto policy = linear_policy({1.0, -0.7}, 5, 1e-9);
  SimulationOptions options;
  options.seed = 1;
  const auto log = simulate_sessions(policy, data, bias, 400, options);
  for (auto q : log.logged_queries()) {
    const auto greedy = greedy_ranking(policy, data.queries[q]);
    for (std::size_t d = 0; d < data.queries[q].size(); ++d) {
      const auto rank = greedy.rank_of(static_cast<std::uint32_t>(d));
      EXPECT_NEAR(log.estimated_rho0()[q][d], rank ? bias.alpha_at(*rank) : 0.0, 1e-12);
      EXPECT_NEAR(log.estimated_omega0()[q][d], rank ? bias.metric_weight_at(*rank) : 0.0, 1e-12);
    }
  }
}

TEST(LoggingStatistics, UnloggedQueriesAreEmpty) {
  const auto bias = BiasParams::trust_bias_default();
  auto log = manual_log({2, 3}, bias);
  const std::uint32_t shown[] = {1, 0};
  const std::uint8_t clicks[] = {1, 0};
  log.append(0, shown, clicks);
  auto [rho, omega] = estimate_logging_statistics(log, bias);
  EXPECT_EQ(rho[0].size(), 2u);
  EXPECT_TRUE(rho[1].empty());
  EXPECT_EQ(log.logged_queries(), std::vector<std::uint32_t>{0});
  EXPECT_THROW(estimate_logging_statistics(manual_log({2}, bias), bias), EmptyDataError);
}

TEST(ClipPropensities, Threshold) {
  const DocValues rho{{0.5, 0.0}, {}};
  EXPECT_EQ(clip_propensities(rho, 100)[0][0], 1.0);
  EXPECT_EQ(clip_propensities(rho, 1000000)[0][0], 0.5);
  EXPECT_DOUBLE_EQ(clip_propensities(rho, 10000)[0][1], 0.1);
  EXPECT_TRUE(clip_propensities(rho, 10)[1].empty());
  EXPECT_THROW(clip_propensities(rho, 0), ContractError);
}

TEST(ClickLog, AppendValidation) {
  auto log = manual_log({4, 2}, BiasParams({0.5, 0.5, 0.5}, {0.1, 0.1, 0.1}));
  const std::uint32_t three[] = {0, 1, 2};
  const std::uint32_t dup[] = {0, 1, 1};
  const std::uint32_t two[] = {0, 1};
  const std::uint32_t out_of_range[] = {0, 4, 1};
  const std::uint8_t c3[] = {0, 1, 0};
  const std::uint8_t c2[] = {0, 1};
  EXPECT_NO_THROW(log.append(0, three, c3));
  EXPECT_NO_THROW(log.append(1, two, c2));
  EXPECT_THROW(log.append(0, two, c2), ContractError);
  EXPECT_THROW(log.append(0, dup, c3), ContractError);
  EXPECT_THROW(log.append(0, out_of_range, c3), ContractError);
  EXPECT_THROW(log.append(0, three, c2), ContractError);
  EXPECT_THROW(log.append(2, two, c2), ContractError);
  EXPECT_EQ(log.size(), 2u);
  const auto e = log.entry(0);
  EXPECT_EQ(e.displayed.docs, (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(e.clicks, (std::vector<std::uint8_t>{0, 1, 0}));
  EXPECT_EQ(log.stats(0).clicks(1), 1.0);
  EXPECT_EQ(log.stats(0).times_shown(3), 0.0);
  EXPECT_DOUBLE_EQ(log.stats(0).alpha_sum(2, log.bias()), 0.5);
  log.compact();
  EXPECT_THROW(log.entry(0), ContractError);
  EXPECT_EQ(log.stats(0).clicks(1), 1.0);
}

TEST(ClickLogFormat, BitExactRoundTrip) {
  const auto data = oracle::random_dataset(17, 12, 1, 9, 2);
  const BiasParams bias({0.1 + 1e-13, 1.0 / 3.0, 0.55}, {0.65, 0.26, 0.15});
  SimulationOptions options;
  options.seed = 23;
  options.adversarial = true;
  options.logging_policy_ref = "some/policy.scorer";
  const auto log = simulate_sessions(linear_policy({0.2, 0.9}, 3), data, bias, 777, options);
  std::ostringstream out;
  write_click_log(out, log, data);
  std::istringstream in(out.str());
  const auto back = read_click_log(in, data);
  EXPECT_EQ(back, log);
  EXPECT_EQ(back.bias(), bias);
  EXPECT_TRUE(back.adversarial());
  EXPECT_EQ(back.logging_policy_ref(), "some/policy.scorer");
  std::ostringstream again;
  write_click_log(again, back, data);
  EXPECT_EQ(again.str(), out.str());
}

TEST(ClickLogFormat, Errors) {
  const auto data = oracle::random_dataset(17, 2, 3, 3, 2);
  const std::string header =
      "# saferank-clicklog 1\n# n 1\n# top_k 2\n# alpha 0.5,0.5\n# beta 0,0\n# adversarial 0\n"
      "# logging_policy x\n";
  auto read = [&](const std::string& text) {
    std::istringstream in(text);
    return read_click_log(in, data);
  };
  EXPECT_EQ(read(header + "q0\t2,0\t10\n").size(), 1u);
  EXPECT_THROW(read(header), EmptyDataError);
  EXPECT_THROW(read("q0\t2,0\t10\n"), ParseError);
  EXPECT_THROW(read(header + "zz\t2,0\t10\n"), ParseError);
  EXPECT_THROW(read(header + "q0\t2,9\t10\n"), ParseError);
  EXPECT_THROW(read(header + "q0\t2,0\t12\n"), ParseError);
  EXPECT_THROW(read(header + "q0\t2,0,1\t100\n"), ParseError);
  EXPECT_THROW(read(header + "q0\t2,0\n"), ParseError);
  EXPECT_THROW(read(header + "q0\t2,0\t10\nq1\t1,0\t00\n"), ParseError);
  auto compacted = read(header + "q0\t2,0\t10\n");
  compacted.compact();
  std::ostringstream out;
  EXPECT_THROW(write_click_log(out, compacted, data), ContractError);
}

}  // namespace
}  // namespace saferank
