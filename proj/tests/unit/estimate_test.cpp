#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "saferank/errors.hpp"
#include "saferank/estimate.hpp"
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

TEST(Regression, Examples) {
  const BiasParams bias({0.35, 0.53}, {0.65, 0.26});
  ClickLog log({3}, bias, false, "x");
  const std::uint32_t shown[] = {0, 1};
  const std::uint8_t clicks[] = {1, 0};
  for (int i = 0; i < 4; ++i) log.append(0, shown, clicks);
  const auto model = fit_regression(log, bias);
  EXPECT_DOUBLE_EQ(model.r_hat[0][0], 1.0);
  EXPECT_DOUBLE_EQ(model.r_hat[0][1], 0.0);
  EXPECT_DOUBLE_EQ(model.r_hat[0][2], 0.5);
}

TEST(Regression, ConsistentAtLargeN) {
  Dataset data;
  data.feature_dim = 1;
  data.queries.push_back(oracle::make_query("q", {1, 3, 0}, {{0.3}, {0.0}, {-0.2}}));
  const BiasParams bias({0.9, 0.5}, {0.05, 0.2});
  SimulationOptions options;
  options.seed = 4;
  options.keep_sessions = false;
  const auto log = simulate_sessions(linear_policy({1.0}, 2), data, bias, 1000000, options);
  const auto model = fit_regression(log, bias);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_NEAR(model.r_hat[0][d], relevance_probability(data.queries[0].documents[d].relevance_label), 0.02);
  }
}

// One query with one document shown at rank 1.
ClickLog single_session(double alpha, double beta, bool clicked) {
  ClickLog log({1}, BiasParams({alpha}, {beta}), false, "x");
  const std::uint32_t shown[] = {0};
  const std::uint8_t c[] = {static_cast<std::uint8_t>(clicked)};
  log.append(0, shown, c);
  return log;
}

TEST(Ips, Examples) {
  const auto log = single_session(0.35, 0.0, true);
  EXPECT_DOUBLE_EQ(ips_utility(log, {{0.35}}, {{0.5}}, log.bias()), 0.7);
  const auto quiet = single_session(0.35, 0.0, false);
  EXPECT_EQ(ips_utility(quiet, {{0.35}}, {{0.5}}, quiet.bias()), 0.0);
  EXPECT_THROW(ips_utility(log, {{0.35}}, {{0.0}}, log.bias()), ContractError);
  EXPECT_THROW(ips_utility(log, {{0.35, 0.1}}, {{0.5}}, log.bias()), ContractError);
}

TEST(Ips, AffineCorrectionSubtractsBeta) {
  const auto log = single_session(0.35, 0.65, true);
  EXPECT_DOUBLE_EQ(ips_utility(log, {{1.0}}, {{0.35}}, log.bias(), IpsCorrection::affine), 1.0);
  EXPECT_DOUBLE_EQ(ips_utility(log, {{1.0}}, {{0.35}}, log.bias(), IpsCorrection::none), 1.0 / 0.35);
}

TEST(Dm, Examples) {
  const auto log = single_session(0.35, 0.65, true);
  EXPECT_EQ(dm_utility(log, {{0.9}}, RegressionModel{{{0.0}}}), 0.0);
  ClickLog multi({3}, BiasParams::trust_bias_default(), false, "x");
  const std::uint32_t shown[] = {2, 0, 1};
  const std::uint8_t c[] = {0, 0, 0};
  multi.append(0, shown, c);
  multi.append(0, shown, c);
  const DocValues omega{{0.5, 0.8, 0.99}};
  EXPECT_NEAR(dm_utility(multi, omega, RegressionModel{{{1.0, 1.0, 1.0}}}), 0.5 + 0.8 + 0.99, 1e-15);
  EXPECT_NEAR(dm_utility(multi, omega, RegressionModel{{{0.2, 0.0, 0.5}}}), 0.1 + 0.495, 1e-15);
}

DocValues random_values(Rng& rng, const ClickLog& log, double lo, double hi) {
  DocValues v(log.num_queries());
  for (auto q : log.logged_queries()) {
    for (std::size_t d = 0; d < log.doc_count(q); ++d) v[q].push_back(lo + (hi - lo) * uniform01(rng));
  }
  return v;
}

ClickLog random_log(std::uint64_t seed, std::size_t n_sessions, std::size_t max_docs,
                    const BiasParams& bias, Dataset* out_data = nullptr) {
  auto data = oracle::random_dataset(seed, 6, 2, max_docs, 2);
  SimulationOptions options;
  options.seed = seed;
  auto log = simulate_sessions(linear_policy({0.5, -0.5}, bias.top_k()), data, bias, n_sessions, options);
  if (out_data) *out_data = data;
  return log;
}

TEST(Dr, CollapsesToIpsWithoutRegressionOrTrust) {
  auto rng = make_stream(1, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const BiasParams bias({0.9, 0.6, 0.3}, {0.0, 0.0, 0.0});
    const auto log = random_log(seed, 50, 6, bias);
    const auto omega = random_values(rng, log, 0.0, 1.0);
    const auto rho = clip_propensities(log.estimated_rho0(), log.size());
    RegressionModel zero{random_values(rng, log, 0.0, 0.0)};
    EXPECT_NEAR(dr_utility(log, omega, rho, zero, bias), ips_utility(log, omega, rho, bias), 1e-12);
  }
}

TEST(Dr, ZeroClickAlgebra) {
  auto rng = make_stream(2, 0);
  const auto bias = BiasParams::trust_bias_default();
  const auto data = oracle::random_dataset(3, 4, 2, 7, 2);
  ClickLog log = ClickLog::for_dataset(data, bias, false, "x");
  for (int i = 0; i < 40; ++i) {
    const std::uint32_t q = i % 4;
    auto order = std::vector<std::uint32_t>(data.queries[q].size());
    for (std::uint32_t d = 0; d < order.size(); ++d) order[d] = d;
    std::rotate(order.begin(), order.begin() + (i / 4) % order.size(), order.end());
    order.resize(std::min<std::size_t>(5, order.size()));
    std::vector<std::uint8_t> clicks(order.size(), 0);
    log.append(q, order, clicks);
  }
  auto [rho0, omega0] = estimate_logging_statistics(log, bias);
  log.set_estimates(rho0, omega0);
  const auto omega = random_values(rng, log, 0.0, 1.0);
  const auto rho = clip_propensities(rho0, log.size());
  const RegressionModel reg{random_values(rng, log, 0.0, 1.0)};
  EXPECT_EQ(ips_utility(log, omega, rho, bias), 0.0);
  double correction = 0.0;
  for (auto q : log.logged_queries()) {
    const auto& s = log.stats(q);
    for (std::size_t d = 0; d < s.n_docs(); ++d) {
      correction += omega[q][d] / rho[q][d] * (s.alpha_sum(d, bias) * reg.r_hat[q][d] + s.beta_sum(d, bias));
    }
  }
  const double expected = dm_utility(log, omega, reg) - correction / log.size();
  EXPECT_NEAR(dr_utility(log, omega, rho, reg, bias), expected, 1e-12);
}

TEST(Dr, InvariantUnderSessionOrder) {
  auto rng = make_stream(3, 0);
  const auto bias = BiasParams::trust_bias_default();
  Dataset data;
  const auto log = random_log(7, 300, 7, bias, &data);
  ClickLog reversed = ClickLog::for_dataset(data, bias, false, "x");
  for (std::size_t i = log.size(); i-- > 0;) {
    const auto e = log.entry(i);
    reversed.append(e.query_index, e.displayed.docs, e.clicks);
  }
  const auto omega = random_values(rng, log, 0.0, 1.0);
  const auto rho = clip_propensities(log.estimated_rho0(), log.size());
  const auto reg = fit_regression(log, bias);
  EXPECT_EQ(dr_utility(reversed, omega, rho, reg, bias), dr_utility(log, omega, rho, reg, bias));
}

// Exhaustive expectation over every (ranking, click) outcome of a one-session log on a
// single-query dataset.
struct Fixture {
  Dataset data;
  BiasParams bias;
  std::vector<double> logging_scores;
  std::vector<double> new_scores;
  std::size_t k;
};

template <typename Estimate>
std::pair<double, double> enumerate_estimate(const Fixture& f, Estimate estimate) {
  const auto& query = f.data.queries[0];
  const std::size_t n = query.size();
  double mean = 0.0, second = 0.0;
  for (const auto& o : oracle::pl_prefixes(f.logging_scores, f.k)) {
    std::vector<double> p;
    for (std::size_t t = 0; t < o.docs.size(); ++t) {
      p.push_back(f.bias.alpha_at(t + 1) * oracle::label_probability(query.documents[o.docs[t]].relevance_label) +
                  f.bias.beta_at(t + 1));
    }
    for (std::uint32_t bits = 0; bits < (1u << o.docs.size()); ++bits) {
      const double prob = o.probability * oracle::click_vector_probability(p, bits);
      ClickLog log({static_cast<std::uint32_t>(n)}, f.bias, false, "x");
      std::vector<std::uint8_t> clicks;
      for (std::size_t t = 0; t < o.docs.size(); ++t) clicks.push_back((bits >> t) & 1u);
      log.append(0, o.docs, clicks);
      const double value = estimate(log);
      mean += prob * value;
      second += prob * value * value;
    }
  }
  return {mean, second - mean * mean};
}

TEST(Unbiasedness, ExhaustiveThreeDocsTopTwo) {
  auto rng = make_stream(5, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Fixture f;
    f.k = 2;
    f.data.feature_dim = 1;
    f.data.queries.push_back(oracle::make_query("q", {trial % 5, 2, 4 - trial % 3}, {{0}, {0}, {0}}));
    f.logging_scores = oracle::random_vector(rng, 3, 1.0);
    f.new_scores = oracle::random_vector(rng, 3, 1.0);
    f.bias = oracle::random_bias(rng, 2, false);
    const auto logging = oracle::exposure(oracle::pl_prefixes(f.logging_scores, 2), 3, f.bias);
    const auto target = oracle::exposure(oracle::pl_prefixes(f.new_scores, 2), 3, f.bias);
    const double truth = oracle::query_utility(target.omega, f.data.queries[0]);
    const DocValues omega{target.omega};
    const DocValues rho{logging.rho};
    RegressionModel exact;
    exact.r_hat = {{}};
    for (const auto& d : f.data.queries[0].documents) exact.r_hat[0].push_back(oracle::label_probability(d.relevance_label));
    RegressionModel skewed{{{0.9, 0.1, 0.4}}};

    const auto ips = enumerate_estimate(f, [&](const ClickLog& log) { return ips_utility(log, omega, rho, f.bias); });
    const auto dr_exact = enumerate_estimate(f, [&](const ClickLog& log) { return dr_utility(log, omega, rho, exact, f.bias); });
    const auto dr_skewed = enumerate_estimate(f, [&](const ClickLog& log) { return dr_utility(log, omega, rho, skewed, f.bias); });
    EXPECT_NEAR(ips.first, truth, 1e-10);
    EXPECT_NEAR(dr_exact.first, truth, 1e-10);
    EXPECT_NEAR(dr_skewed.first, truth, 1e-10);
    EXPECT_LE(dr_exact.second, ips.second + 1e-12);
  }
}

TEST(Unbiasedness, TrustBiasWithAffineIps) {
  auto rng = make_stream(6, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Fixture f;
    f.k = 3;
    f.data.feature_dim = 1;
    f.data.queries.push_back(oracle::make_query("q", {1, 4, 0, 3}, {{0}, {0}, {0}, {0}}));
    f.logging_scores = oracle::random_vector(rng, 4, 1.0);
    f.new_scores = oracle::random_vector(rng, 4, 1.0);
    f.bias = oracle::random_bias(rng, 3, true);
    const auto logging = oracle::exposure(oracle::pl_prefixes(f.logging_scores, 3), 4, f.bias);
    const auto target = oracle::exposure(oracle::pl_prefixes(f.new_scores, 3), 4, f.bias);
    const double truth = oracle::query_utility(target.omega, f.data.queries[0]);
    const DocValues omega{target.omega};
    const DocValues rho{logging.rho};
    RegressionModel reg{{{0.3, 0.6, 0.1, 0.8}}};
    const auto ips = enumerate_estimate(f, [&](const ClickLog& log) {
      return ips_utility(log, omega, rho, f.bias, IpsCorrection::affine);
    });
    const auto dr = enumerate_estimate(f, [&](const ClickLog& log) { return dr_utility(log, omega, rho, reg, f.bias); });
    EXPECT_NEAR(ips.first, truth, 1e-10);
    EXPECT_NEAR(dr.first, truth, 1e-10);
  }
}

TEST(PerDocReward, Examples) {
  const auto bias = BiasParams::trust_bias_default();
  ClickLog log({2}, bias, false, "x");
  const std::uint32_t shown[] = {0, 1};
  const std::uint8_t clicks[] = {1, 0};
  log.append(0, shown, clicks);
  auto [rho0, omega0] = estimate_logging_statistics(log, bias);
  log.set_estimates(rho0, omega0);
  const RegressionModel reg{{{1.0, 0.5}}};
  const auto r = per_doc_reward(log, reg, bias, omega0, rho0);
  EXPECT_NEAR(r.r[0][0], omega0[0][0], 1e-15);

  ClickLog wide({3}, bias, false, "x");
  const std::uint32_t shown3[] = {0, 1, 2};
  const std::uint8_t none[] = {0, 0, 0};
  wide.append(0, shown3, none);
  ClickLog partial = ClickLog({6}, bias, false, "x");
  const std::uint32_t five[] = {0, 1, 2, 3, 4};
  const std::uint8_t five_clicks[] = {0, 1, 0, 0, 0};
  partial.append(0, five, five_clicks);
  auto [prho, pomega] = estimate_logging_statistics(partial, bias);
  const auto pr = per_doc_reward(partial, fit_regression(partial, bias), bias, pomega, prho);
  EXPECT_EQ(pr.r[0][5], 0.0);
}

double reformulated(const DocValues& omega, const DocValues& omega0, const DocReward& reward,
                    const ClickLog& log) {
  double total = 0.0;
  for (auto q : log.logged_queries()) {
    for (std::size_t d = 0; d < omega[q].size(); ++d) {
      if (omega0[q][d] > 0.0) total += omega[q][d] / omega0[q][d] * reward.r[q][d];
    }
  }
  return total;
}

TEST(PerDocReward, ReformulationIdentityWhenEveryDocumentIsShown) {
  auto rng = make_stream(7, 0);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto bias = BiasParams::trust_bias_default();
    const auto log = random_log(seed, 20 + seed * 7, 5, bias);
    const auto omega = random_values(rng, log, 0.0, 1.0);
    const auto rho = clip_propensities(log.estimated_rho0(), log.size());
    const auto reg = fit_regression(log, bias);
    const auto reward = per_doc_reward(log, reg, bias, log.estimated_omega0(), rho);
    const double n_dr = log.size() * dr_utility(log, omega, rho, reg, bias);
    EXPECT_NEAR(reformulated(omega, log.estimated_omega0(), reward, log), n_dr, 1e-9 * std::max(1.0, std::abs(n_dr)));
  }
}

TEST(PerDocReward, UnexposedDocumentsKeepOnlyTheirRegressionTerm) {
  auto rng = make_stream(8, 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto bias = BiasParams::trust_bias_default();
    const auto log = random_log(100 + seed, 8, 9, bias);
    const auto omega = random_values(rng, log, 0.0, 1.0);
    const auto rho = clip_propensities(log.estimated_rho0(), log.size());
    const auto reg = fit_regression(log, bias);
    const auto& omega0 = log.estimated_omega0();
    const auto reward = per_doc_reward(log, reg, bias, omega0, rho);
    double unexposed = 0.0;
    for (auto q : log.logged_queries()) {
      for (std::size_t d = 0; d < omega[q].size(); ++d) {
        if (omega0[q][d] == 0.0) unexposed += log.stats(q).sessions * omega[q][d] * reg.r_hat[q][d];
      }
    }
    const double n_dr = log.size() * dr_utility(log, omega, rho, reg, bias);
    EXPECT_NEAR(reformulated(omega, omega0, reward, log) + unexposed, n_dr, 1e-9 * std::max(1.0, std::abs(n_dr)));
  }
}

TEST(Coefficients, LinearInOmega) {
  auto rng = make_stream(9, 0);
  const auto bias = BiasParams::trust_bias_default();
  const auto log = random_log(42, 200, 8, bias);
  const auto rho = clip_propensities(log.estimated_rho0(), log.size());
  const auto reg = fit_regression(log, bias);
  const auto a = random_values(rng, log, 0.0, 1.0);
  const auto b = random_values(rng, log, 0.0, 1.0);
  DocValues mix = a;
  for (auto q : log.logged_queries()) {
    for (std::size_t d = 0; d < mix[q].size(); ++d) mix[q][d] = 0.3 * a[q][d] + 0.7 * b[q][d];
  }
  const double lhs = dr_utility(log, mix, rho, reg, bias);
  const double rhs = 0.3 * dr_utility(log, a, rho, reg, bias) + 0.7 * dr_utility(log, b, rho, reg, bias);
  EXPECT_NEAR(lhs, rhs, 1e-12);
  EXPECT_NEAR(linear_estimate(log, dr_coefficients(log, rho, reg, bias), a), dr_utility(log, a, rho, reg, bias), 1e-15);
}

}  // namespace
}  // namespace saferank
