#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "saferank/bias.hpp"
#include "saferank/data.hpp"
#include "saferank/policy.hpp"

namespace saferank {

/// Per-(query, doc) values indexed as values[query_index][doc]. Queries without
/// logged sessions hold an empty inner vector.
using DocValues = std::vector<std::vector<double>>;

/// Trust-bias click probability alpha_k * P(R) + beta_k, or its complement for the
/// adversarial user. Throws std::domain_error when `rank` is outside 1..K.
double click_probability(double relevance_prob, std::size_t rank, const BiasParams& bias,
                         bool adversarial);

struct LogEntry {
  std::uint32_t query_index = 0;
  Ranking displayed;
  std::vector<std::uint8_t> clicks;  // aligned with displayed positions
};

/// Aggregated display and click counts of one query, per (doc, rank).
struct QueryClickStats {
  std::size_t sessions = 0;
  std::size_t top_k = 0;
  std::vector<std::uint32_t> shown_at_rank;   // [doc * top_k + rank - 1]
  std::vector<std::uint32_t> clicks_at_rank;  // [doc * top_k + rank - 1]

  std::size_t n_docs() const noexcept { return top_k ? shown_at_rank.size() / top_k : 0; }
  double clicks(std::size_t doc) const;
  double times_shown(std::size_t doc) const;
  /// Sum over sessions of alpha at the doc's displayed rank (0 when undisplayed).
  double alpha_sum(std::size_t doc, const BiasParams& bias) const;
  double beta_sum(std::size_t doc, const BiasParams& bias) const;

  bool operator==(const QueryClickStats&) const = default;
};

/// Logged sessions (q_i, y_i, c_i) with per-query aggregates and estimated logging statistics.
class ClickLog {
 public:
  ClickLog() = default;
  ClickLog(std::vector<std::uint32_t> doc_counts, BiasParams bias, bool adversarial,
           std::string logging_policy_ref);

  static ClickLog for_dataset(const Dataset& dataset, BiasParams bias, bool adversarial,
                              std::string logging_policy_ref);

  void append(std::uint32_t query_index, std::span<const std::uint32_t> displayed,
              std::span<const std::uint8_t> clicks);

  /// Total session count N.
  std::size_t size() const noexcept { return total_sessions_; }
  bool empty() const noexcept { return total_sessions_ == 0; }

  /// Drops explicit sessions and keeps only the per-(query, doc, rank) counts.
  void compact();
  bool has_sessions() const noexcept { return !compacted_; }
  LogEntry entry(std::size_t i) const;

  std::size_t top_k() const noexcept { return bias_.top_k(); }
  std::size_t num_queries() const noexcept { return doc_counts_.size(); }
  std::size_t doc_count(std::uint32_t query) const { return doc_counts_.at(query); }
  const BiasParams& bias() const noexcept { return bias_; }
  bool adversarial() const noexcept { return adversarial_; }
  const std::string& logging_policy_ref() const noexcept { return logging_policy_ref_; }

  /// Queries with at least one session, ascending.
  std::vector<std::uint32_t> logged_queries() const;
  const QueryClickStats& stats(std::uint32_t query) const { return stats_.at(query); }

  const DocValues& estimated_rho0() const noexcept { return rho0_; }
  const DocValues& estimated_omega0() const noexcept { return omega0_; }
  void set_estimates(DocValues rho0, DocValues omega0);

  bool operator==(const ClickLog&) const = default;

 private:
  std::vector<std::uint32_t> doc_counts_;
  BiasParams bias_;
  bool adversarial_ = false;
  std::string logging_policy_ref_;
  std::size_t total_sessions_ = 0;
  bool compacted_ = false;
  std::vector<std::uint32_t> session_query_;
  std::vector<std::uint16_t> session_docs_;  // top_k slots per session, 0xFFFF padding
  std::vector<std::uint32_t> session_clicks_;  // bit t set when position t+1 was clicked
  std::vector<QueryClickStats> stats_;
  DocValues rho0_;
  DocValues omega0_;
};

/// Per-query Monte-Carlo estimates of rho_0 and omega_0 from the logged displays.
std::pair<DocValues, DocValues> estimate_logging_statistics(const ClickLog& log,
                                                            const BiasParams& bias);

/// max(rho0, 10 / sqrt(N)) per entry.
DocValues clip_propensities(const DocValues& rho0, std::size_t n);

struct SimulationOptions {
  bool adversarial = false;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  /// When false, only the per-(query, doc, rank) counts are kept.
  bool keep_sessions = true;
  std::string logging_policy_ref = "logging";
};

/// Simulates `n_sessions` sessions: uniform query, PL-sampled display, Bernoulli clicks.
/// Sessions are drawn in fixed-size chunks, each from its own substream of `seed`, so the
/// result does not depend on `workers`. Estimated statistics are filled in.
ClickLog simulate_sessions(const RankingPolicy& logging_policy, const Dataset& dataset,
                           const BiasParams& bias, std::size_t n_sessions,
                           const SimulationOptions& options);

/// Line-oriented text format; requires explicit sessions.
void write_click_log(std::ostream& out, const ClickLog& log, const Dataset& dataset);
ClickLog read_click_log(std::istream& in, const Dataset& dataset);

}  // namespace saferank
