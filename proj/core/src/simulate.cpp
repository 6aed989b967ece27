#include "saferank/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "saferank/errors.hpp"
#include "saferank/rng.hpp"

namespace saferank {

namespace {
constexpr std::uint16_t kEmptySlot = 0xFFFF;
constexpr std::size_t kChunkSessions = 4096;
}  // namespace

double click_probability(double relevance_prob, std::size_t rank, const BiasParams& bias,
                         bool adversarial) {
  if (rank < 1 || rank > bias.top_k()) {
    throw std::domain_error("rank " + std::to_string(rank) + " outside the displayed top-" +
                            std::to_string(bias.top_k()));
  }
  const double p = bias.alpha_at(rank) * relevance_prob + bias.beta_at(rank);
  return adversarial ? 1.0 - p : p;
}

double QueryClickStats::clicks(std::size_t doc) const {
  double total = 0.0;
  for (std::size_t t = 0; t < top_k; ++t) total += clicks_at_rank[doc * top_k + t];
  return total;
}

double QueryClickStats::times_shown(std::size_t doc) const {
  double total = 0.0;
  for (std::size_t t = 0; t < top_k; ++t) total += shown_at_rank[doc * top_k + t];
  return total;
}

double QueryClickStats::alpha_sum(std::size_t doc, const BiasParams& bias) const {
  double total = 0.0;
  for (std::size_t t = 0; t < top_k; ++t) total += shown_at_rank[doc * top_k + t] * bias.alpha_at(t + 1);
  return total;
}

double QueryClickStats::beta_sum(std::size_t doc, const BiasParams& bias) const {
  double total = 0.0;
  for (std::size_t t = 0; t < top_k; ++t) total += shown_at_rank[doc * top_k + t] * bias.beta_at(t + 1);
  return total;
}

ClickLog::ClickLog(std::vector<std::uint32_t> doc_counts, BiasParams bias, bool adversarial,
                   std::string logging_policy_ref)
    : doc_counts_(std::move(doc_counts)),
      bias_(std::move(bias)),
      adversarial_(adversarial),
      logging_policy_ref_(std::move(logging_policy_ref)),
      stats_(doc_counts_.size()),
      rho0_(doc_counts_.size()),
      omega0_(doc_counts_.size()) {
  if (bias_.top_k() == 0 || bias_.top_k() > 32) throw ContractError("click log needs 1 <= K <= 32");
  for (std::size_t q = 0; q < doc_counts_.size(); ++q) {
    if (doc_counts_[q] >= kEmptySlot) throw ContractError("too many documents in one query");
    stats_[q].top_k = bias_.top_k();
  }
}

ClickLog ClickLog::for_dataset(const Dataset& dataset, BiasParams bias, bool adversarial,
                               std::string logging_policy_ref) {
  std::vector<std::uint32_t> counts;
  counts.reserve(dataset.queries.size());
  for (const auto& query : dataset.queries) counts.push_back(static_cast<std::uint32_t>(query.size()));
  return ClickLog(std::move(counts), std::move(bias), adversarial, std::move(logging_policy_ref));
}

void ClickLog::append(std::uint32_t query_index, std::span<const std::uint32_t> displayed,
                      std::span<const std::uint8_t> clicks) {
  if (query_index >= doc_counts_.size()) throw ContractError("query index out of range");
  const std::size_t k = bias_.top_k();
  const std::size_t n_docs = doc_counts_[query_index];
  if (displayed.size() != clicks.size()) throw ContractError("clicks must align with displayed docs");
  if (displayed.size() > k || displayed.size() != std::min(k, n_docs)) {
    throw ContractError("displayed ranking must hold min(K, |D_q|) documents");
  }
  for (std::size_t t = 0; t < displayed.size(); ++t) {
    if (displayed[t] >= n_docs) throw ContractError("displayed document out of range");
    for (std::size_t u = 0; u < t; ++u) {
      if (displayed[u] == displayed[t]) throw ContractError("duplicate document in displayed ranking");
    }
  }
  auto& stats = stats_[query_index];
  if (stats.shown_at_rank.empty()) {
    stats.shown_at_rank.assign(n_docs * k, 0);
    stats.clicks_at_rank.assign(n_docs * k, 0);
  }
  std::uint32_t mask = 0;
  for (std::size_t t = 0; t < displayed.size(); ++t) {
    const auto doc = displayed[t];
    stats.shown_at_rank[doc * k + t] += 1;
    if (clicks[t]) {
      stats.clicks_at_rank[doc * k + t] += 1;
      mask |= 1U << t;
    }
  }
  stats.sessions += 1;
  total_sessions_ += 1;
  if (!compacted_) {
    session_query_.push_back(query_index);
    for (std::size_t t = 0; t < k; ++t) {
      session_docs_.push_back(t < displayed.size() ? static_cast<std::uint16_t>(displayed[t])
                                                   : kEmptySlot);
    }
    session_clicks_.push_back(mask);
  }
}

void ClickLog::compact() {
  compacted_ = true;
  session_query_ = {};
  session_docs_ = {};
  session_clicks_ = {};
}

LogEntry ClickLog::entry(std::size_t i) const {
  if (compacted_) throw ContractError("click log was compacted; sessions are not available");
  if (i >= total_sessions_) throw ContractError("log entry index out of range");
  const std::size_t k = bias_.top_k();
  LogEntry entry;
  entry.query_index = session_query_[i];
  entry.displayed.query_index = entry.query_index;
  for (std::size_t t = 0; t < k; ++t) {
    const auto doc = session_docs_[i * k + t];
    if (doc == kEmptySlot) break;
    entry.displayed.docs.push_back(doc);
    entry.clicks.push_back(static_cast<std::uint8_t>((session_clicks_[i] >> t) & 1U));
  }
  return entry;
}

std::vector<std::uint32_t> ClickLog::logged_queries() const {
  std::vector<std::uint32_t> out;
  for (std::size_t q = 0; q < stats_.size(); ++q) {
    if (stats_[q].sessions > 0) out.push_back(static_cast<std::uint32_t>(q));
  }
  return out;
}

void ClickLog::set_estimates(DocValues rho0, DocValues omega0) {
  if (rho0.size() != doc_counts_.size() || omega0.size() != doc_counts_.size()) {
    throw ContractError("estimate maps must cover every query slot");
  }
  rho0_ = std::move(rho0);
  omega0_ = std::move(omega0);
}

std::pair<DocValues, DocValues> estimate_logging_statistics(const ClickLog& log,
                                                            const BiasParams& bias) {
  if (log.empty()) throw EmptyDataError("cannot estimate logging statistics from an empty log");
  DocValues rho0(log.num_queries());
  DocValues omega0(log.num_queries());
  for (auto q : log.logged_queries()) {
    const auto& stats = log.stats(q);
    const double inv = 1.0 / static_cast<double>(stats.sessions);
    const std::size_t n_docs = log.doc_count(q);
    rho0[q].resize(n_docs);
    omega0[q].resize(n_docs);
    for (std::size_t d = 0; d < n_docs; ++d) {
      const double a = stats.alpha_sum(d, bias);
      rho0[q][d] = a * inv;
      omega0[q][d] = (a + stats.beta_sum(d, bias)) * inv;
    }
  }
  return {std::move(rho0), std::move(omega0)};
}

DocValues clip_propensities(const DocValues& rho0, std::size_t n) {
  if (n == 0) throw ContractError("propensity clipping needs N >= 1");
  const double floor = 10.0 / std::sqrt(static_cast<double>(n));
  DocValues clipped = rho0;
  for (auto& row : clipped) {
    for (auto& value : row) value = std::max(value, floor);
  }
  return clipped;
}

namespace {

struct ChunkBuffer {
  std::vector<std::uint32_t> queries;
  std::vector<std::uint32_t> docs;
  std::vector<std::uint8_t> clicks;
  std::vector<std::uint8_t> lengths;
};

}  // namespace

ClickLog simulate_sessions(const RankingPolicy& logging_policy, const Dataset& dataset,
                           const BiasParams& bias, std::size_t n_sessions,
                           const SimulationOptions& options) {
  if (n_sessions == 0) throw EmptyDataError("simulate_sessions needs n_sessions > 0");
  if (dataset.queries.empty()) throw EmptyDataError("cannot simulate sessions on an empty dataset");
  if (logging_policy.top_k > bias.top_k()) {
    throw ContractError("logging policy displays more positions than the click model covers");
  }

  std::vector<PlackettLuce> distributions;
  std::vector<std::vector<double>> relevance(dataset.queries.size());
  distributions.reserve(dataset.queries.size());
  for (std::size_t q = 0; q < dataset.queries.size(); ++q) {
    const auto& query = dataset.queries[q];
    distributions.emplace_back(policy_scores(logging_policy, query), logging_policy.temperature);
    for (const auto& doc : query.documents) {
      relevance[q].push_back(relevance_probability(doc.relevance_label));
    }
  }

  const std::size_t n_chunks = (n_sessions + kChunkSessions - 1) / kChunkSessions;
  auto run_chunk = [&](std::size_t chunk, ChunkBuffer& buffer) {
    Rng rng = make_stream(options.seed, chunk);
    const std::size_t begin = chunk * kChunkSessions;
    const std::size_t end = std::min(n_sessions, begin + kChunkSessions);
    std::vector<std::uint32_t> docs;
    const auto n_queries = static_cast<double>(dataset.queries.size());
    for (std::size_t i = begin; i < end; ++i) {
      auto q = static_cast<std::uint32_t>(uniform01(rng) * n_queries);
      q = std::min<std::uint32_t>(q, static_cast<std::uint32_t>(dataset.queries.size() - 1));
      distributions[q].sample(rng, logging_policy.display_length(dataset.queries[q].size()), docs);
      buffer.queries.push_back(q);
      buffer.lengths.push_back(static_cast<std::uint8_t>(docs.size()));
      for (std::size_t t = 0; t < docs.size(); ++t) {
        const double p = click_probability(relevance[q][docs[t]], t + 1, bias, options.adversarial);
        buffer.docs.push_back(docs[t]);
        buffer.clicks.push_back(uniform01(rng) < p ? 1 : 0);
      }
    }
  };

  ClickLog log = ClickLog::for_dataset(dataset, bias, options.adversarial, options.logging_policy_ref);
  if (!options.keep_sessions) log.compact();
  auto flush = [&](const ChunkBuffer& buffer) {
    std::size_t offset = 0;
    for (std::size_t s = 0; s < buffer.queries.size(); ++s) {
      const std::size_t len = buffer.lengths[s];
      log.append(buffer.queries[s], std::span(buffer.docs).subspan(offset, len),
                 std::span(buffer.clicks).subspan(offset, len));
      offset += len;
    }
  };

  const unsigned workers = std::max(1U, options.workers);
  for (std::size_t first = 0; first < n_chunks; first += workers) {
    const std::size_t count = std::min<std::size_t>(workers, n_chunks - first);
    std::vector<ChunkBuffer> buffers(count);
    if (count == 1) {
      run_chunk(first, buffers[0]);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < count; ++w) {
        threads.emplace_back([&, w] { run_chunk(first + w, buffers[w]); });
      }
      for (auto& t : threads) t.join();
    }
    for (const auto& buffer : buffers) flush(buffer);
  }

  auto [rho0, omega0] = estimate_logging_statistics(log, bias);
  log.set_estimates(std::move(rho0), std::move(omega0));
  return log;
}

namespace {

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  char buffer[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buffer, sizeof(buffer), "%.17g", values[i]);
    if (i) out += ',';
    out += buffer;
  }
  return out;
}

std::vector<double> split_doubles(const std::string& text, std::size_t line) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError("malformed number '" + item + "'", line);
    }
  }
  return values;
}

}  // namespace

void write_click_log(std::ostream& out, const ClickLog& log, const Dataset& dataset) {
  if (!log.has_sessions()) throw ContractError("cannot serialize a compacted click log");
  if (log.num_queries() != dataset.queries.size()) throw ContractError("log does not match dataset");
  out << "# saferank-clicklog 1\n"
      << "# n " << log.size() << '\n'
      << "# top_k " << log.top_k() << '\n'
      << "# alpha " << join_doubles(log.bias().alpha()) << '\n'
      << "# beta " << join_doubles(log.bias().beta()) << '\n'
      << "# adversarial " << (log.adversarial() ? 1 : 0) << '\n'
      << "# logging_policy " << log.logging_policy_ref() << '\n';
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto entry = log.entry(i);
    const auto& query = dataset.queries[entry.query_index];
    out << query.query_id << '\t';
    for (std::size_t t = 0; t < entry.displayed.docs.size(); ++t) {
      if (t) out << ',';
      out << query.documents[entry.displayed.docs[t]].doc_id;
    }
    out << '\t';
    for (auto c : entry.clicks) out << (c ? '1' : '0');
    out << '\n';
  }
}

ClickLog read_click_log(std::istream& in, const Dataset& dataset) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t declared_n = 0;
  std::size_t top_k = 0;
  std::vector<double> alpha;
  std::vector<double> beta;
  bool adversarial = false;
  std::string policy_ref;
  bool header_seen = false;

  std::unordered_map<std::string, std::uint32_t> query_index;
  for (std::size_t q = 0; q < dataset.queries.size(); ++q) {
    query_index.emplace(dataset.queries[q].query_id, static_cast<std::uint32_t>(q));
  }

  std::optional<ClickLog> log;
  std::vector<std::uint32_t> docs;
  std::vector<std::uint8_t> clicks;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string key;
      header >> key;
      std::string value;
      std::getline(header >> std::ws, value);
      if (key == "saferank-clicklog") {
        header_seen = true;
      } else if (key == "n") {
        declared_n = std::stoull(value);
      } else if (key == "top_k") {
        top_k = std::stoull(value);
      } else if (key == "alpha") {
        alpha = split_doubles(value, line_no);
      } else if (key == "beta") {
        beta = split_doubles(value, line_no);
      } else if (key == "adversarial") {
        adversarial = value == "1";
      } else if (key == "logging_policy") {
        policy_ref = value;
      }
      continue;
    }
    if (!log) {
      if (!header_seen || alpha.size() != top_k) throw ParseError("missing or invalid header", line_no);
      log = ClickLog::for_dataset(dataset, BiasParams(alpha, beta), adversarial, policy_ref);
    }
    auto tab1 = line.find('\t');
    auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) throw ParseError("expected three tab-separated fields", line_no);
    auto it = query_index.find(line.substr(0, tab1));
    if (it == query_index.end()) throw ParseError("unknown query id", line_no);
    const auto& query = dataset.queries[it->second];
    docs.clear();
    clicks.clear();
    std::stringstream doc_stream(line.substr(tab1 + 1, tab2 - tab1 - 1));
    std::string item;
    while (std::getline(doc_stream, item, ',')) {
      std::uint32_t doc_id = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), doc_id);
      if (ec != std::errc() || ptr != item.data() + item.size()) throw ParseError("bad doc id", line_no);
      auto pos = std::find_if(query.documents.begin(), query.documents.end(),
                              [&](const Document& d) { return d.doc_id == doc_id; });
      if (pos == query.documents.end()) throw ParseError("unknown doc id", line_no);
      docs.push_back(static_cast<std::uint32_t>(pos - query.documents.begin()));
    }
    for (char c : line.substr(tab2 + 1)) {
      if (c != '0' && c != '1') throw ParseError("click bits must be 0 or 1", line_no);
      clicks.push_back(c == '1' ? 1 : 0);
    }
    try {
      log->append(it->second, docs, clicks);
    } catch (const ContractError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!log) throw EmptyDataError("click log contains no sessions");
  if (log->size() != declared_n) throw ParseError("session count does not match header", line_no);
  auto [rho0, omega0] = estimate_logging_statistics(*log, log->bias());
  log->set_estimates(std::move(rho0), std::move(omega0));
  return std::move(*log);
}

}  // namespace saferank
