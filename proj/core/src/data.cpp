#include "saferank/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "saferank/errors.hpp"
#include "saferank/rng.hpp"

namespace saferank {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation" || text == "valid" || text == "vali") return Split::validation;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "'");
}

void validate(const Dataset& dataset) {
  if (dataset.feature_dim == 0 && !dataset.queries.empty()) {
    throw ContractError("dataset feature_dim must be positive");
  }
  std::unordered_set<std::string> query_ids;
  for (const auto& query : dataset.queries) {
    if (!query_ids.insert(query.query_id).second) {
      throw ContractError("duplicate query id '" + query.query_id + "'");
    }
    if (query.documents.empty()) {
      throw ContractError("query '" + query.query_id + "' has no documents");
    }
    std::unordered_set<std::uint32_t> doc_ids;
    for (const auto& doc : query.documents) {
      if (doc.features.size() != dataset.feature_dim) {
        throw ContractError("feature vector length mismatch in query '" + query.query_id + "'");
      }
      if (doc.relevance_label < 0 || doc.relevance_label > 4) {
        throw ContractError("relevance label outside 0..4 in query '" + query.query_id + "'");
      }
      if (!doc_ids.insert(doc.doc_id).second) {
        throw ContractError("duplicate doc id in query '" + query.query_id + "'");
      }
    }
  }
}

namespace {

struct SparseRow {
  int label = 0;
  std::string qid;
  std::vector<std::pair<std::size_t, double>> features;
};

template <typename T>
bool parse_number(std::string_view token, T& value) {
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

SparseRow parse_row(std::string_view line, std::size_t line_no) {
  auto tokens = split_ws(line);
  SparseRow row;
  if (!parse_number(tokens[0], row.label)) {
    throw ParseError("non-numeric relevance label '" + std::string(tokens[0]) + "'", line_no);
  }
  if (row.label < 0 || row.label > 4) {
    throw ParseError("relevance label outside 0..4", line_no);
  }
  if (tokens.size() < 2 || tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4) {
    throw ParseError("missing qid", line_no);
  }
  row.qid = std::string(tokens[1].substr(4));
  std::size_t last_index = 0;
  for (std::size_t t = 2; t < tokens.size(); ++t) {
    auto token = tokens[t];
    auto colon = token.find(':');
    std::size_t index = 0;
    double value = 0.0;
    if (colon == std::string_view::npos || !parse_number(token.substr(0, colon), index) ||
        !parse_number(token.substr(colon + 1), value)) {
      throw ParseError("malformed feature '" + std::string(token) + "'", line_no);
    }
    if (index == 0 || index <= last_index) {
      throw ParseError("non-increasing feature index " + std::to_string(index), line_no);
    }
    last_index = index;
    row.features.emplace_back(index, value);
  }
  return row;
}

}  // namespace

Dataset parse_ltr_dataset(std::istream& in, Split split) {
  std::vector<SparseRow> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  std::size_t feature_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    if (split_ws(view).empty()) continue;
    rows.push_back(parse_row(view, line_no));
    line_numbers.push_back(line_no);
    if (!rows.back().features.empty()) {
      feature_dim = std::max(feature_dim, rows.back().features.back().first);
    }
  }
  if (rows.empty()) throw EmptyDataError("dataset contains no documents");

  Dataset dataset;
  dataset.split = split;
  dataset.feature_dim = std::max<std::size_t>(feature_dim, 1);
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (dataset.queries.empty() || dataset.queries.back().query_id != row.qid) {
      if (!seen.insert(row.qid).second) {
        throw ParseError("qid '" + row.qid + "' is not contiguous", line_numbers[r]);
      }
      dataset.queries.push_back(Query{row.qid, {}});
    }
    auto& query = dataset.queries.back();
    Document doc;
    doc.doc_id = static_cast<std::uint32_t>(query.documents.size());
    doc.relevance_label = row.label;
    doc.features.assign(dataset.feature_dim, 0.0);
    for (const auto& [index, value] : row.features) doc.features[index - 1] = value;
    query.documents.push_back(std::move(doc));
  }
  return dataset;
}

Dataset load_ltr_dataset(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  return parse_ltr_dataset(in, split);
}

void write_ltr_dataset(std::ostream& out, const Dataset& dataset) {
  char buffer[64];
  for (const auto& query : dataset.queries) {
    for (const auto& doc : query.documents) {
      out << doc.relevance_label << " qid:" << query.query_id;
      for (std::size_t j = 0; j < doc.features.size(); ++j) {
        if (doc.features[j] == 0.0) continue;
        auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), doc.features[j]);
        out << ' ' << (j + 1) << ':' << std::string_view(buffer, ptr - buffer);
      }
      out << '\n';
    }
  }
}

void save_ltr_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  write_ltr_dataset(out, dataset);
}

double relevance_probability(int relevance_label) {
  if (relevance_label < 0 || relevance_label > 4) {
    throw std::domain_error("relevance label outside 0..4: " + std::to_string(relevance_label));
  }
  return 0.25 * relevance_label;
}

Dataset subsample_queries(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("subsample fraction must lie in (0, 1]");
  }
  const std::size_t n = dataset.queries.size();
  // Guard against 0.03 * 100 = 3.0000000000000004 rounding up to 4.
  auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  take = std::min(take, n);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_stream(seed, 0x5b5a);
  for (std::size_t i = 0; i < take; ++i) {
    auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
    std::swap(order[i], order[std::min(j, n - 1)]);
  }
  order.resize(take);
  std::sort(order.begin(), order.end());

  Dataset out;
  out.split = dataset.split;
  out.feature_dim = dataset.feature_dim;
  out.queries.reserve(take);
  for (auto index : order) out.queries.push_back(dataset.queries[index]);
  return out;
}

namespace {

Dataset generate_split(const SyntheticSpec& spec, Split split, std::size_t n_queries,
                       const std::vector<double>& direction) {
  Rng rng = make_stream(spec.seed, 100 + static_cast<std::uint64_t>(split));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> labels(spec.label_probs.begin(), spec.label_probs.end());

  Dataset dataset;
  dataset.split = split;
  dataset.feature_dim = spec.feature_dim;
  const std::string prefix(to_string(split).substr(0, 1));
  for (std::size_t q = 0; q < n_queries; ++q) {
    Query query;
    query.query_id = prefix + std::to_string(q + 1);
    const std::size_t span = spec.max_docs - spec.min_docs + 1;
    const std::size_t n_docs =
        spec.min_docs + std::min(span - 1, static_cast<std::size_t>(uniform01(rng) * span));
    std::vector<double> shift(spec.feature_dim);
    for (auto& s : shift) s = spec.query_shift * normal(rng);
    for (std::size_t d = 0; d < n_docs; ++d) {
      Document doc;
      doc.doc_id = static_cast<std::uint32_t>(d);
      doc.relevance_label = labels(rng);
      doc.features.resize(spec.feature_dim);
      for (std::size_t j = 0; j < spec.feature_dim; ++j) {
        double signal = j < direction.size() ? direction[j] * spec.label_signal *
                                                   (doc.relevance_label / 4.0)
                                             : 0.0;
        doc.features[j] = signal + shift[j] + spec.feature_noise * normal(rng);
      }
      query.documents.push_back(std::move(doc));
    }
    dataset.queries.push_back(std::move(query));
  }
  return dataset;
}

}  // namespace

DatasetSplits generate_synthetic(const SyntheticSpec& spec) {
  if (spec.min_docs == 0 || spec.max_docs < spec.min_docs) {
    throw ConfigError("synthetic spec needs 1 <= min_docs <= max_docs");
  }
  if (spec.feature_dim == 0 || spec.informative_features > spec.feature_dim) {
    throw ConfigError("synthetic spec needs informative_features <= feature_dim and feature_dim > 0");
  }
  if (spec.label_probs.size() != 5) throw ConfigError("label_probs needs 5 entries");

  Rng rng = make_stream(spec.seed, 99);
  std::vector<double> direction(spec.informative_features);
  for (auto& w : direction) w = 1.0 + 2.0 * uniform01(rng);

  DatasetSplits splits;
  splits.train = generate_split(spec, Split::train, spec.train_queries, direction);
  splits.validation = generate_split(spec, Split::validation, spec.validation_queries, direction);
  splits.test = generate_split(spec, Split::test, spec.test_queries, direction);
  return splits;
}

MinMaxScaler MinMaxScaler::fit(const Dataset& train) {
  MinMaxScaler scaler;
  scaler.min_.assign(train.feature_dim, std::numeric_limits<double>::infinity());
  std::vector<double> max(train.feature_dim, -std::numeric_limits<double>::infinity());
  for (const auto& query : train.queries) {
    for (const auto& doc : query.documents) {
      for (std::size_t j = 0; j < train.feature_dim; ++j) {
        scaler.min_[j] = std::min(scaler.min_[j], doc.features[j]);
        max[j] = std::max(max[j], doc.features[j]);
      }
    }
  }
  scaler.range_.resize(train.feature_dim);
  for (std::size_t j = 0; j < train.feature_dim; ++j) {
    if (!std::isfinite(scaler.min_[j])) scaler.min_[j] = 0.0;
    double range = max[j] - scaler.min_[j];
    scaler.range_[j] = (std::isfinite(range) && range > 0.0) ? range : 1.0;
  }
  return scaler;
}

void MinMaxScaler::apply(Dataset& dataset) const {
  if (dataset.feature_dim != min_.size()) throw ContractError("scaler feature_dim mismatch");
  for (auto& query : dataset.queries) {
    for (auto& doc : query.documents) {
      for (std::size_t j = 0; j < min_.size(); ++j) {
        doc.features[j] = (doc.features[j] - min_[j]) / range_[j];
      }
    }
  }
}

}  // namespace saferank
