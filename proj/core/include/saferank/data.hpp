#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace saferank {

enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Document {
  std::uint32_t doc_id = 0;  // position within the query's file order
  std::vector<double> features;
  int relevance_label = 0;  // graded 0..4

  bool operator==(const Document&) const = default;
};

struct Query {
  std::string query_id;
  std::vector<Document> documents;

  std::size_t size() const noexcept { return documents.size(); }
  bool operator==(const Query&) const = default;
};

struct Dataset {
  Split split = Split::train;
  std::vector<Query> queries;
  std::size_t feature_dim = 0;

  bool operator==(const Dataset&) const = default;
};

/// Throws ContractError if any dataset invariant is broken.
void validate(const Dataset& dataset);

/// Reads SVMLight-with-qid text. Consecutive lines with the same qid form a query.
Dataset parse_ltr_dataset(std::istream& in, Split split);
Dataset load_ltr_dataset(const std::filesystem::path& path, Split split);

/// Writes SVMLight-with-qid text; zero-valued features are omitted.
void write_ltr_dataset(std::ostream& out, const Dataset& dataset);
void save_ltr_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// P(R=1 | q, d) = 0.25 * label.
double relevance_probability(int relevance_label);

/// ceil(fraction * |queries|) queries drawn without replacement; original order kept.
Dataset subsample_queries(const Dataset& dataset, double fraction, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t train_queries = 200;
  std::size_t validation_queries = 200;
  std::size_t test_queries = 200;
  std::size_t min_docs = 8;
  std::size_t max_docs = 12;
  std::size_t feature_dim = 10;
  std::size_t informative_features = 5;
  // Categorical distribution over labels 0..4.
  std::vector<double> label_probs{0.40, 0.25, 0.17, 0.11, 0.07};
  double label_signal = 1.0;     // feature shift per label grade on informative features
  double feature_noise = 1.0;    // per-feature Gaussian noise
  double query_shift = 0.5;      // per-query Gaussian offset shared by its documents
  std::uint64_t seed = 7;
};

struct DatasetSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

DatasetSplits generate_synthetic(const SyntheticSpec& spec);

/// Per-feature min-max scaling fitted on one split and applied to others.
class MinMaxScaler {
 public:
  static MinMaxScaler fit(const Dataset& train);
  void apply(Dataset& dataset) const;

 private:
  std::vector<double> min_;
  std::vector<double> range_;
};

}  // namespace saferank
