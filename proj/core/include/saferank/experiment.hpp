#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saferank/bias.hpp"
#include "saferank/data.hpp"
#include "saferank/objective.hpp"
#include "saferank/policy.hpp"
#include "saferank/scorer.hpp"
#include "saferank/train.hpp"

namespace saferank {

/// Flat `key = value` configuration; `#` starts a comment. Keys are dotted names.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct MethodSpec {
  std::string name;
  ObjectiveSpec objective;
};

/// Presets: ips, dr, safe_ips, safe_dr, prpo. Per-method keys `method.<name>.estimator`,
/// `.safety`, `.delta`, `.schedule`, `.coefficient` override or define methods.
MethodSpec resolve_method(const ConfigFile& config, const std::string& name);

struct ExperimentConfig {
  // Dataset: synthetic generator or LTR files.
  std::string dataset_source = "synthetic";
  std::filesystem::path train_path;
  std::filesystem::path validation_path;
  std::filesystem::path test_path;
  SyntheticSpec synthetic;

  BiasParams bias = BiasParams::trust_bias_default();
  bool adversarial = false;

  ScorerKind scorer = ScorerKind::linear;
  std::size_t hidden_dim = 16;
  std::size_t top_k = 5;
  double temperature = 1.0;

  std::string logging_source = "train";  // train | load
  double logging_fraction = 0.03;
  std::filesystem::path logging_path;

  std::vector<std::size_t> n_grid{100, 1000, 10000, 100000, 1000000};
  std::size_t n_runs = 10;
  std::uint64_t seed = 2024;
  double validation_fraction = 0.15;
  std::vector<MethodSpec> methods;
  std::size_t eval_samples = 100;
  std::size_t eval_k = 5;
  std::filesystem::path output_dir = "results";

  /// Click-trained policies start from a fresh uniform initialization, or from the
  /// logging policy when `train.init = logging`.
  bool init_from_logging = false;
  TrainConfig train;
  TrainConfig skyline_train;
  TrainConfig logging_train;

  ConfigFile raw;
};

/// Throws ConfigError on unknown keys or invalid values.
ExperimentConfig make_experiment_config(const ConfigFile& file);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// TrainConfig from `<prefix>.learning_rate`, `.max_epochs`, `.patience`, `.batch_queries`,
/// `.mc_samples`, `.validation_mc_samples`, `.momentum`, `.control_variate`,
/// `.detached_penalty`, starting from `defaults`.
TrainConfig parse_train_config(const ConfigFile& file, const std::string& prefix, TrainConfig defaults);

DatasetSplits load_datasets(const ExperimentConfig& config);

/// Freshly initialized policy of the configured class.
RankingPolicy initial_policy(const ExperimentConfig& config, std::size_t feature_dim, std::uint64_t seed);

/// Starting point of click-based training; identical for every cell of an experiment.
RankingPolicy click_training_init(const ExperimentConfig& config, const RankingPolicy& logging,
                                  std::size_t feature_dim);

/// Production ranker trained on the labels of a `logging_fraction` query subsample, or loaded.
RankingPolicy make_logging_policy(const ExperimentConfig& config, const DatasetSplits& data);

struct ResultRow {
  std::string method;
  std::size_t n = 0;
  std::size_t run_index = 0;
  double ndcg_expected = 0.0;
  double ndcg_greedy = 0.0;
  double logging_ndcg = 0.0;
  double skyline_ndcg = 0.0;
  double objective_final = 0.0;
  std::string status = "ok";

  bool operator==(const ResultRow&) const = default;
};

struct TimingRow {
  std::string method;
  std::size_t n = 0;
  std::size_t run_index = 0;
  double wall_time_seconds = 0.0;
};

struct SummaryRow {
  std::string method;
  std::size_t n = 0;
  std::size_t runs = 0;
  double mean = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

extern const char* const kResultHeader;
extern const char* const kSummaryHeader;
extern const char* const kTimingHeader;

void write_result_rows(std::ostream& out, const std::vector<ResultRow>& rows, bool header = true);
std::vector<ResultRow> read_result_rows(std::istream& in);
void write_summary_rows(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_timing_rows(std::ostream& out, const std::vector<TimingRow>& rows, bool header = true);

/// Linear-interpolation percentile of `values` (p in [0, 1]).
double percentile(std::vector<double> values, double p);

/// Per (method, n) mean, p10 and p90 of ndcg_expected over rows with status "ok", in order of
/// first appearance.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Everything shared by the cells of one experiment.
struct ExperimentContext {
  ExperimentConfig config;
  DatasetSplits data;
  RankingPolicy logging;
  RankingPolicy skyline;
  double logging_ndcg = 0.0;
  double skyline_ndcg = 0.0;
  double skyline_greedy = 0.0;
  double logging_greedy = 0.0;
};

ExperimentContext prepare_experiment(const ExperimentConfig& config);

struct CellOutput {
  std::vector<ResultRow> rows;
  std::vector<TimingRow> timings;
};

/// Simulates the (n, run) click logs once and trains/evaluates every method on them.
/// Methods listed in `skip` are not run.
CellOutput run_cell(const ExperimentContext& context, std::size_t n, std::size_t run_index,
                    const std::vector<std::string>& skip = {});

/// Runs all cells, reusing per-cell row files under `output_dir/rows`, and writes
/// results.csv, summary.csv and timings.csv. Returns all rows including reference rows.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, unsigned workers,
                                      std::ostream* progress = nullptr);

/// Rebuilds summary.csv from results.csv in `output_dir`.
std::vector<SummaryRow> summarize_directory(const std::filesystem::path& output_dir);

}  // namespace saferank
