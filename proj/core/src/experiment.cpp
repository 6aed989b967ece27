#include "saferank/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "saferank/errors.hpp"
#include "saferank/evaluate.hpp"
#include "saferank/rng.hpp"
#include "saferank/simulate.hpp"

namespace saferank {

namespace {

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + text + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const auto value = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + text + "'");
  }
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
  ConfigFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (file.values_.count(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    file.values_[key] = trim(line.substr(eq + 1));
  }
  return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in);
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

std::size_t ConfigFile::get_size(const std::string& key, std::size_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : static_cast<std::size_t>(parse_u64(key, it->second));
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_u64(key, it->second);
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> ConfigFile::get_doubles(const std::string& key, std::vector<double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::string> ConfigFile::get_list(const std::string& key, std::vector<std::string> fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

MethodSpec resolve_method(const ConfigFile& config, const std::string& name) {
  MethodSpec method;
  method.name = name;
  auto& spec = method.objective;
  if (name == "ips") {
    spec.estimator = Estimator::ips;
  } else if (name == "dr") {
    spec.estimator = Estimator::dr;
  } else if (name == "safe_ips") {
    spec.estimator = Estimator::ips;
    spec.safety.mode = SafetyMode::safe_ips;
  } else if (name == "safe_dr") {
    spec.estimator = Estimator::dr;
    spec.safety.mode = SafetyMode::safe_dr;
  } else if (name == "prpo") {
    spec.estimator = Estimator::dr;
    spec.safety.mode = SafetyMode::prpo;
  } else if (!config.has("method." + name + ".estimator")) {
    throw ConfigError("method '" + name + "' is neither a preset nor defined by method." + name + ".estimator");
  }
  if (name.find_first_of(",\n\"/ ") != std::string::npos) {
    throw ConfigError("method name '" + name + "' contains a reserved character");
  }
  const std::string prefix = "method." + name + ".";
  if (config.has(prefix + "estimator")) spec.estimator = parse_estimator(config.get(prefix + "estimator", ""));
  if (config.has(prefix + "safety")) spec.safety.mode = parse_safety_mode(config.get(prefix + "safety", ""));
  spec.safety.delta = config.get_double(prefix + "delta", spec.safety.delta);
  if (config.has(prefix + "schedule")) {
    spec.safety.schedule.kind = parse_clip_schedule(config.get(prefix + "schedule", ""));
  }
  spec.safety.schedule.coefficient = config.get_double(prefix + "coefficient", spec.safety.schedule.coefficient);
  if (config.has(prefix + "ips_correction")) {
    const auto text = config.get(prefix + "ips_correction", "");
    if (text == "affine") spec.ips_correction = IpsCorrection::affine;
    else if (text == "none") spec.ips_correction = IpsCorrection::none;
    else throw ConfigError("ips_correction must be 'affine' or 'none'");
  }
  validate(spec);
  if (spec.safety.mode == SafetyMode::prpo) adaptive_epsilons(spec.safety.schedule, 1);
  return method;
}

TrainConfig parse_train_config(const ConfigFile& file, const std::string& prefix, TrainConfig defaults) {
  TrainConfig config = defaults;
  const std::string p = prefix + ".";
  config.learning_rate = file.get_double(p + "learning_rate", config.learning_rate);
  config.max_epochs = file.get_size(p + "max_epochs", config.max_epochs);
  config.patience = file.get_size(p + "patience", config.patience);
  config.batch_queries = file.get_size(p + "batch_queries", config.batch_queries);
  config.mc_samples_per_query = file.get_size(p + "mc_samples", config.mc_samples_per_query);
  config.validation_mc_samples = file.get_size(p + "validation_mc_samples", config.validation_mc_samples);
  config.momentum = file.get_double(p + "momentum", config.momentum);
  config.control_variate = file.get_bool(p + "control_variate", config.control_variate);
  config.detached_penalty = file.get_bool(p + "detached_penalty", config.detached_penalty);
  validate(config);
  return config;
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dataset.source", "dataset.train", "dataset.validation", "dataset.test",
      "synthetic.train_queries", "synthetic.validation_queries", "synthetic.test_queries",
      "synthetic.min_docs", "synthetic.max_docs", "synthetic.feature_dim",
      "synthetic.informative_features", "synthetic.label_probs", "synthetic.label_signal",
      "synthetic.feature_noise", "synthetic.query_shift", "synthetic.seed",
      "bias.alpha", "bias.beta", "clicks.adversarial",
      "policy.scorer", "policy.hidden_dim", "policy.top_k", "policy.temperature",
      "logging.source", "logging.fraction", "logging.path",
      "experiment.n_grid", "experiment.runs", "experiment.seed", "experiment.validation_fraction",
      "experiment.methods", "experiment.eval_samples", "experiment.eval_k", "experiment.output_dir",
      "simulate.sessions", "simulate.split",
      "train.method", "train.init", "train.sessions", "train.click_log", "train.validation_click_log",
      "evaluate.policy", "evaluate.split", "evaluate.mode",
  };
  return keys;
}

const std::set<std::string>& train_suffixes() {
  static const std::set<std::string> keys = {
      "learning_rate", "max_epochs", "patience", "batch_queries", "mc_samples",
      "validation_mc_samples", "momentum", "control_variate", "detached_penalty"};
  return keys;
}

void check_keys(const ConfigFile& file) {
  static const std::set<std::string> method_suffixes = {"estimator", "safety", "delta", "schedule",
                                                        "coefficient", "ips_correction"};
  for (const auto& [key, value] : file.values()) {
    if (known_keys().count(key)) continue;
    const auto dot = key.find('.');
    const auto head = key.substr(0, dot);
    const auto tail = dot == std::string::npos ? "" : key.substr(dot + 1);
    if ((head == "train" || head == "skyline" || head == "logging") && train_suffixes().count(tail)) continue;
    if (head == "method") {
      const auto last = key.rfind('.');
      if (last > dot + 1 && method_suffixes.count(key.substr(last + 1))) continue;
    }
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

ExperimentConfig make_experiment_config(const ConfigFile& file) {
  check_keys(file);
  ExperimentConfig config;
  config.raw = file;
  config.dataset_source = file.get("dataset.source", config.dataset_source);
  if (config.dataset_source != "synthetic" && config.dataset_source != "files") {
    throw ConfigError("dataset.source must be 'synthetic' or 'files'");
  }
  config.train_path = file.get("dataset.train", "");
  config.validation_path = file.get("dataset.validation", "");
  config.test_path = file.get("dataset.test", "");
  if (config.dataset_source == "files" &&
      (config.train_path.empty() || config.validation_path.empty() || config.test_path.empty())) {
    throw ConfigError("dataset.source = files needs dataset.train, dataset.validation and dataset.test");
  }

  auto& syn = config.synthetic;
  syn.train_queries = file.get_size("synthetic.train_queries", syn.train_queries);
  syn.validation_queries = file.get_size("synthetic.validation_queries", syn.validation_queries);
  syn.test_queries = file.get_size("synthetic.test_queries", syn.test_queries);
  syn.min_docs = file.get_size("synthetic.min_docs", syn.min_docs);
  syn.max_docs = file.get_size("synthetic.max_docs", syn.max_docs);
  syn.feature_dim = file.get_size("synthetic.feature_dim", syn.feature_dim);
  syn.informative_features = file.get_size("synthetic.informative_features", syn.informative_features);
  syn.label_probs = file.get_doubles("synthetic.label_probs", syn.label_probs);
  syn.label_signal = file.get_double("synthetic.label_signal", syn.label_signal);
  syn.feature_noise = file.get_double("synthetic.feature_noise", syn.feature_noise);
  syn.query_shift = file.get_double("synthetic.query_shift", syn.query_shift);
  syn.seed = file.get_u64("synthetic.seed", syn.seed);

  try {
    const auto defaults = BiasParams::trust_bias_default();
    config.bias = BiasParams(file.get_doubles("bias.alpha", defaults.alpha()),
                             file.get_doubles("bias.beta", defaults.beta()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid bias parameters: ") + e.what());
  }
  config.adversarial = file.get_bool("clicks.adversarial", config.adversarial);

  try {
    config.scorer = parse_scorer_kind(file.get("policy.scorer", "linear"));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  config.hidden_dim = file.get_size("policy.hidden_dim", config.hidden_dim);
  config.top_k = file.get_size("policy.top_k", config.bias.top_k());
  config.temperature = file.get_double("policy.temperature", config.temperature);
  if (config.top_k == 0 || config.top_k > config.bias.top_k()) {
    throw ConfigError("policy.top_k must lie in 1..K of the bias vectors");
  }
  if (!(config.temperature > 0.0)) throw ConfigError("policy.temperature must be positive");

  config.logging_source = file.get("logging.source", config.logging_source);
  if (config.logging_source != "train" && config.logging_source != "load") {
    throw ConfigError("logging.source must be 'train' or 'load'");
  }
  config.logging_fraction = file.get_double("logging.fraction", config.logging_fraction);
  if (!(config.logging_fraction > 0.0 && config.logging_fraction <= 1.0)) {
    throw ConfigError("logging.fraction must lie in (0, 1]");
  }
  config.logging_path = file.get("logging.path", "");
  if (config.logging_source == "load" && config.logging_path.empty()) {
    throw ConfigError("logging.source = load needs logging.path");
  }

  config.n_grid.clear();
  for (const auto& item : file.get_list("experiment.n_grid", {"100", "1000", "10000", "100000", "1000000"})) {
    config.n_grid.push_back(static_cast<std::size_t>(parse_u64("experiment.n_grid", item)));
  }
  if (config.n_grid.empty()) throw ConfigError("experiment.n_grid must not be empty");
  for (std::size_t i = 0; i < config.n_grid.size(); ++i) {
    if (config.n_grid[i] == 0 || (i > 0 && config.n_grid[i] <= config.n_grid[i - 1])) {
      throw ConfigError("experiment.n_grid must be strictly increasing positive counts");
    }
  }
  config.n_runs = file.get_size("experiment.runs", config.n_runs);
  if (config.n_runs == 0) throw ConfigError("experiment.runs must be >= 1");
  config.seed = file.get_u64("experiment.seed", config.seed);
  config.validation_fraction = file.get_double("experiment.validation_fraction", config.validation_fraction);
  if (!(config.validation_fraction > 0.0)) throw ConfigError("experiment.validation_fraction must be positive");
  for (const auto& name : file.get_list("experiment.methods", {"ips", "dr", "safe_dr", "prpo"})) {
    for (const auto& existing : config.methods) {
      if (existing.name == name) throw ConfigError("method '" + name + "' listed twice");
    }
    if (name == "logging" || name == "skyline") throw ConfigError("method name '" + name + "' is reserved");
    config.methods.push_back(resolve_method(file, name));
  }
  if (config.methods.empty()) throw ConfigError("experiment.methods must not be empty");
  config.eval_samples = file.get_size("experiment.eval_samples", config.eval_samples);
  config.eval_k = file.get_size("experiment.eval_k", config.eval_k);
  if (config.eval_samples == 0 || config.eval_k == 0) {
    throw ConfigError("experiment.eval_samples and experiment.eval_k must be positive");
  }
  config.output_dir = file.get("experiment.output_dir", config.output_dir.string());

  const auto init = file.get("train.init", "uniform");
  if (init != "uniform" && init != "logging") throw ConfigError("train.init must be 'uniform' or 'logging'");
  config.init_from_logging = init == "logging";

  TrainConfig defaults;
  if (config.scorer == ScorerKind::two_layer) defaults.learning_rate = 1e-3;
  config.train = parse_train_config(file, "train", defaults);
  config.skyline_train = parse_train_config(file, "skyline", config.train);
  config.logging_train = parse_train_config(file, "logging", config.skyline_train);
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return make_experiment_config(ConfigFile::load(path));
}

DatasetSplits load_datasets(const ExperimentConfig& config) {
  if (config.dataset_source == "synthetic") return generate_synthetic(config.synthetic);
  DatasetSplits data;
  data.train = load_ltr_dataset(config.train_path, Split::train);
  data.validation = load_ltr_dataset(config.validation_path, Split::validation);
  data.test = load_ltr_dataset(config.test_path, Split::test);
  const std::size_t dim = std::max({data.train.feature_dim, data.validation.feature_dim, data.test.feature_dim});
  for (Dataset* split : {&data.train, &data.validation, &data.test}) {
    split->feature_dim = dim;
    for (auto& query : split->queries) {
      for (auto& doc : query.documents) doc.features.resize(dim, 0.0);
    }
  }
  const auto scaler = MinMaxScaler::fit(data.train);
  scaler.apply(data.train);
  scaler.apply(data.validation);
  scaler.apply(data.test);
  return data;
}

RankingPolicy initial_policy(const ExperimentConfig& config, std::size_t feature_dim, std::uint64_t seed) {
  RankingPolicy policy;
  policy.scorer = config.scorer == ScorerKind::linear ? Scorer::linear(feature_dim)
                                                      : Scorer::two_layer(feature_dim, config.hidden_dim);
  policy.scorer.initialize_uniform(seed);
  policy.top_k = config.top_k;
  policy.temperature = config.temperature;
  return policy;
}

RankingPolicy click_training_init(const ExperimentConfig& config, const RankingPolicy& logging,
                                  std::size_t feature_dim) {
  if (config.init_from_logging) return logging;
  return initial_policy(config, feature_dim, mix_seed(config.seed, 0x1417));
}

RankingPolicy make_logging_policy(const ExperimentConfig& config, const DatasetSplits& data) {
  if (config.logging_source == "load") {
    std::ifstream in(config.logging_path);
    if (!in) throw ConfigError("cannot open logging policy " + config.logging_path.string());
    RankingPolicy policy;
    policy.scorer = Scorer::load(in);
    if (policy.scorer.feature_dim() != data.train.feature_dim) {
      throw ConfigError("logging policy feature dimension does not match the dataset");
    }
    policy.top_k = config.top_k;
    policy.temperature = config.temperature;
    return policy;
  }
  const auto subset = subsample_queries(data.train, config.logging_fraction, mix_seed(config.seed, 0x106));
  TrainConfig train = config.logging_train;
  train.seed = mix_seed(config.seed, 0x107);
  const auto init = initial_policy(config, data.train.feature_dim, mix_seed(config.seed, 0x108));
  return train_skyline(init, subset, data.validation, train, config.bias).final_policy;
}

const char* const kResultHeader =
    "method,n,run_index,ndcg_expected,ndcg_greedy,logging_ndcg,skyline_ndcg,objective_final,status";
const char* const kSummaryHeader = "method,n,runs,mean,p10,p90";
const char* const kTimingHeader = "method,n,run_index,wall_time_seconds";

void write_result_rows(std::ostream& out, const std::vector<ResultRow>& rows, bool header) {
  if (header) out << kResultHeader << '\n';
  for (const auto& row : rows) {
    out << row.method << ',' << row.n << ',' << row.run_index << ',' << format_double(row.ndcg_expected) << ','
        << format_double(row.ndcg_greedy) << ',' << format_double(row.logging_ndcg) << ','
        << format_double(row.skyline_ndcg) << ',' << format_double(row.objective_final) << ',' << row.status
        << '\n';
  }
}

std::vector<ResultRow> read_result_rows(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == kResultHeader) continue;
    std::vector<std::string> fields;
    std::stringstream stream(line);
    std::string field;
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (fields.size() != 9) throw ParseError("result row needs 9 fields", line_no);
    ResultRow row;
    row.method = fields[0];
    try {
      row.n = std::stoull(fields[1]);
      row.run_index = std::stoull(fields[2]);
      row.ndcg_expected = std::stod(fields[3]);
      row.ndcg_greedy = std::stod(fields[4]);
      row.logging_ndcg = std::stod(fields[5]);
      row.skyline_ndcg = std::stod(fields[6]);
      row.objective_final = std::stod(fields[7]);
    } catch (const std::exception&) {
      throw ParseError("malformed result row", line_no);
    }
    row.status = fields[8];
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_rows(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& row : rows) {
    out << row.method << ',' << row.n << ',' << row.runs << ',' << format_double(row.mean) << ','
        << format_double(row.p10) << ',' << format_double(row.p90) << '\n';
  }
}

void write_timing_rows(std::ostream& out, const std::vector<TimingRow>& rows, bool header) {
  if (header) out << kTimingHeader << '\n';
  for (const auto& row : rows) {
    out << row.method << ',' << row.n << ',' << row.run_index << ',' << format_double(row.wall_time_seconds) << '\n';
  }
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("percentile of an empty set");
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("percentile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double position = p * static_cast<double>(values.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(position));
  const auto upper = std::min(values.size() - 1, lower + 1);
  const double fraction = position - static_cast<double>(lower);
  return values[lower] + fraction * (values[upper] - values[lower]);
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<std::pair<std::string, std::size_t>> order;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;
  for (const auto& row : rows) {
    if (row.status != "ok") continue;
    const auto key = std::make_pair(row.method, row.n);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(row.ndcg_expected);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    auto values = groups[key];
    std::sort(values.begin(), values.end());
    SummaryRow row;
    row.method = key.first;
    row.n = key.second;
    row.runs = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    row.p10 = percentile(values, 0.10);
    row.p90 = percentile(values, 0.90);
    out.push_back(row);
  }
  return out;
}

namespace {

std::uint64_t eval_seed(const ExperimentConfig& config) { return mix_seed(config.seed, 0xe7a1); }

std::uint64_t cell_seed(const ExperimentConfig& config, std::size_t n, std::size_t run) {
  return mix_seed(mix_seed(config.seed, n), run);
}

std::string sanitize(std::string text) {
  for (auto& c : text) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return text;
}

}  // namespace

ExperimentContext prepare_experiment(const ExperimentConfig& config) {
  ExperimentContext context;
  context.config = config;
  context.data = load_datasets(config);
  validate(context.data.train);
  validate(context.data.validation);
  validate(context.data.test);
  context.logging = make_logging_policy(config, context.data);

  TrainConfig skyline = config.skyline_train;
  skyline.seed = mix_seed(config.seed, 0x5c1);
  const auto init = initial_policy(config, context.data.train.feature_dim, mix_seed(config.seed, 0x5c2));
  context.skyline = train_skyline(init, context.data.train, context.data.validation, skyline, config.bias).final_policy;

  const auto& test = context.data.test;
  const auto seed = eval_seed(config);
  context.logging_ndcg = ndcg_at_k(context.logging, test, config.eval_k, EvalMode::expected, config.eval_samples, seed).ndcg_at_k;
  context.logging_greedy = ndcg_at_k(context.logging, test, config.eval_k, EvalMode::greedy).ndcg_at_k;
  context.skyline_ndcg = ndcg_at_k(context.skyline, test, config.eval_k, EvalMode::expected, config.eval_samples, seed).ndcg_at_k;
  context.skyline_greedy = ndcg_at_k(context.skyline, test, config.eval_k, EvalMode::greedy).ndcg_at_k;
  return context;
}

CellOutput run_cell(const ExperimentContext& context, std::size_t n, std::size_t run_index,
                    const std::vector<std::string>& skip) {
  const auto& config = context.config;
  const auto seed = cell_seed(config, n, run_index);
  CellOutput output;
  auto base_row = [&](const std::string& method) {
    ResultRow row;
    row.method = method;
    row.n = n;
    row.run_index = run_index;
    row.logging_ndcg = context.logging_ndcg;
    row.skyline_ndcg = context.skyline_ndcg;
    return row;
  };

  std::optional<ClickLog> log;
  std::optional<ClickLog> validation_log;
  std::string simulation_error;
  try {
    SimulationOptions options;
    options.adversarial = config.adversarial;
    options.seed = mix_seed(seed, 1);
    options.keep_sessions = false;
    log = simulate_sessions(context.logging, context.data.train, config.bias, n, options);
    const auto n_validation = static_cast<std::size_t>(
        std::max(1.0, std::ceil(config.validation_fraction * static_cast<double>(n) - 1e-9)));
    options.seed = mix_seed(seed, 2);
    validation_log = simulate_sessions(context.logging, context.data.validation, config.bias, n_validation, options);
  } catch (const std::exception& e) {
    simulation_error = sanitize(std::string("error: ") + e.what());
  }

  for (const auto& method : config.methods) {
    if (std::find(skip.begin(), skip.end(), method.name) != skip.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    ResultRow row = base_row(method.name);
    try {
      if (!simulation_error.empty()) throw std::runtime_error(simulation_error);
      TrainConfig train = config.train;
      train.objective = method.objective;
      train.seed = mix_seed(seed, 3);
      const auto init = click_training_init(config, context.logging, context.data.train.feature_dim);
      const auto report = train_policy(init, context.data.train, *log, context.data.validation,
                                       *validation_log, train, config.bias);
      row.ndcg_expected = ndcg_at_k(report.final_policy, context.data.test, config.eval_k, EvalMode::expected,
                                    config.eval_samples, eval_seed(config)).ndcg_at_k;
      row.ndcg_greedy = ndcg_at_k(report.final_policy, context.data.test, config.eval_k, EvalMode::greedy).ndcg_at_k;
      row.objective_final = report.best_epoch > 0 ? report.objective_trace[report.best_epoch - 1]
                                                  : std::numeric_limits<double>::quiet_NaN();
    } catch (const std::exception& e) {
      const auto nan = std::numeric_limits<double>::quiet_NaN();
      row.ndcg_expected = row.ndcg_greedy = row.objective_final = nan;
      const std::string what = e.what();
      row.status = what.rfind("error: ", 0) == 0 ? sanitize(what) : sanitize("error: " + what);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    output.rows.push_back(row);
    output.timings.push_back(TimingRow{method.name, n, run_index, seconds});
  }
  return output;
}

namespace {

std::filesystem::path row_file(const std::filesystem::path& dir, const std::string& method, std::size_t n,
                               std::size_t run) {
  return dir / "rows" / (method + "__n" + std::to_string(n) + "__r" + std::to_string(run) + ".csv");
}

std::filesystem::path timing_file(const std::filesystem::path& dir, const std::string& method, std::size_t n,
                                  std::size_t run) {
  return dir / "rows" / (method + "__n" + std::to_string(n) + "__r" + std::to_string(run) + ".time");
}

template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer writer) {
  auto temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + temp.string());
    writer(out);
    if (!out) throw std::runtime_error("write failed for " + temp.string());
  }
  std::filesystem::rename(temp, path);
}

std::vector<ResultRow> reference_rows(const ExperimentContext& context) {
  ResultRow logging;
  logging.method = "logging";
  logging.ndcg_expected = context.logging_ndcg;
  logging.ndcg_greedy = context.logging_greedy;
  logging.logging_ndcg = context.logging_ndcg;
  logging.skyline_ndcg = context.skyline_ndcg;
  logging.objective_final = std::numeric_limits<double>::quiet_NaN();
  ResultRow skyline = logging;
  skyline.method = "skyline";
  skyline.ndcg_expected = context.skyline_ndcg;
  skyline.ndcg_greedy = context.skyline_greedy;
  return {logging, skyline};
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, unsigned workers, std::ostream* progress) {
  const auto& dir = config.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir / "rows", ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  {
    const auto probe = dir / ".write_probe";
    std::ofstream out(probe);
    if (!out) throw ConfigError("output directory " + dir.string() + " is not writable");
    out.close();
    std::filesystem::remove(probe, ec);
  }

  const auto context = prepare_experiment(config);
  if (progress) {
    *progress << "logging ndcg " << format_double(context.logging_ndcg) << ", skyline ndcg "
              << format_double(context.skyline_ndcg) << std::endl;
  }

  struct Task {
    std::size_t n;
    std::size_t run;
    std::vector<std::string> skip;
  };
  std::vector<Task> tasks;
  for (auto n : config.n_grid) {
    for (std::size_t run = 0; run < config.n_runs; ++run) {
      Task task{n, run, {}};
      for (const auto& method : config.methods) {
        if (std::filesystem::exists(row_file(dir, method.name, n, run))) task.skip.push_back(method.name);
      }
      if (task.skip.size() < config.methods.size()) tasks.push_back(std::move(task));
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= tasks.size()) return;
      const auto& task = tasks[index];
      try {
        const auto output = run_cell(context, task.n, task.run, task.skip);
        for (std::size_t i = 0; i < output.rows.size(); ++i) {
          const auto& row = output.rows[i];
          write_atomically(timing_file(dir, row.method, task.n, task.run),
                           [&](std::ostream& out) { write_timing_rows(out, {output.timings[i]}, false); });
          write_atomically(row_file(dir, row.method, task.n, task.run),
                           [&](std::ostream& out) { write_result_rows(out, {row}, false); });
        }
        if (progress) {
          std::lock_guard lock(mutex);
          *progress << "n=" << task.n << " run=" << task.run;
          for (const auto& row : output.rows) *progress << ' ' << row.method << '=' << format_double(row.ndcg_expected);
          *progress << std::endl;
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, tasks.size()))));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < count; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ResultRow> rows = reference_rows(context);
  std::vector<TimingRow> timings;
  for (const auto& method : config.methods) {
    for (auto n : config.n_grid) {
      for (std::size_t run = 0; run < config.n_runs; ++run) {
        std::ifstream in(row_file(dir, method.name, n, run));
        auto cell_rows = read_result_rows(in);
        rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
        std::ifstream tin(timing_file(dir, method.name, n, run));
        std::string line;
        if (std::getline(tin, line)) {
          TimingRow timing{method.name, n, run, 0.0};
          const auto comma = line.rfind(',');
          if (comma != std::string::npos) timing.wall_time_seconds = std::strtod(line.c_str() + comma + 1, nullptr);
          timings.push_back(timing);
        }
      }
    }
  }
  write_atomically(dir / "results.csv", [&](std::ostream& out) { write_result_rows(out, rows); });
  write_atomically(dir / "summary.csv", [&](std::ostream& out) { write_summary_rows(out, summarize(rows)); });
  write_atomically(dir / "timings.csv", [&](std::ostream& out) { write_timing_rows(out, timings); });
  return rows;
}

std::vector<SummaryRow> summarize_directory(const std::filesystem::path& output_dir) {
  std::ifstream in(output_dir / "results.csv");
  if (!in) throw ConfigError("cannot read " + (output_dir / "results.csv").string());
  const auto summary = summarize(read_result_rows(in));
  write_atomically(output_dir / "summary.csv", [&](std::ostream& out) { write_summary_rows(out, summary); });
  return summary;
}

}  // namespace saferank
