// Command-line front end: data generation, logging-policy training, click simulation,
// policy training and evaluation, and the full experiment sweep.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "saferank/errors.hpp"
#include "saferank/evaluate.hpp"
#include "saferank/experiment.hpp"
#include "saferank/rng.hpp"
#include "saferank/simulate.hpp"
#include "saferank/train.hpp"

namespace fs = std::filesystem;
using namespace saferank;

namespace {

struct CommonOptions {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
};

void add_common(CLI::App* app, CommonOptions& options, bool config_required) {
  auto* opt = app->add_option("--config", options.config, "Experiment config file (key = value lines)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  app->add_option("--output", options.output, "Output directory");
  app->add_option("--seed", options.seed, "Master seed override");
  app->add_option("--workers", options.workers, "Worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig load_config(const CommonOptions& options) {
  ConfigFile file = options.config.empty() ? ConfigFile{} : ConfigFile::load(options.config);
  if (options.seed) file.set("experiment.seed", std::to_string(*options.seed));
  if (!options.output.empty()) file.set("experiment.output_dir", options.output);
  return make_experiment_config(file);
}

fs::path prepare_output(const CommonOptions& options, const ExperimentConfig& config) {
  const fs::path dir = options.output.empty() ? config.output_dir : fs::path(options.output);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string fmt(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

const Dataset& pick_split(const DatasetSplits& data, const std::string& name) {
  switch (parse_split(name)) {
    case Split::train: return data.train;
    case Split::validation: return data.validation;
    case Split::test: return data.test;
  }
  return data.test;
}

RankingPolicy load_policy(const ExperimentConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy file " + path.string());
  RankingPolicy policy;
  policy.scorer = Scorer::load(in);
  policy.top_k = config.top_k;
  policy.temperature = config.temperature;
  return policy;
}

int generate_data(const CommonOptions& options) {
  auto config = load_config(options);
  if (options.seed) config.synthetic.seed = *options.seed;
  const auto dir = prepare_output(options, config);
  const auto data = load_datasets(config);
  save_ltr_dataset(dir / "train.txt", data.train);
  save_ltr_dataset(dir / "validation.txt", data.validation);
  save_ltr_dataset(dir / "test.txt", data.test);
  std::cout << "wrote " << data.train.queries.size() << '/' << data.validation.queries.size() << '/'
            << data.test.queries.size() << " queries to " << dir.string() << '\n';
  return 0;
}

int train_logging(const CommonOptions& options) {
  const auto config = load_config(options);
  const auto dir = prepare_output(options, config);
  const auto data = load_datasets(config);
  const auto policy = make_logging_policy(config, data);
  auto out = open_output(dir / "logging.scorer");
  policy.scorer.save(out);
  const auto report = ndcg_at_k(policy, data.test, config.eval_k, EvalMode::expected, config.eval_samples,
                                mix_seed(config.seed, 0xe7a1));
  std::cout << "logging policy test ndcg@" << config.eval_k << " " << fmt(report.ndcg_at_k) << '\n';
  return 0;
}

RankingPolicy logging_policy_for(const ExperimentConfig& config, const DatasetSplits& data) {
  return make_logging_policy(config, data);
}

int simulate(const CommonOptions& options) {
  const auto config = load_config(options);
  const auto dir = prepare_output(options, config);
  const auto data = load_datasets(config);
  const auto policy = logging_policy_for(config, data);
  const auto& split = pick_split(data, config.raw.get("simulate.split", "train"));
  SimulationOptions sim;
  sim.adversarial = config.adversarial;
  sim.seed = mix_seed(config.seed, 0x5e55);
  sim.workers = options.workers;
  const auto log = simulate_sessions(policy, split, config.bias, config.raw.get_size("simulate.sessions", 1000), sim);
  auto out = open_output(dir / "clicks.log");
  write_click_log(out, log, split);
  std::cout << "simulated " << log.size() << " sessions over " << log.logged_queries().size() << " queries\n";
  return 0;
}

int train(const CommonOptions& options) {
  const auto config = load_config(options);
  const auto dir = prepare_output(options, config);
  const auto data = load_datasets(config);
  const auto logging = logging_policy_for(config, data);
  const auto method = resolve_method(config.raw, config.raw.get("train.method", "dr"));

  ClickLog log;
  ClickLog validation_log;
  if (config.raw.has("train.click_log")) {
    std::ifstream in(config.raw.get("train.click_log", ""));
    if (!in) throw ConfigError("cannot open train.click_log");
    log = read_click_log(in, data.train);
    std::ifstream vin(config.raw.get("train.validation_click_log", ""));
    if (!vin) throw ConfigError("train.click_log needs a readable train.validation_click_log");
    validation_log = read_click_log(vin, data.validation);
  } else {
    const auto n = config.raw.get_size("train.sessions", 10000);
    SimulationOptions sim;
    sim.adversarial = config.adversarial;
    sim.workers = options.workers;
    sim.seed = mix_seed(config.seed, 1);
    log = simulate_sessions(logging, data.train, config.bias, n, sim);
    sim.seed = mix_seed(config.seed, 2);
    const auto n_val = static_cast<std::size_t>(std::max(1.0, std::ceil(config.validation_fraction * n - 1e-9)));
    validation_log = simulate_sessions(logging, data.validation, config.bias, n_val, sim);
  }
  TrainConfig train_config = config.train;
  train_config.objective = method.objective;
  train_config.seed = mix_seed(config.seed, 3);
  const auto init = click_training_init(config, logging, data.train.feature_dim);
  const auto report = train_policy(init, data.train, log, data.validation, validation_log, train_config, config.bias);

  auto out = open_output(dir / "policy.scorer");
  report.final_policy.scorer.save(out);
  auto trace = open_output(dir / "trace.csv");
  trace << "epoch,objective,validation\n";
  for (std::size_t e = 0; e < report.objective_trace.size(); ++e) {
    trace << e + 1 << ',' << report.objective_trace[e] << ',' << report.validation_trace[e] << '\n';
  }
  const auto eval = ndcg_at_k(report.final_policy, data.test, config.eval_k, EvalMode::expected,
                              config.eval_samples, mix_seed(config.seed, 0xe7a1));
  std::cout << method.name << ": epochs " << report.epochs_run << ", best epoch " << report.best_epoch
            << ", test ndcg@" << config.eval_k << " " << fmt(eval.ndcg_at_k) << '\n';
  return 0;
}

int evaluate(const CommonOptions& options) {
  const auto config = load_config(options);
  const auto dir = prepare_output(options, config);
  const auto data = load_datasets(config);
  if (!config.raw.has("evaluate.policy")) throw ConfigError("evaluate needs evaluate.policy");
  const auto policy = load_policy(config, config.raw.get("evaluate.policy", ""));
  const auto& split = pick_split(data, config.raw.get("evaluate.split", "test"));
  const auto expected = ndcg_at_k(policy, split, config.eval_k, EvalMode::expected, config.eval_samples,
                                  mix_seed(config.seed, 0xe7a1));
  const auto greedy = ndcg_at_k(policy, split, config.eval_k, EvalMode::greedy);
  auto out = open_output(dir / "eval.csv");
  out << "query_id,ndcg_expected,ndcg_greedy\n";
  for (std::size_t q = 0; q < split.queries.size(); ++q) {
    out << split.queries[q].query_id << ',' << expected.per_query[q] << ',' << greedy.per_query[q] << '\n';
  }
  std::cout << "ndcg@" << config.eval_k << " expected " << fmt(expected.ndcg_at_k) << " greedy "
            << fmt(greedy.ndcg_at_k) << '\n';
  return 0;
}

int experiment(const CommonOptions& options) {
  const auto config = load_config(options);
  const auto rows = run_experiment(config, options.workers, &std::cerr);
  std::cout << "wrote " << rows.size() << " rows to " << (config.output_dir / "results.csv").string() << '\n';
  return 0;
}

int summarize_cmd(const CommonOptions& options) {
  if (options.output.empty()) throw ConfigError("summarize needs --output <dir>");
  const auto summary = summarize_directory(options.output);
  write_summary_rows(std::cout, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual learning to rank from simulated clicks"};
  app.require_subcommand(1);
  CommonOptions options;

  struct Verb {
    const char* name;
    const char* help;
    bool config_required;
    int (*run)(const CommonOptions&);
  };
  const Verb verbs[] = {
      {"generate-data", "Write the synthetic LTR splits", false, generate_data},
      {"train-logging", "Train the production ranker on a label fraction", false, train_logging},
      {"simulate", "Simulate a click log from the logging policy", false, simulate},
      {"train", "Train a policy from clicks with one method", false, train},
      {"evaluate", "Evaluate a saved policy with NDCG@k", true, evaluate},
      {"experiment", "Run the full sweep and write CSV tables", true, experiment},
      {"summarize", "Rebuild summary.csv from results.csv", false, summarize_cmd},
  };
  int (*selected)(const CommonOptions&) = nullptr;
  for (const auto& verb : verbs) {
    auto* sub = app.add_subcommand(verb.name, verb.help);
    add_common(sub, options, verb.config_required);
    sub->callback([&selected, run = verb.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return selected(options);
  } catch (const std::exception& e) {
    std::cerr << "saferank: " << e.what() << '\n';
    return 1;
  }
}
