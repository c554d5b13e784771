#pragma once

#include <string>
#include <vector>

#include "batchens/data.hpp"
#include "batchens/forecast.hpp"
#include "batchens/metrics.hpp"

namespace batchens {

// Where a run's data comes from: a bundled/synthetic generator or CSV files.
struct DatasetSpec {
  std::string kind = "ackley_regression";  // ackley_regression | ackley_classification |
                                           // ar1 | csv | series_csv
  std::string name;                        // label for reports; defaults to kind
  std::string csv, manifest;               // kind == csv
  std::string column = "value";            // kind == series_csv
  int n = 2000, d = 10;                    // generator sizes
  double ar_phi = 0.8, ar_const = 0.05, ar_sigma = 0.05;
  double test_fraction = 0.2;

  std::string label() const { return name.empty() ? kind : name; }
  bool timeseries() const { return kind == "ar1" || kind == "series_csv"; }
};

struct ExperimentConfig {
  std::string name = "run";
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  ForecastConfig forecast;
  bool shift = false;
  double shift_q = 0.025;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs/run";
  int jobs = 1;
  bool save_checkpoints = true;

  void validate() const;
  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
};

// Everything one (config, seed) run produces.
struct SeedOutcome {
  MetricsReport report;
  TrainResult training;
};

// Builds the seed's dataset, trains, and evaluates the full metric suite.
// Pure apart from CPU time: no files are touched.
SeedOutcome run_single_seed(const ExperimentConfig& cfg, uint64_t seed, Model* model_out = nullptr);

// Evaluation halves, reusable against loaded checkpoints.
MetricsReport evaluate_tabular(Model& model, const TabularDataset& ds, Rng& rng);
MetricsReport evaluate_series(Model& model, const SeriesDataset& ds, const ForecastConfig& fcfg,
                              Rng& rng);

// Deterministic rebuild of the dataset a given seed trained against.
TabularDataset build_experiment_tabular(const ExperimentConfig& cfg, uint64_t seed);
SeriesDataset build_experiment_series(const ExperimentConfig& cfg, uint64_t seed);

// Trains/evaluates every seed (bounded worker pool), then writes the run
// directory: config.json, metrics_seed_<s>.json, summary.csv, losses.csv,
// calibration.svg, selective.svg and per-seed checkpoints.
std::vector<SeedOutcome> run_experiment(const ExperimentConfig& cfg);

// Ablation suites. adapters: all 8 adapter subsets; gates: the 7 gate
// masks; layers: ensemble depth 1..N on the configured stack; init:
// random-sign vs orthogonal init with each regularization strength.
std::vector<std::string> ablation_variants(const std::string& suite,
                                           const ExperimentConfig& base);
void run_ablation(const std::string& suite, const ExperimentConfig& base);

// Merges completed run directories into combined CSV + markdown tables;
// runs that differ only in the shift flag get a delta (shift - id) row.
void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// mean and standard error (sample sd / sqrt(n)) helpers for summaries.
struct MeanSe {
  double mean = 0.0, se = 0.0;
};
MeanSe mean_se(const std::vector<double>& values);

}  // namespace batchens
