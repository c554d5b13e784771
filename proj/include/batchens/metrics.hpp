#pragma once

#include <string>
#include <vector>

#include "batchens/models.hpp"

namespace batchens {

// Nominal central-interval coverage levels, evenly spaced over
// [0.025, 0.975] in steps of 0.025 by default (J = 39).
struct CoverageGrid {
  std::vector<double> levels;

  static CoverageGrid make_default();
  static CoverageGrid make(double lo, double hi, double step);
  void validate() const;
  size_t size() const { return levels.size(); }
};

// Inverse standard normal CDF (rational approximation, ~1e-9 absolute).
double normal_quantile(double p);

double rmse(const std::vector<double>& predicted, const std::vector<double>& actual);

// Gaussian log-score of the aggregated predictive; include_constant adds
// the (1/2)log(2*pi) term the training objective omits.
double regression_nll(const std::vector<double>& mu, const std::vector<double>& variance,
                      const std::vector<double>& y, bool include_constant = true);

// Mean negative log of the averaged predicted probability of the truth.
double classification_nll(const std::vector<double>& probs, int num_classes,
                          const std::vector<int>& labels);

double accuracy(const std::vector<double>& probs, int num_classes,
                const std::vector<int>& labels);

// Mean over samples of the summed squared gap between the probability row
// and the one-hot truth.
double brier_score(const std::vector<double>& probs, int num_classes,
                   const std::vector<int>& labels);

// Confidence-binned |accuracy - confidence| gap, M uniform bins on [0,1];
// empty bins contribute zero.
double expected_calibration_error(const std::vector<double>& probs, int num_classes,
                                  const std::vector<int>& labels, int bins = 15);

// Fraction of targets inside the central interval mu +- z(gamma)*sigma at
// each nominal level of the grid.
std::vector<double> coverage_curve(const std::vector<double>& mu,
                                   const std::vector<double>& variance,
                                   const std::vector<double>& y, const CoverageGrid& grid);

struct CalibrationErrors {
  double rmsce = 0.0;
  double miscalibration_area = 0.0;
};

// Root-mean-square gap between empirical and nominal coverage, plus the
// trapezoidal integral of the absolute gap across the grid span.
CalibrationErrors rmsce_and_area(const std::vector<double>& empirical, const CoverageGrid& grid);

struct Decomposition {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

// Regression: aleatoric = mean member variance, epistemic = variance of
// member means; total is their sum and equals the aggregated variance.
Decomposition decompose_regression_sample(const std::vector<double>& member_mu,
                                          const std::vector<double>& member_var);
// Classification: total = entropy of the averaged row, aleatoric = mean
// member entropy, epistemic = their difference (>= 0 by Jensen).
Decomposition decompose_classification_sample(const std::vector<std::vector<double>>& member_probs);

// Sample-averaged decompositions of a predictive batch.
Decomposition decompose_regression(const PredictiveDistribution& pred);
Decomposition decompose_classification(const PredictiveDistribution& pred);

enum class SelectiveMetric { rmse, accuracy };

struct SelectiveCurve {
  std::vector<double> coverage;  // selection fractions, ending at 1.0
  std::vector<double> value;     // metric over the selected subset
};

// Metric over the ceil(gamma*N) most-certain samples per level, ties broken
// by sample index. per_sample holds squared errors (rmse) or 0/1
// correctness (accuracy).
SelectiveCurve selective_curve(const std::vector<double>& per_sample,
                               const std::vector<double>& uncertainty, SelectiveMetric kind,
                               const std::vector<double>& levels);

std::vector<double> default_selective_levels();  // 0.05 .. 1.00 step 0.05

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Everything the evaluation of one trained run produces. NaN marks
// fields that do not apply to the task.
struct MetricsReport {
  std::string dataset, method, task;
  uint64_t seed = 0;
  long param_count = 0;
  double train_seconds = 0.0;

  double rmse = 0.0, nll = 0.0, nll_no_const = 0.0;
  double accuracy = 0.0, brier = 0.0, ece = 0.0;
  double rmsce = 0.0, miscalibration_area = 0.0;
  Decomposition decomposition;
  std::vector<double> cov_nominal, cov_empirical;
  SelectiveCurve selective;

  std::string to_json_string() const;
  static MetricsReport from_json_string(const std::string& text);
};

// Flat key,value rows; list-valued fields get one row per grid point.
std::string metrics_to_csv(const MetricsReport& r);

}  // namespace batchens
