#pragma once

#include <string>
#include <vector>

#include "batchens/models.hpp"
#include "batchens/trainer.hpp"

namespace batchens {

// Parsed CSV: header row plus string cells; "" marks a missing value.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 when absent
};

RawTable read_csv(const std::string& path);
RawTable parse_csv(const std::string& text, const std::string& origin = "<memory>");

// Names the target column and which feature columns are categorical.
struct DatasetManifest {
  std::string name;
  std::string task;  // "regression" | "classification" | "timeseries"
  std::string target;
  std::vector<std::string> categorical;

  static DatasetManifest from_json_file(const std::string& path);
  std::string to_json_string() const;
};

// Encoded, imputed, min-max scaled feature matrix with split indices.
// Features are scaled to [0,1] by the training split; test rows reuse the
// training parameters and may fall outside [0,1]. Regression targets are
// scaled the same way.
struct TabularDataset {
  Task task = Task::regression;
  Tensor X;                    // n x d encoded and scaled
  std::vector<double> y_reg;   // scaled targets (regression)
  std::vector<int> y_cls;      // class ids (classification)
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;  // encoded columns
  std::vector<bool> numeric_feature;       // per encoded column
  std::vector<int> train_idx, test_idx;
  std::vector<double> feat_min, feat_max;  // train-split scaling parameters
  double y_min = 0.0, y_max = 1.0;

  int n() const { return X.rows(); }
  int d() const { return X.cols(); }
  double unscale_target(double v) const { return y_min + v * (y_max - y_min); }
};

Tensor gather_matrix(const Tensor& X, const std::vector<int>& idx);
std::vector<double> gather_values(const std::vector<double>& v, const std::vector<int>& idx);
std::vector<int> gather_labels(const std::vector<int>& v, const std::vector<int>& idx);

// One-hot encodes categoricals (with a dedicated missing-value category),
// imputes missing numerics with train means, min-max scales from the train
// split, and draws a shuffled split with the given test fraction.
TabularDataset load_and_scale(const RawTable& table, const DatasetManifest& manifest, Rng& rng,
                              double test_fraction = 0.2);
TabularDataset load_and_scale(const std::string& csv_path, const std::string& manifest_path,
                              Rng& rng, double test_fraction = 0.2);

// Tail-exclusion split parameters: a sample is out-of-distribution when any
// selected feature falls outside its train-derived [q, 1-q] quantiles.
struct ShiftSpec {
  double q = 0.025;
  int d_selected = 2;
  double p_tail = 0.0;      // 1 - (1-2q)^d_selected
  double base_split = 0.0;  // (0.2 - p_tail) / (1 - p_tail)
  std::vector<int> feature_indices;
  std::vector<std::string> feature_names;
  std::vector<double> lower_bound, upper_bound;  // raw-value quantile bounds
  long n_train = 0, n_test = 0, n_shifted = 0;

  std::string to_json_string() const;
};

double shift_p_tail(double q, int d_selected);
double shift_base_split(double q, int d_selected);

// Builds the distribution-shift variant: fits a linear (regression) or
// logistic (classification) model on the standardized base split, selects
// the two most influential numeric features, and moves every tail sample
// into the test set. The returned train split holds no tail samples.
TabularDataset make_shift_split(const RawTable& table, const DatasetManifest& manifest, Rng& rng,
                                double q, ShiftSpec* spec_out = nullptr);

// Chronological univariate series, scaled to [0,1] by the training range.
struct SeriesDataset {
  std::vector<double> values;  // scaled
  int boundary = 0;            // first test index
  double y_min = 0.0, y_max = 1.0;

  double unscale(double v) const { return y_min + v * (y_max - y_min); }
};

SeriesDataset load_series(const std::vector<double>& raw, double train_fraction = 0.8);
SeriesDataset load_series_csv(const std::string& csv_path, const std::string& column);

// All maximal stride-1 (context, target) windows over [first, last).
SeriesWindows window_series(const std::vector<double>& values, int first, int last, int L, int H);

// Training windows live entirely before the boundary; test windows have
// every target index at or past it (contexts may reach back).
SeriesWindows train_windows(const SeriesDataset& ds, int L, int H);
SeriesWindows test_windows(const SeriesDataset& ds, int L, int H);

// Synthetic benchmark: the d-dimensional multimodal test function
//   f(x) = -a exp(-b sqrt(mean x^2)) - exp(mean cos(c x)) + a
// with heteroscedastic noise growing in the normalized input radius.
struct AckleyConfig {
  int n = 2000;
  int d = 10;
  double a = 20.0, b = 0.2, c = 2.0 * 3.14159265358979323846;
  double cube = 2.0;  // inputs uniform on [-cube, cube]^d
  double sigma_min = 0.1, sigma_max = 1.0;
};

double ackley_value(const std::vector<double>& x, const AckleyConfig& cfg = {});
double ackley_noise_sigma(const std::vector<double>& x, const AckleyConfig& cfg = {});

struct SyntheticTabular {
  Tensor X;                  // raw inputs
  std::vector<double> y;     // regression targets
  std::vector<int> labels;   // classification labels
};

SyntheticTabular gen_ackley(const AckleyConfig& cfg, Task task, Rng& rng);

// AR(1) series: x[t+1] = c + phi * x[t] + sigma * eps.
std::vector<double> gen_ar1(int n, double phi, double c, double sigma, Rng& rng);

// Wraps already-generated arrays in the standard split/scale pipeline.
TabularDataset dataset_from_arrays(const Tensor& X_raw, const std::vector<double>* y_reg,
                                   const std::vector<int>* y_cls, Rng& rng,
                                   double test_fraction = 0.2);

// CSV emission for the synthetic generators.
void write_tabular_csv(const std::string& path, const Tensor& X, const std::vector<double>* y_reg,
                       const std::vector<int>* y_cls);
void write_series_csv(const std::string& path, const std::vector<double>& values);

}  // namespace batchens
