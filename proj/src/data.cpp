#include "batchens/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "batchens/errors.hpp"

namespace batchens {

using nlohmann::json;

int RawTable::column_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool is_missing(const std::string& s) { return s.empty() || s == "?" || s == "NA" || s == "nan"; }

double parse_number(const std::string& s, const std::string& column, size_t row) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw DataError("row " + std::to_string(row) + ": cannot parse '" + s + "' in column " +
                    column);
  }
}

}  // namespace

RawTable parse_csv(const std::string& text, const std::string& origin) {
  RawTable t;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (t.columns.empty()) {
      t.columns = fields;
    } else {
      if (fields.size() != t.columns.size())
        throw DataError(origin + " row " + std::to_string(lineno) + ": " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(t.columns.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.columns.empty()) throw DataError(origin + ": no header row");
  return t;
}

RawTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path);
}

DatasetManifest DatasetManifest::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  json j = json::parse(in);
  DatasetManifest m;
  m.name = j.value("name", "dataset");
  m.task = j.at("task").get<std::string>();
  m.target = j.at("target").get<std::string>();
  m.categorical = j.value("categorical", std::vector<std::string>{});
  return m;
}

std::string DatasetManifest::to_json_string() const {
  json j{{"name", name}, {"task", task}, {"target", target}, {"categorical", categorical}};
  return j.dump(2);
}

Tensor gather_matrix(const Tensor& X, const std::vector<int>& idx) {
  Tensor out = Tensor::zeros(static_cast<int>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(X.values.data() + static_cast<size_t>(idx[i]) * X.cols(), X.cols(),
                out.values.data() + i * X.cols());
  return out;
}

std::vector<double> gather_values(const std::vector<double>& v, const std::vector<int>& idx) {
  std::vector<double> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& v, const std::vector<int>& idx) {
  std::vector<int> out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

namespace {

// Feature matrix before imputation/scaling: missing numerics are NaN,
// categoricals are one-hot with an extra missing-value column.
struct EncodedTable {
  Tensor X;  // raw values
  std::vector<std::string> feature_names;
  std::vector<bool> numeric_feature;
  std::vector<double> y_reg;  // raw targets
  std::vector<int> y_cls;
  std::vector<std::string> class_names;
  Task task;
};

EncodedTable encode(const RawTable& table, const DatasetManifest& manifest) {
  EncodedTable enc;
  enc.task = task_from_string(manifest.task == "timeseries" ? "regression" : manifest.task);
  const int target_col = table.column_index(manifest.target);
  if (target_col < 0) throw DataError("target column '" + manifest.target + "' not found");
  std::set<std::string> categorical(manifest.categorical.begin(), manifest.categorical.end());
  for (const auto& c : manifest.categorical)
    if (table.column_index(c) < 0) throw DataError("categorical column '" + c + "' not found");

  const size_t n = table.rows.size();
  if (n == 0) throw DataError("dataset has no rows");

  // column layout
  struct Col {
    int src;
    bool cat;
    std::vector<std::string> levels;  // categorical levels incl. missing
  };
  std::vector<Col> cols;
  for (size_t c = 0; c < table.columns.size(); ++c) {
    if (static_cast<int>(c) == target_col) continue;
    Col col{static_cast<int>(c), categorical.count(table.columns[c]) > 0, {}};
    if (col.cat) {
      std::set<std::string> levels;
      bool missing = false;
      for (const auto& row : table.rows) {
        if (is_missing(row[c]))
          missing = true;
        else
          levels.insert(row[c]);
      }
      col.levels.assign(levels.begin(), levels.end());
      if (missing) col.levels.push_back("<missing>");
    }
    cols.push_back(std::move(col));
  }

  int d = 0;
  for (const auto& col : cols) d += col.cat ? static_cast<int>(col.levels.size()) : 1;
  enc.X = Tensor::zeros(static_cast<int>(n), d);
  for (const auto& col : cols) {
    if (col.cat) {
      for (const auto& level : col.levels) {
        enc.feature_names.push_back(table.columns[col.src] + "=" + level);
        enc.numeric_feature.push_back(false);
      }
    } else {
      enc.feature_names.push_back(table.columns[col.src]);
      enc.numeric_feature.push_back(true);
    }
  }

  for (size_t i = 0; i < n; ++i) {
    int j = 0;
    for (const auto& col : cols) {
      const std::string& cell = table.rows[i][col.src];
      if (col.cat) {
        std::string key = is_missing(cell) ? "<missing>" : cell;
        for (size_t l = 0; l < col.levels.size(); ++l)
          enc.X.at(static_cast<int>(i), j + static_cast<int>(l)) = col.levels[l] == key ? 1.0 : 0.0;
        j += static_cast<int>(col.levels.size());
      } else {
        enc.X.at(static_cast<int>(i), j) =
            is_missing(cell) ? std::numeric_limits<double>::quiet_NaN()
                             : parse_number(cell, table.columns[col.src], i + 2);
        j += 1;
      }
    }
  }

  // targets
  if (enc.task == Task::classification) {
    std::set<std::string> classes;
    for (size_t i = 0; i < n; ++i) {
      if (is_missing(table.rows[i][target_col]))
        throw DataError("row " + std::to_string(i + 2) + ": missing target");
      classes.insert(table.rows[i][target_col]);
    }
    enc.class_names.assign(classes.begin(), classes.end());
    std::map<std::string, int> lookup;
    for (size_t c = 0; c < enc.class_names.size(); ++c) lookup[enc.class_names[c]] = static_cast<int>(c);
    for (size_t i = 0; i < n; ++i) enc.y_cls.push_back(lookup[table.rows[i][target_col]]);
  } else {
    for (size_t i = 0; i < n; ++i) {
      if (is_missing(table.rows[i][target_col]))
        throw DataError("row " + std::to_string(i + 2) + ": missing target");
      enc.y_reg.push_back(parse_number(table.rows[i][target_col], manifest.target, i + 2));
    }
  }
  return enc;
}

// Imputation and [0,1] scaling computed on the training rows only.
TabularDataset finish_dataset(EncodedTable enc, std::vector<int> train_idx,
                              std::vector<int> test_idx) {
  TabularDataset ds;
  ds.task = enc.task;
  ds.feature_names = std::move(enc.feature_names);
  ds.numeric_feature = std::move(enc.numeric_feature);
  ds.class_names = std::move(enc.class_names);
  ds.y_cls = std::move(enc.y_cls);
  ds.train_idx = std::move(train_idx);
  ds.test_idx = std::move(test_idx);
  ds.X = std::move(enc.X);
  const int d = ds.X.cols();

  // impute missing numerics with the train mean
  for (int j = 0; j < d; ++j) {
    if (!ds.numeric_feature[j]) continue;
    double sum = 0.0;
    long count = 0;
    for (int i : ds.train_idx) {
      const double v = ds.X.at(i, j);
      if (!std::isnan(v)) {
        sum += v;
        ++count;
      }
    }
    const double mean = count > 0 ? sum / count : 0.0;
    for (int i = 0; i < ds.X.rows(); ++i)
      if (std::isnan(ds.X.at(i, j))) ds.X.at(i, j) = mean;
  }

  // min-max scale from the train split; constant features map to zero
  ds.feat_min.assign(d, 0.0);
  ds.feat_max.assign(d, 1.0);
  for (int j = 0; j < d; ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i : ds.train_idx) {
      lo = std::min(lo, ds.X.at(i, j));
      hi = std::max(hi, ds.X.at(i, j));
    }
    ds.feat_min[j] = lo;
    ds.feat_max[j] = hi;
    const double range = hi - lo;
    for (int i = 0; i < ds.X.rows(); ++i) {
      double& v = ds.X.at(i, j);
      v = range > 0.0 ? (v - lo) / range : 0.0;
    }
  }

  if (ds.task != Task::classification) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i : ds.train_idx) {
      lo = std::min(lo, enc.y_reg[i]);
      hi = std::max(hi, enc.y_reg[i]);
    }
    ds.y_min = lo;
    ds.y_max = hi;
    const double range = hi - lo;
    ds.y_reg.resize(enc.y_reg.size());
    for (size_t i = 0; i < enc.y_reg.size(); ++i)
      ds.y_reg[i] = range > 0.0 ? (enc.y_reg[i] - lo) / range : 0.0;
    if (range <= 0.0) ds.y_max = ds.y_min + 1.0;
  }
  return ds;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  return idx;
}

}  // namespace

TabularDataset load_and_scale(const RawTable& table, const DatasetManifest& manifest, Rng& rng,
                              double test_fraction) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ConfigError("test_fraction must be inside (0,1)");
  EncodedTable enc = encode(table, manifest);
  const int n = enc.X.rows();
  Rng split_rng = rng.stream("split");
  std::vector<int> idx = shuffled_indices(n, split_rng);
  const int n_test = static_cast<int>(std::lround(n * test_fraction));
  std::vector<int> test(idx.begin(), idx.begin() + n_test);
  std::vector<int> train(idx.begin() + n_test, idx.end());
  if (train.empty() || test.empty()) throw DataError("split produced an empty train or test set");
  return finish_dataset(std::move(enc), std::move(train), std::move(test));
}

TabularDataset load_and_scale(const std::string& csv_path, const std::string& manifest_path,
                              Rng& rng, double test_fraction) {
  return load_and_scale(read_csv(csv_path), DatasetManifest::from_json_file(manifest_path), rng,
                        test_fraction);
}

double shift_p_tail(double q, int d_selected) {
  return 1.0 - std::pow(1.0 - 2.0 * q, d_selected);
}

double shift_base_split(double q, int d_selected) {
  const double p = shift_p_tail(q, d_selected);
  return (0.2 - p) / (1.0 - p);
}

std::string ShiftSpec::to_json_string() const {
  json j{{"q", q},
         {"d_selected", d_selected},
         {"p_tail", p_tail},
         {"base_split", base_split},
         {"feature_indices", feature_indices},
         {"feature_names", feature_names},
         {"lower_bound", lower_bound},
         {"upper_bound", upper_bound},
         {"n_train", n_train},
         {"n_test", n_test},
         {"n_shifted", n_shifted}};
  return j.dump(2);
}

namespace {

// Linearly interpolated order statistic.
double quantile_of_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ContractError("quantile of empty vector");
  if (sorted.size() == 1) return sorted[0];
  const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Ordinary least squares with intercept via Gaussian elimination.
std::vector<double> fit_ols(const Tensor& X, const std::vector<double>& y) {
  const int n = X.rows(), d = X.cols();
  const int m = d + 1;
  std::vector<double> ata(static_cast<size_t>(m) * m, 0.0), aty(m, 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(m);
    row[0] = 1.0;
    for (int j = 0; j < d; ++j) row[j + 1] = X.at(i, j);
    for (int a = 0; a < m; ++a) {
      aty[a] += row[a] * y[i];
      for (int b = 0; b < m; ++b) ata[static_cast<size_t>(a) * m + b] += row[a] * row[b];
    }
  }
  for (int a = 0; a < m; ++a) ata[static_cast<size_t>(a) * m + a] += 1e-8;  // ridge for rank safety
  // Gaussian elimination with partial pivoting
  std::vector<double> w = aty;
  for (int col = 0; col < m; ++col) {
    int pivot = col;
    for (int r = col + 1; r < m; ++r)
      if (std::abs(ata[static_cast<size_t>(r) * m + col]) >
          std::abs(ata[static_cast<size_t>(pivot) * m + col]))
        pivot = r;
    if (pivot != col) {
      for (int c = 0; c < m; ++c)
        std::swap(ata[static_cast<size_t>(col) * m + c], ata[static_cast<size_t>(pivot) * m + c]);
      std::swap(w[col], w[pivot]);
    }
    const double diag = ata[static_cast<size_t>(col) * m + col];
    if (std::abs(diag) < 1e-12) throw NumericError("ols: singular normal equations");
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = ata[static_cast<size_t>(r) * m + col] / diag;
      if (f == 0.0) continue;
      for (int c = col; c < m; ++c)
        ata[static_cast<size_t>(r) * m + c] -= f * ata[static_cast<size_t>(col) * m + c];
      w[r] -= f * w[col];
    }
  }
  for (int a = 0; a < m; ++a) w[a] /= ata[static_cast<size_t>(a) * m + a];
  return {w.begin() + 1, w.end()};  // drop the intercept
}

// Logistic regression driven by the shared Adam engine.
std::vector<double> fit_logistic(const Tensor& X, const std::vector<int>& y) {
  const int n = X.rows(), d = X.cols();
  Tensor w = Tensor::zeros(1, d + 1);
  w.set_requires_grad(true);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  AdamState state = AdamState::init({&w});
  for (int iter = 0; iter < 300; ++iter) {
    w.zero_grad();
    for (int i = 0; i < n; ++i) {
      double z = w.values[0];
      for (int j = 0; j < d; ++j) z += w.values[j + 1] * X.at(i, j);
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - (y[i] > 0 ? 1.0 : 0.0);
      w.grad[0] += err / n;
      for (int j = 0; j < d; ++j) w.grad[j + 1] += err * X.at(i, j) / n;
    }
    adam_step({&w}, state, cfg);
  }
  return {w.values.begin() + 1, w.values.end()};
}

}  // namespace

TabularDataset make_shift_split(const RawTable& table, const DatasetManifest& manifest, Rng& rng,
                                double q, ShiftSpec* spec_out) {
  if (q < 0.0 || q >= 0.5) throw ConfigError("shift quantile q must lie in [0, 0.5)");
  EncodedTable enc = encode(table, manifest);
  const int n = enc.X.rows();

  ShiftSpec spec;
  spec.q = q;
  spec.d_selected = 2;
  spec.p_tail = shift_p_tail(q, spec.d_selected);
  spec.base_split = shift_base_split(q, spec.d_selected);

  int numeric_count = 0;
  for (bool flag : enc.numeric_feature) numeric_count += flag ? 1 : 0;
  if (numeric_count < 2) throw ConfigError("shift split needs at least two numeric features");

  // base split
  Rng split_rng = rng.stream("split");
  std::vector<int> idx = shuffled_indices(n, split_rng);
  const int n_base_test = static_cast<int>(std::lround(n * spec.base_split));
  std::vector<int> base_test(idx.begin(), idx.begin() + n_base_test);
  std::vector<int> base_train(idx.begin() + n_base_test, idx.end());
  if (base_train.empty()) throw DataError("shift split: empty base training set");

  // impute a working copy with base-train means for the importance fit
  Tensor Xw = enc.X;
  const int d = Xw.cols();
  for (int j = 0; j < d; ++j) {
    if (!enc.numeric_feature[j]) continue;
    double sum = 0.0;
    long count = 0;
    for (int i : base_train)
      if (!std::isnan(Xw.at(i, j))) {
        sum += Xw.at(i, j);
        ++count;
      }
    const double mean = count > 0 ? sum / count : 0.0;
    for (int i = 0; i < n; ++i)
      if (std::isnan(Xw.at(i, j))) Xw.at(i, j) = mean;
  }

  // standardize by base-train statistics
  Tensor Xs = Tensor::zeros(static_cast<int>(base_train.size()), d);
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (int j = 0; j < d; ++j) {
    for (int i : base_train) mu[j] += Xw.at(i, j);
    mu[j] /= static_cast<double>(base_train.size());
    for (int i : base_train) sd[j] += (Xw.at(i, j) - mu[j]) * (Xw.at(i, j) - mu[j]);
    sd[j] = std::sqrt(sd[j] / static_cast<double>(base_train.size()));
    if (sd[j] <= 0.0) sd[j] = 1.0;
  }
  for (size_t r = 0; r < base_train.size(); ++r)
    for (int j = 0; j < d; ++j)
      Xs.at(static_cast<int>(r), j) = (Xw.at(base_train[r], j) - mu[j]) / sd[j];

  std::vector<double> coef;
  if (enc.task == Task::classification) {
    std::vector<int> yb(base_train.size());
    for (size_t r = 0; r < base_train.size(); ++r) yb[r] = enc.y_cls[base_train[r]];
    coef = fit_logistic(Xs, yb);
  } else {
    std::vector<double> yb(base_train.size());
    double ym = 0.0, ys = 0.0;
    for (size_t r = 0; r < base_train.size(); ++r) yb[r] = enc.y_reg[base_train[r]];
    for (double v : yb) ym += v;
    ym /= static_cast<double>(yb.size());
    for (double v : yb) ys += (v - ym) * (v - ym);
    ys = std::sqrt(ys / static_cast<double>(yb.size()));
    if (ys <= 0.0) ys = 1.0;
    for (double& v : yb) v = (v - ym) / ys;
    coef = fit_ols(Xs, yb);
  }

  // two most influential numeric features
  std::vector<int> numeric_cols;
  for (int j = 0; j < d; ++j)
    if (enc.numeric_feature[j]) numeric_cols.push_back(j);
  std::stable_sort(numeric_cols.begin(), numeric_cols.end(),
                   [&](int a, int b) { return std::abs(coef[a]) > std::abs(coef[b]); });
  spec.feature_indices = {numeric_cols[0], numeric_cols[1]};
  std::sort(spec.feature_indices.begin(), spec.feature_indices.end());
  for (int j : spec.feature_indices) spec.feature_names.push_back(enc.feature_names[j]);

  // tail bounds from the base-train raw values
  for (int j : spec.feature_indices) {
    std::vector<double> vals;
    vals.reserve(base_train.size());
    for (int i : base_train) vals.push_back(Xw.at(i, j));
    std::sort(vals.begin(), vals.end());
    spec.lower_bound.push_back(quantile_of_sorted(vals, q));
    spec.upper_bound.push_back(quantile_of_sorted(vals, 1.0 - q));
  }

  auto is_tail = [&](int row) {
    for (size_t f = 0; f < spec.feature_indices.size(); ++f) {
      const double v = Xw.at(row, spec.feature_indices[f]);
      if (v < spec.lower_bound[f] || v > spec.upper_bound[f]) return true;
    }
    return false;
  };

  std::vector<int> train, test = base_test;
  for (int i : base_train) {
    if (q > 0.0 && is_tail(i)) {
      test.push_back(i);
      spec.n_shifted += 1;
    } else {
      train.push_back(i);
    }
  }
  spec.n_train = static_cast<long>(train.size());
  spec.n_test = static_cast<long>(test.size());
  if (spec_out) *spec_out = spec;
  return finish_dataset(std::move(enc), std::move(train), std::move(test));
}

SeriesDataset load_series(const std::vector<double>& raw, double train_fraction) {
  if (raw.size() < 4) throw DataError("series too short");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ConfigError("train_fraction must be inside (0,1)");
  SeriesDataset ds;
  ds.boundary = static_cast<int>(std::floor(raw.size() * train_fraction));
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < ds.boundary; ++i) {
    lo = std::min(lo, raw[i]);
    hi = std::max(hi, raw[i]);
  }
  ds.y_min = lo;
  ds.y_max = hi > lo ? hi : lo + 1.0;
  ds.values.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) ds.values[i] = (raw[i] - ds.y_min) / (ds.y_max - ds.y_min);
  return ds;
}

SeriesDataset load_series_csv(const std::string& csv_path, const std::string& column) {
  RawTable t = read_csv(csv_path);
  const int col = t.column_index(column);
  if (col < 0) throw DataError("series column '" + column + "' not found in " + csv_path);
  std::vector<double> raw;
  raw.reserve(t.rows.size());
  for (size_t i = 0; i < t.rows.size(); ++i)
    raw.push_back(parse_number(t.rows[i][col], column, i + 2));
  return load_series(raw);
}

SeriesWindows window_series(const std::vector<double>& values, int first, int last, int L,
                            int H) {
  if (L < 1 || H < 1) throw ConfigError("window_series: L and H must be >= 1");
  if (first < 0 || last > static_cast<int>(values.size()) || last - first < L + H)
    throw DataError("window_series: range of " + std::to_string(last - first) +
                    " values cannot fit L+H=" + std::to_string(L + H));
  const int count = last - first - (L + H) + 1;
  SeriesWindows w;
  w.contexts = Tensor::zeros(count, L);
  w.targets = Tensor::zeros(count, H);
  for (int i = 0; i < count; ++i) {
    for (int t = 0; t < L; ++t) w.contexts.at(i, t) = values[first + i + t];
    for (int h = 0; h < H; ++h) w.targets.at(i, h) = values[first + i + L + h];
  }
  return w;
}

SeriesWindows train_windows(const SeriesDataset& ds, int L, int H) {
  return window_series(ds.values, 0, ds.boundary, L, H);
}

SeriesWindows test_windows(const SeriesDataset& ds, int L, int H) {
  // Contexts may reach into the training range; all targets follow the
  // boundary, so test windows start at boundary - L.
  const int first = ds.boundary - L;
  if (first < 0) throw DataError("test_windows: boundary precedes one full context");
  return window_series(ds.values, first, static_cast<int>(ds.values.size()), L, H);
}

double ackley_value(const std::vector<double>& x, const AckleyConfig& cfg) {
  const double d = static_cast<double>(x.size());
  double sumsq = 0.0, sumcos = 0.0;
  for (double v : x) {
    sumsq += v * v;
    sumcos += std::cos(cfg.c * v);
  }
  return -cfg.a * std::exp(-cfg.b * std::sqrt(sumsq / d)) - std::exp(sumcos / d) + cfg.a;
}

double ackley_noise_sigma(const std::vector<double>& x, const AckleyConfig& cfg) {
  double sumsq = 0.0;
  for (double v : x) sumsq += v * v;
  const double r_max = cfg.cube * std::sqrt(static_cast<double>(x.size()));
  const double r = std::sqrt(sumsq) / r_max;
  return cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * r;
}

SyntheticTabular gen_ackley(const AckleyConfig& cfg, Task task, Rng& rng) {
  if (cfg.n < 1) throw ConfigError("gen_ackley: n must be >= 1");
  SyntheticTabular out;
  out.X = Tensor::zeros(cfg.n, cfg.d);
  Rng xs = rng.stream("inputs");
  Rng noise = rng.stream("noise");
  std::vector<double> f(cfg.n), sigma(cfg.n);
  std::vector<double> point(cfg.d);
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < cfg.d; ++j) {
      point[j] = xs.uniform(-cfg.cube, cfg.cube);
      out.X.at(i, j) = point[j];
    }
    f[i] = ackley_value(point, cfg);
    sigma[i] = ackley_noise_sigma(point, cfg);
  }
  if (task == Task::classification) {
    std::vector<double> sorted = f;
    std::sort(sorted.begin(), sorted.end());
    const double median = quantile_of_sorted(sorted, 0.5);
    out.labels.resize(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
      const double score = f[i] - median + sigma[i] * noise.normal();
      out.labels[i] = score > 0.0 ? 1 : 0;
    }
  } else {
    out.y.resize(cfg.n);
    for (int i = 0; i < cfg.n; ++i) out.y[i] = f[i] + sigma[i] * noise.normal();
  }
  return out;
}

std::vector<double> gen_ar1(int n, double phi, double c, double sigma, Rng& rng) {
  if (n < 1) throw ConfigError("gen_ar1: n must be >= 1");
  std::vector<double> x(n);
  x[0] = c;
  for (int t = 1; t < n; ++t) x[t] = c + phi * x[t - 1] + sigma * rng.normal();
  return x;
}

TabularDataset dataset_from_arrays(const Tensor& X_raw, const std::vector<double>* y_reg,
                                   const std::vector<int>* y_cls, Rng& rng,
                                   double test_fraction) {
  EncodedTable enc;
  enc.task = y_cls ? Task::classification : Task::regression;
  enc.X = X_raw;
  for (int j = 0; j < X_raw.cols(); ++j) {
    enc.feature_names.push_back("x" + std::to_string(j));
    enc.numeric_feature.push_back(true);
  }
  if (y_cls) {
    enc.y_cls = *y_cls;
    int classes = 0;
    for (int v : *y_cls) classes = std::max(classes, v + 1);
    for (int c = 0; c < classes; ++c) enc.class_names.push_back(std::to_string(c));
  } else {
    enc.y_reg = *y_reg;
  }
  const int n = X_raw.rows();
  Rng split_rng = rng.stream("split");
  std::vector<int> idx = shuffled_indices(n, split_rng);
  const int n_test = static_cast<int>(std::lround(n * test_fraction));
  std::vector<int> test(idx.begin(), idx.begin() + n_test);
  std::vector<int> train(idx.begin() + n_test, idx.end());
  return finish_dataset(std::move(enc), std::move(train), std::move(test));
}

void write_tabular_csv(const std::string& path, const Tensor& X, const std::vector<double>* y_reg,
                       const std::vector<int>* y_cls) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  for (int j = 0; j < X.cols(); ++j) out << "x" << j << ",";
  out << "target\n";
  for (int i = 0; i < X.rows(); ++i) {
    for (int j = 0; j < X.cols(); ++j) out << X.at(i, j) << ",";
    if (y_reg)
      out << (*y_reg)[i] << "\n";
    else
      out << (*y_cls)[i] << "\n";
  }
}

void write_series_csv(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "t,value\n";
  for (size_t t = 0; t < values.size(); ++t) out << t << "," << values[t] << "\n";
}

}  // namespace batchens
