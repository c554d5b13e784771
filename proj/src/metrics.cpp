#include "batchens/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "batchens/errors.hpp"

namespace batchens {

using nlohmann::json;

CoverageGrid CoverageGrid::make_default() { return make(0.025, 0.975, 0.025); }

CoverageGrid CoverageGrid::make(double lo, double hi, double step) {
  CoverageGrid g;
  for (double v = lo; v <= hi + 1e-12; v += step) g.levels.push_back(v);
  g.validate();
  return g;
}

void CoverageGrid::validate() const {
  if (levels.empty()) throw ConfigError("coverage grid is empty");
  double prev = 0.0;
  for (double v : levels) {
    if (v <= prev || v >= 1.0)
      throw ConfigError("coverage grid must be strictly increasing within (0,1)");
    prev = v;
  }
}

double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw ContractError("normal_quantile: p outside (0,1)");
  // Acklam's rational approximation with one Halley refinement step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step against erfc for near-double precision.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

double rmse(const std::vector<double>& predicted, const std::vector<double>& actual) {
  if (predicted.size() != actual.size() || predicted.empty())
    throw ContractError("rmse: size mismatch or empty input");
  double ss = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

double regression_nll(const std::vector<double>& mu, const std::vector<double>& variance,
                      const std::vector<double>& y, bool include_constant) {
  if (mu.size() != variance.size() || mu.size() != y.size() || mu.empty())
    throw ContractError("regression_nll: size mismatch or empty input");
  double total = 0.0;
  for (size_t i = 0; i < mu.size(); ++i) {
    if (variance[i] <= 0.0) throw ContractError("regression_nll: nonpositive variance");
    const double d = y[i] - mu[i];
    total += 0.5 * std::log(variance[i]) + 0.5 * d * d / variance[i];
  }
  double nll = total / static_cast<double>(mu.size());
  if (include_constant) nll += 0.5 * std::log(2.0 * M_PI);
  return nll;
}

double classification_nll(const std::vector<double>& probs, int num_classes,
                          const std::vector<int>& labels) {
  const size_t n = labels.size();
  if (probs.size() != n * static_cast<size_t>(num_classes) || n == 0)
    throw ContractError("classification_nll: size mismatch or empty input");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("classification_nll: label out of range at " + std::to_string(i));
    const double p = std::max(probs[i * num_classes + labels[i]], 1e-12);
    total -= std::log(p);
  }
  return total / static_cast<double>(n);
}

namespace {

int argmax_row(const double* row, int c) {
  int best = 0;
  for (int j = 1; j < c; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace

double accuracy(const std::vector<double>& probs, int num_classes,
                const std::vector<int>& labels) {
  const size_t n = labels.size();
  if (probs.size() != n * static_cast<size_t>(num_classes) || n == 0)
    throw ContractError("accuracy: size mismatch or empty input");
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i)
    if (argmax_row(probs.data() + i * num_classes, num_classes) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(n);
}

double brier_score(const std::vector<double>& probs, int num_classes,
                   const std::vector<int>& labels) {
  const size_t n = labels.size();
  if (probs.size() != n * static_cast<size_t>(num_classes) || n == 0)
    throw ContractError("brier_score: size mismatch or empty input");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("brier_score: label out of range at " + std::to_string(i));
    for (int c = 0; c < num_classes; ++c) {
      const double target = c == labels[i] ? 1.0 : 0.0;
      const double d = probs[i * num_classes + c] - target;
      total += d * d;
    }
  }
  return total / static_cast<double>(n);
}

double expected_calibration_error(const std::vector<double>& probs, int num_classes,
                                  const std::vector<int>& labels, int bins) {
  const size_t n = labels.size();
  if (probs.size() != n * static_cast<size_t>(num_classes) || n == 0)
    throw ContractError("ece: size mismatch or empty input");
  if (bins < 1) throw ConfigError("ece: bins must be >= 1");
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<long> count(bins, 0);
  for (size_t i = 0; i < n; ++i) {
    const double* row = probs.data() + i * num_classes;
    const int pred = argmax_row(row, num_classes);
    const double conf = row[pred];
    int bin = static_cast<int>(conf * bins);
    if (bin >= bins) bin = bins - 1;
    if (bin < 0) bin = 0;
    conf_sum[bin] += conf;
    acc_sum[bin] += pred == labels[i] ? 1.0 : 0.0;
    count[bin] += 1;
  }
  double ece = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double w = static_cast<double>(count[b]) / static_cast<double>(n);
    ece += w * std::abs(acc_sum[b] / count[b] - conf_sum[b] / count[b]);
  }
  return ece;
}

std::vector<double> coverage_curve(const std::vector<double>& mu,
                                   const std::vector<double>& variance,
                                   const std::vector<double>& y, const CoverageGrid& grid) {
  grid.validate();
  const size_t n = y.size();
  if (mu.size() != n || variance.size() != n || n == 0)
    throw ContractError("coverage_curve: size mismatch or empty input");
  for (double v : variance)
    if (v <= 0.0) throw ContractError("coverage_curve: nonpositive variance");
  std::vector<double> sigma(n);
  for (size_t i = 0; i < n; ++i) sigma[i] = std::sqrt(variance[i]);
  std::vector<double> empirical;
  empirical.reserve(grid.size());
  for (double gamma : grid.levels) {
    const double z = normal_quantile(0.5 * (1.0 + gamma));
    size_t inside = 0;
    for (size_t i = 0; i < n; ++i)
      if (std::abs(y[i] - mu[i]) <= z * sigma[i]) ++inside;
    empirical.push_back(static_cast<double>(inside) / static_cast<double>(n));
  }
  return empirical;
}

CalibrationErrors rmsce_and_area(const std::vector<double>& empirical, const CoverageGrid& grid) {
  if (empirical.size() != grid.size())
    throw ContractError("rmsce_and_area: curve/grid size mismatch");
  CalibrationErrors out;
  double ss = 0.0;
  for (size_t j = 0; j < empirical.size(); ++j) {
    const double d = empirical[j] - grid.levels[j];
    ss += d * d;
  }
  out.rmsce = std::sqrt(ss / static_cast<double>(empirical.size()));
  double area = 0.0;
  for (size_t j = 0; j + 1 < empirical.size(); ++j) {
    const double f0 = std::abs(empirical[j] - grid.levels[j]);
    const double f1 = std::abs(empirical[j + 1] - grid.levels[j + 1]);
    area += 0.5 * (f0 + f1) * (grid.levels[j + 1] - grid.levels[j]);
  }
  out.miscalibration_area = area;  // single-point grids integrate to zero
  return out;
}

Decomposition decompose_regression_sample(const std::vector<double>& member_mu,
                                          const std::vector<double>& member_var) {
  if (member_mu.empty() || member_mu.size() != member_var.size())
    throw ContractError("decompose_regression: bad member arrays");
  const double k = static_cast<double>(member_mu.size());
  double mean_mu = 0.0, mean_var = 0.0;
  for (size_t i = 0; i < member_mu.size(); ++i) {
    mean_mu += member_mu[i];
    mean_var += member_var[i];
  }
  mean_mu /= k;
  mean_var /= k;
  double spread = 0.0;
  for (double m : member_mu) spread += (m - mean_mu) * (m - mean_mu);
  spread /= k;
  Decomposition d;
  d.aleatoric = mean_var;
  d.epistemic = spread;
  d.total = d.aleatoric + d.epistemic;
  return d;
}

namespace {

double entropy(const double* p, int c) {
  double h = 0.0;
  for (int j = 0; j < c; ++j)
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  return h;
}

}  // namespace

Decomposition decompose_classification_sample(
    const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw ContractError("decompose_classification: no members");
  const int c = static_cast<int>(member_probs[0].size());
  std::vector<double> avg(c, 0.0);
  double mean_entropy = 0.0;
  for (const auto& row : member_probs) {
    if (static_cast<int>(row.size()) != c)
      throw ShapeError("decompose_classification: ragged member rows");
    for (int j = 0; j < c; ++j) avg[j] += row[j];
    mean_entropy += entropy(row.data(), c);
  }
  const double k = static_cast<double>(member_probs.size());
  for (double& v : avg) v /= k;
  mean_entropy /= k;
  Decomposition d;
  d.total = entropy(avg.data(), c);
  d.aleatoric = mean_entropy;
  d.epistemic = d.total - d.aleatoric;
  if (d.epistemic < 0.0) {
    if (d.epistemic < -1e-9) throw NumericError("decompose_classification: negative epistemic");
    d.epistemic = 0.0;
    d.total = d.aleatoric;
  }
  return d;
}

Decomposition decompose_regression(const PredictiveDistribution& pred) {
  Decomposition mean;
  std::vector<double> mus(pred.K), vars(pred.K);
  for (int i = 0; i < pred.n; ++i) {
    for (int k = 0; k < pred.K; ++k) {
      mus[k] = pred.mu_at(i, k);
      vars[k] = pred.var_at(i, k);
    }
    Decomposition d = decompose_regression_sample(mus, vars);
    mean.total += d.total;
    mean.aleatoric += d.aleatoric;
    mean.epistemic += d.epistemic;
  }
  mean.total /= pred.n;
  mean.aleatoric /= pred.n;
  mean.epistemic /= pred.n;
  return mean;
}

Decomposition decompose_classification(const PredictiveDistribution& pred) {
  Decomposition mean;
  for (int i = 0; i < pred.n; ++i) {
    std::vector<std::vector<double>> members(pred.K, std::vector<double>(pred.C));
    for (int k = 0; k < pred.K; ++k)
      for (int c = 0; c < pred.C; ++c) members[k][c] = pred.prob_at(i, k, c);
    Decomposition d = decompose_classification_sample(members);
    mean.total += d.total;
    mean.aleatoric += d.aleatoric;
    mean.epistemic += d.epistemic;
  }
  mean.total /= pred.n;
  mean.aleatoric /= pred.n;
  mean.epistemic /= pred.n;
  return mean;
}

SelectiveCurve selective_curve(const std::vector<double>& per_sample,
                               const std::vector<double>& uncertainty, SelectiveMetric kind,
                               const std::vector<double>& levels) {
  const size_t n = per_sample.size();
  if (uncertainty.size() != n || n == 0)
    throw ContractError("selective_curve: size mismatch or empty input");
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return uncertainty[a] < uncertainty[b]; });
  std::vector<double> prefix(n);
  double running = 0.0;
  for (size_t i = 0; i < n; ++i) {
    running += per_sample[idx[i]];
    prefix[i] = running;
  }
  SelectiveCurve out;
  for (double gamma : levels) {
    if (gamma <= 0.0 || gamma > 1.0)
      throw ConfigError("selective_curve: level outside (0,1]");
    const size_t m = static_cast<size_t>(std::ceil(gamma * static_cast<double>(n)));
    const double mean = prefix[m - 1] / static_cast<double>(m);
    out.coverage.push_back(gamma);
    out.value.push_back(kind == SelectiveMetric::rmse ? std::sqrt(mean) : mean);
  }
  return out;
}

std::vector<double> default_selective_levels() {
  std::vector<double> levels;
  for (int i = 1; i <= 20; ++i) levels.push_back(0.05 * i);
  levels.back() = 1.0;
  return levels;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  if (b.size() != n || n < 2) throw ContractError("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

// --- serialization -----------------------------------------------------------

namespace {

json decomposition_to_json(const Decomposition& d) {
  return json{{"total", d.total}, {"aleatoric", d.aleatoric}, {"epistemic", d.epistemic}};
}

Decomposition decomposition_from_json(const json& j) {
  Decomposition d;
  d.total = j.at("total").get<double>();
  d.aleatoric = j.at("aleatoric").get<double>();
  d.epistemic = j.at("epistemic").get<double>();
  return d;
}

}  // namespace

std::string MetricsReport::to_json_string() const {
  json j;
  j["dataset"] = dataset;
  j["method"] = method;
  j["task"] = task;
  j["seed"] = seed;
  j["param_count"] = param_count;
  j["rmse"] = rmse;
  j["nll"] = nll;
  j["nll_no_const"] = nll_no_const;
  j["accuracy"] = accuracy;
  j["brier"] = brier;
  j["ece"] = ece;
  j["rmsce"] = rmsce;
  j["miscalibration_area"] = miscalibration_area;
  j["decomposition"] = decomposition_to_json(decomposition);
  j["coverage"] = json{{"nominal", cov_nominal}, {"empirical", cov_empirical}};
  j["selective"] = json{{"coverage", selective.coverage}, {"value", selective.value}};
  return j.dump(2);
}

MetricsReport MetricsReport::from_json_string(const std::string& text) {
  json j = json::parse(text);
  MetricsReport r;
  // NaN metrics serialize as null; read them back as NaN
  auto num = [&](const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nan("");
    return j[key].get<double>();
  };
  r.dataset = j.value("dataset", "");
  r.method = j.value("method", "");
  r.task = j.value("task", "");
  r.seed = j.value("seed", 0ULL);
  r.param_count = j.value("param_count", 0L);
  r.rmse = num("rmse");
  r.nll = num("nll");
  r.nll_no_const = num("nll_no_const");
  r.accuracy = num("accuracy");
  r.brier = num("brier");
  r.ece = num("ece");
  r.rmsce = num("rmsce");
  r.miscalibration_area = num("miscalibration_area");
  if (j.contains("decomposition")) r.decomposition = decomposition_from_json(j["decomposition"]);
  if (j.contains("coverage")) {
    r.cov_nominal = j["coverage"].value("nominal", std::vector<double>{});
    r.cov_empirical = j["coverage"].value("empirical", std::vector<double>{});
  }
  if (j.contains("selective")) {
    r.selective.coverage = j["selective"].value("coverage", std::vector<double>{});
    r.selective.value = j["selective"].value("value", std::vector<double>{});
  }
  return r;
}

std::string metrics_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "key,value\n";
  out << "dataset," << r.dataset << "\n";
  out << "method," << r.method << "\n";
  out << "task," << r.task << "\n";
  out << "seed," << r.seed << "\n";
  out << "param_count," << r.param_count << "\n";
  out << "train_seconds," << r.train_seconds << "\n";
  out << "rmse," << r.rmse << "\n";
  out << "nll," << r.nll << "\n";
  out << "nll_no_const," << r.nll_no_const << "\n";
  out << "accuracy," << r.accuracy << "\n";
  out << "brier," << r.brier << "\n";
  out << "ece," << r.ece << "\n";
  out << "rmsce," << r.rmsce << "\n";
  out << "miscalibration_area," << r.miscalibration_area << "\n";
  out << "uncertainty_total," << r.decomposition.total << "\n";
  out << "uncertainty_aleatoric," << r.decomposition.aleatoric << "\n";
  out << "uncertainty_epistemic," << r.decomposition.epistemic << "\n";
  auto level_key = [](double v) {
    std::ostringstream k;
    k.precision(6);
    k << v;
    return k.str();
  };
  for (size_t j = 0; j < r.cov_nominal.size(); ++j)
    out << "coverage_" << level_key(r.cov_nominal[j]) << "," << r.cov_empirical[j] << "\n";
  for (size_t j = 0; j < r.selective.coverage.size(); ++j)
    out << "selective_" << level_key(r.selective.coverage[j]) << "," << r.selective.value[j]
        << "\n";
  return out.str();
}

}  // namespace batchens
