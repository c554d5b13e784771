#include "batchens/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "batchens/errors.hpp"
#include "batchens/svg.hpp"

namespace batchens {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  train.validate();
  if (dataset.timeseries()) {
    if (model.task != Task::timeseries)
      throw ConfigError("dataset '" + dataset.kind + "' needs a timeseries model task");
  } else if (model.task == Task::timeseries) {
    throw ConfigError("timeseries model task needs a series dataset");
  }
  if (dataset.kind == "csv" && (dataset.csv.empty() || dataset.manifest.empty()))
    throw ConfigError("csv dataset needs csv+manifest paths");
  if (dataset.kind == "series_csv" && dataset.csv.empty())
    throw ConfigError("series_csv dataset needs a csv path");
  if (shift && dataset.timeseries())
    throw ConfigError("shift splits apply to tabular datasets only");
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["name"] = name;
  j["dataset"] = json{{"kind", dataset.kind},       {"name", dataset.name},
                      {"csv", dataset.csv},         {"manifest", dataset.manifest},
                      {"column", dataset.column},   {"n", dataset.n},
                      {"d", dataset.d},             {"ar_phi", dataset.ar_phi},
                      {"ar_const", dataset.ar_const}, {"ar_sigma", dataset.ar_sigma},
                      {"test_fraction", dataset.test_fraction}};
  j["model"] = model;
  j["train"] = json{{"epochs", train.epochs},
                    {"learning_rate", train.learning_rate},
                    {"batch_size", train.batch_size},
                    {"weight_decay", train.weight_decay},
                    {"beta1", train.beta1},
                    {"beta2", train.beta2},
                    {"epsilon", train.epsilon},
                    {"context_len", train.context_len},
                    {"horizon", train.horizon},
                    {"replicate_training", train.replicate_training}};
  j["forecast"] = json{{"horizon", forecast.horizon},
                       {"total_paths", forecast.total_paths},
                       {"context_len", forecast.context_len},
                       {"noise_scale", forecast.noise_scale}};
  j["shift"] = shift;
  j["shift_q"] = shift_q;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  j["jobs"] = jobs;
  j["save_checkpoints"] = save_checkpoints;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  c.name = j.value("name", "run");
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    c.dataset.kind = d.value("kind", "ackley_regression");
    c.dataset.name = d.value("name", "");
    c.dataset.csv = d.value("csv", "");
    c.dataset.manifest = d.value("manifest", "");
    c.dataset.column = d.value("column", "value");
    c.dataset.n = d.value("n", 2000);
    c.dataset.d = d.value("d", 10);
    c.dataset.ar_phi = d.value("ar_phi", 0.8);
    c.dataset.ar_const = d.value("ar_const", 0.05);
    c.dataset.ar_sigma = d.value("ar_sigma", 0.05);
    c.dataset.test_fraction = d.value("test_fraction", 0.2);
  }
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("train")) {
    const json& t = j["train"];
    c.train.epochs = t.value("epochs", 500);
    c.train.learning_rate = t.value("learning_rate", 0.005);
    c.train.batch_size = t.value("batch_size", 64);
    c.train.weight_decay = t.value("weight_decay", 0.0);
    c.train.beta1 = t.value("beta1", 0.9);
    c.train.beta2 = t.value("beta2", 0.999);
    c.train.epsilon = t.value("epsilon", 1e-8);
    c.train.context_len = t.value("context_len", 12);
    c.train.horizon = t.value("horizon", 5);
    c.train.replicate_training = t.value("replicate_training", false);
  }
  if (j.contains("forecast")) {
    const json& f = j["forecast"];
    c.forecast.horizon = f.value("horizon", 5);
    c.forecast.total_paths = f.value("total_paths", 2000);
    c.forecast.context_len = f.value("context_len", 12);
    c.forecast.noise_scale = f.value("noise_scale", 1.0);
  }
  c.shift = j.value("shift", false);
  c.shift_q = j.value("shift_q", 0.025);
  c.seeds = j.value("seeds", std::vector<uint64_t>{1, 2, 3, 4, 5});
  c.output_dir = j.value("output_dir", "runs/" + c.name);
  c.jobs = j.value("jobs", 1);
  c.save_checkpoints = j.value("save_checkpoints", true);
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double sd = std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
    out.se = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return out;
}

namespace {

TabularDataset build_tabular_dataset(const ExperimentConfig& cfg, Rng& rng) {
  Rng data_rng = rng.stream("data");
  if (cfg.dataset.kind == "ackley_regression" || cfg.dataset.kind == "ackley_classification") {
    AckleyConfig acfg;
    acfg.n = cfg.dataset.n;
    acfg.d = cfg.dataset.d;
    const Task task =
        cfg.dataset.kind == "ackley_regression" ? Task::regression : Task::classification;
    SyntheticTabular synth = gen_ackley(acfg, task, data_rng);
    if (cfg.shift) {
      // route through the CSV-equivalent raw pipeline for the tail logic
      std::ostringstream csv;
      csv.precision(17);
      for (int j = 0; j < synth.X.cols(); ++j) csv << "x" << j << ",";
      csv << "target\n";
      for (int i = 0; i < synth.X.rows(); ++i) {
        for (int j = 0; j < synth.X.cols(); ++j) csv << synth.X.at(i, j) << ",";
        if (task == Task::regression)
          csv << synth.y[i] << "\n";
        else
          csv << synth.labels[i] << "\n";
      }
      DatasetManifest manifest;
      manifest.name = cfg.dataset.label();
      manifest.task = to_string(task);
      manifest.target = "target";
      return make_shift_split(parse_csv(csv.str()), manifest, data_rng, cfg.shift_q);
    }
    return dataset_from_arrays(synth.X, task == Task::regression ? &synth.y : nullptr,
                               task == Task::classification ? &synth.labels : nullptr, data_rng,
                               cfg.dataset.test_fraction);
  }
  if (cfg.dataset.kind == "csv") {
    RawTable table = read_csv(cfg.dataset.csv);
    DatasetManifest manifest = DatasetManifest::from_json_file(cfg.dataset.manifest);
    if (cfg.shift) return make_shift_split(table, manifest, data_rng, cfg.shift_q);
    return load_and_scale(table, manifest, data_rng, cfg.dataset.test_fraction);
  }
  throw ConfigError("unknown tabular dataset kind '" + cfg.dataset.kind + "'");
}

SeriesDataset build_series_dataset(const ExperimentConfig& cfg, Rng& rng) {
  Rng data_rng = rng.stream("data");
  if (cfg.dataset.kind == "ar1") {
    std::vector<double> raw = gen_ar1(cfg.dataset.n, cfg.dataset.ar_phi, cfg.dataset.ar_const,
                                      cfg.dataset.ar_sigma, data_rng);
    return load_series(raw, 1.0 - cfg.dataset.test_fraction);
  }
  if (cfg.dataset.kind == "series_csv")
    return load_series_csv(cfg.dataset.csv, cfg.dataset.column);
  throw ConfigError("unknown series dataset kind '" + cfg.dataset.kind + "'");
}

}  // namespace

TabularDataset build_experiment_tabular(const ExperimentConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  return build_tabular_dataset(cfg, rng);
}

SeriesDataset build_experiment_series(const ExperimentConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  return build_series_dataset(cfg, rng);
}

MetricsReport evaluate_tabular(Model& model, const TabularDataset& ds, Rng& rng) {
  MetricsReport r;
  r.task = to_string(model.cfg.task);
  r.method = to_string(model.cfg.method);
  r.param_count = model.param_count();
  Tensor X_test = gather_matrix(ds.X, ds.test_idx);
  Rng predict_rng = rng.stream("predict");
  PredictiveDistribution pred = predict(model, X_test, predict_rng);

  if (model.cfg.task == Task::regression) {
    std::vector<double> y = gather_values(ds.y_reg, ds.test_idx);
    r.rmse = rmse(pred.mu_star, y);
    r.nll = regression_nll(pred.mu_star, pred.var_star, y, true);
    r.nll_no_const = regression_nll(pred.mu_star, pred.var_star, y, false);
    CoverageGrid grid = CoverageGrid::make_default();
    r.cov_nominal = grid.levels;
    r.cov_empirical = coverage_curve(pred.mu_star, pred.var_star, y, grid);
    CalibrationErrors cal = rmsce_and_area(r.cov_empirical, grid);
    r.rmsce = cal.rmsce;
    r.miscalibration_area = cal.miscalibration_area;
    r.decomposition = decompose_regression(pred);
    std::vector<double> sq(pred.n), unc(pred.n);
    for (int i = 0; i < pred.n; ++i) {
      const double d = pred.mu_star[i] - y[i];
      sq[i] = d * d;
      unc[i] = std::sqrt(pred.var_star[i]);
    }
    r.selective = selective_curve(sq, unc, SelectiveMetric::rmse, default_selective_levels());
    r.accuracy = r.brier = r.ece = std::nan("");
  } else {
    std::vector<int> y = gather_labels(ds.y_cls, ds.test_idx);
    r.accuracy = accuracy(pred.avg_probs, pred.C, y);
    r.brier = brier_score(pred.avg_probs, pred.C, y);
    r.ece = expected_calibration_error(pred.avg_probs, pred.C, y, 15);
    r.nll = classification_nll(pred.avg_probs, pred.C, y);
    r.nll_no_const = r.nll;
    r.decomposition = decompose_classification(pred);
    std::vector<double> correct(pred.n), unc(pred.n);
    for (int i = 0; i < pred.n; ++i) {
      int arg = 0;
      for (int c = 1; c < pred.C; ++c)
        if (pred.avg_prob_at(i, c) > pred.avg_prob_at(i, arg)) arg = c;
      correct[i] = arg == y[i] ? 1.0 : 0.0;
      double h = 0.0;
      for (int c = 0; c < pred.C; ++c) {
        const double p = pred.avg_prob_at(i, c);
        if (p > 0.0) h -= p * std::log(p);
      }
      unc[i] = h;
    }
    r.selective =
        selective_curve(correct, unc, SelectiveMetric::accuracy, default_selective_levels());
    r.rmse = std::nan("");
    r.rmsce = std::nan("");
    r.miscalibration_area = std::nan("");
  }
  return r;
}

MetricsReport evaluate_series(Model& model, const SeriesDataset& ds, const ForecastConfig& fcfg,
                              Rng& rng) {
  MetricsReport r;
  r.task = to_string(model.cfg.task);
  r.method = to_string(model.cfg.method);
  r.param_count = model.param_count();
  const int L = fcfg.context_len, H = fcfg.horizon;
  SeriesWindows windows = test_windows(ds, L, H);
  const int n_windows = windows.contexts.rows();
  Rng forecast_rng = rng.stream("forecast");

  std::vector<double> mu_all, var_all, y_all;
  std::vector<double> window_sq(n_windows, 0.0), window_unc(n_windows, 0.0);
  Decomposition dec;
  long dec_count = 0;
  for (int w = 0; w < n_windows; ++w) {
    std::vector<double> context(L);
    for (int t = 0; t < L; ++t) context[t] = windows.contexts.at(w, t);
    Rng stream = forecast_rng.stream("w" + std::to_string(w));
    ForecastPaths paths = ancestral_paths(model, context, fcfg, stream);
    ForecastResult agg = aggregate_forecast(paths);
    MemberForecastMoments moments = member_moments(paths);
    for (int h = 0; h < H; ++h) {
      const double y = windows.targets.at(w, h);
      const double var = std::max(agg.variance[h], 1e-12);
      mu_all.push_back(agg.mean[h]);
      var_all.push_back(var);
      y_all.push_back(y);
      const double d = agg.mean[h] - y;
      window_sq[w] += d * d / H;
      window_unc[w] += std::sqrt(var) / H;
      std::vector<double> mus(paths.K), vars(paths.K);
      bool member_vars_ok = true;
      for (int k = 0; k < paths.K; ++k) {
        mus[k] = moments.mean_at(k, h);
        vars[k] = moments.var_at(k, h);
        if (vars[k] <= 0.0) member_vars_ok = false;
      }
      if (member_vars_ok) {
        Decomposition dh = decompose_regression_sample(mus, vars);
        dec.total += dh.total;
        dec.aleatoric += dh.aleatoric;
        dec.epistemic += dh.epistemic;
        ++dec_count;
      }
    }
  }
  if (dec_count > 0) {
    dec.total /= dec_count;
    dec.aleatoric /= dec_count;
    dec.epistemic /= dec_count;
  }
  r.decomposition = dec;
  r.rmse = rmse(mu_all, y_all);
  r.nll = regression_nll(mu_all, var_all, y_all, true);
  r.nll_no_const = regression_nll(mu_all, var_all, y_all, false);
  CoverageGrid grid = CoverageGrid::make_default();
  r.cov_nominal = grid.levels;
  r.cov_empirical = coverage_curve(mu_all, var_all, y_all, grid);
  CalibrationErrors cal = rmsce_and_area(r.cov_empirical, grid);
  r.rmsce = cal.rmsce;
  r.miscalibration_area = cal.miscalibration_area;
  r.selective =
      selective_curve(window_sq, window_unc, SelectiveMetric::rmse, default_selective_levels());
  r.accuracy = r.brier = r.ece = std::nan("");
  return r;
}

SeedOutcome run_single_seed(const ExperimentConfig& cfg, uint64_t seed, Model* model_out) {
  cfg.validate();
  Rng rng(seed);
  SeedOutcome out;
  if (cfg.dataset.timeseries()) {
    SeriesDataset ds = build_series_dataset(cfg, rng);
    ModelConfig mcfg = cfg.model;
    mcfg.input_dim = 1;
    Rng init_rng = rng.stream("init");
    Model model = build_model(mcfg, init_rng);
    Rng train_rng = rng.stream("train");
    SeriesWindows tw = train_windows(ds, cfg.train.context_len, cfg.train.horizon);
    out.training = train_series(model, tw, cfg.train, train_rng);
    ForecastConfig fcfg = cfg.forecast;
    fcfg.context_len = cfg.train.context_len;
    fcfg.horizon = cfg.train.horizon;
    Rng eval_rng = rng.stream("eval");
    out.report = evaluate_series(model, ds, fcfg, eval_rng);
    if (model_out) *model_out = std::move(model);
  } else {
    TabularDataset ds = build_tabular_dataset(cfg, rng);
    ModelConfig mcfg = cfg.model;
    mcfg.input_dim = ds.d();
    if (ds.task == Task::classification)
      mcfg.num_classes = std::max<int>(2, static_cast<int>(ds.class_names.size()));
    Rng init_rng = rng.stream("init");
    Model model = build_model(mcfg, init_rng);
    Rng train_rng = rng.stream("train");
    Tensor X_train = gather_matrix(ds.X, ds.train_idx);
    if (ds.task == Task::classification) {
      std::vector<int> y = gather_labels(ds.y_cls, ds.train_idx);
      out.training = train_classification(model, X_train, y, cfg.train, train_rng);
    } else {
      std::vector<double> y = gather_values(ds.y_reg, ds.train_idx);
      out.training = train_regression(model, X_train, y, cfg.train, train_rng);
    }
    Rng eval_rng = rng.stream("eval");
    out.report = evaluate_tabular(model, ds, eval_rng);
    if (model_out) *model_out = std::move(model);
  }
  out.report.dataset = cfg.dataset.label() + (cfg.shift ? "/shift" : "");
  out.report.seed = seed;
  out.report.train_seconds = out.training.train_seconds;
  return out;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

std::vector<std::pair<std::string, double MetricsReport::*>> scalar_fields() {
  return {{"rmse", &MetricsReport::rmse},
          {"nll", &MetricsReport::nll},
          {"nll_no_const", &MetricsReport::nll_no_const},
          {"accuracy", &MetricsReport::accuracy},
          {"brier", &MetricsReport::brier},
          {"ece", &MetricsReport::ece},
          {"rmsce", &MetricsReport::rmsce},
          {"miscalibration_area", &MetricsReport::miscalibration_area},
          {"train_seconds", &MetricsReport::train_seconds}};
}

std::string summary_csv(const std::vector<SeedOutcome>& outcomes) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,mean,se\n";
  auto emit = [&](const std::string& name, auto getter) {
    std::vector<double> vals;
    for (const auto& o : outcomes) {
      const double v = getter(o.report);
      if (!std::isnan(v)) vals.push_back(v);
    }
    if (vals.empty()) return;
    MeanSe ms = mean_se(vals);
    out << name << "," << ms.mean << "," << ms.se << "\n";
  };
  for (auto& [name, field] : scalar_fields())
    emit(name, [field](const MetricsReport& r) { return r.*field; });
  emit("uncertainty_total", [](const MetricsReport& r) { return r.decomposition.total; });
  emit("uncertainty_aleatoric", [](const MetricsReport& r) { return r.decomposition.aleatoric; });
  emit("uncertainty_epistemic", [](const MetricsReport& r) { return r.decomposition.epistemic; });
  emit("param_count", [](const MetricsReport& r) { return static_cast<double>(r.param_count); });
  return out.str();
}

void write_plots(const std::string& dir, const std::vector<SeedOutcome>& outcomes) {
  const MetricsReport& first = outcomes.front().report;
  if (!first.cov_nominal.empty()) {
    SvgPlotSpec spec;
    spec.title = "Calibration: nominal vs empirical coverage";
    spec.x_label = "nominal coverage";
    spec.y_label = "empirical coverage";
    spec.unit_diagonal = true;
    SvgSeries mean_series;
    mean_series.label = "mean over seeds";
    const size_t J = first.cov_nominal.size();
    for (size_t j = 0; j < J; ++j) {
      double m = 0.0;
      for (const auto& o : outcomes) m += o.report.cov_empirical[j];
      mean_series.x.push_back(first.cov_nominal[j]);
      mean_series.y.push_back(m / outcomes.size());
    }
    spec.series.push_back(std::move(mean_series));
    write_svg_plot(dir + "/calibration.svg", spec);
  }
  if (!first.selective.coverage.empty()) {
    SvgPlotSpec spec;
    spec.title = "Selective prediction";
    spec.x_label = "coverage (fraction kept)";
    spec.y_label = first.task == "classification" ? "accuracy" : "rmse";
    SvgSeries mean_series;
    mean_series.label = "mean over seeds";
    const size_t J = first.selective.coverage.size();
    for (size_t j = 0; j < J; ++j) {
      double m = 0.0;
      for (const auto& o : outcomes) m += o.report.selective.value[j];
      mean_series.x.push_back(first.selective.coverage[j]);
      mean_series.y.push_back(m / outcomes.size());
    }
    // the full-coverage value as a dashed reference line
    spec.draw_hline = true;
    spec.hline = mean_series.y.back();
    spec.series.push_back(std::move(mean_series));
    write_svg_plot(dir + "/selective.svg", spec);
  }
}

}  // namespace

std::vector<SeedOutcome> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir + "/config.json", cfg.to_json_string());

  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  std::vector<Model> models(cfg.seeds.size());
  const int jobs = std::min<int>(cfg.jobs, static_cast<int>(cfg.seeds.size()));
  if (jobs <= 1) {
    for (size_t i = 0; i < cfg.seeds.size(); ++i)
      outcomes[i] = run_single_seed(cfg, cfg.seeds[i], &models[i]);
  } else {
    std::mutex next_mutex;
    size_t next = 0;
    std::exception_ptr error;
    auto worker = [&]() {
      for (;;) {
        size_t i;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next >= cfg.seeds.size() || error) return;
          i = next++;
        }
        try {
          outcomes[i] = run_single_seed(cfg, cfg.seeds[i], &models[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    const uint64_t seed = cfg.seeds[i];
    write_file(cfg.output_dir + "/metrics_seed_" + std::to_string(seed) + ".json",
               outcomes[i].report.to_json_string());
    if (cfg.save_checkpoints)
      save_model(models[i], seed, cfg.output_dir + "/model_seed_" + std::to_string(seed) + ".json");
  }

  std::ostringstream losses;
  losses.precision(17);
  losses << "seed,epoch,mean_member_loss,penalty\n";
  for (size_t i = 0; i < cfg.seeds.size(); ++i)
    for (size_t e = 0; e < outcomes[i].training.epoch_loss.size(); ++e)
      losses << cfg.seeds[i] << "," << e << "," << outcomes[i].training.epoch_loss[e] << ","
             << outcomes[i].training.epoch_penalty[e] << "\n";
  write_file(cfg.output_dir + "/losses.csv", losses.str());
  write_file(cfg.output_dir + "/summary.csv", summary_csv(outcomes));
  write_plots(cfg.output_dir, outcomes);
  return outcomes;
}

std::vector<std::string> ablation_variants(const std::string& suite,
                                           const ExperimentConfig& base) {
  if (suite == "adapters") return {"none", "R", "S", "B", "RS", "RB", "SB", "RSB"};
  if (suite == "gates") return {"C", "Z", "F", "CZ", "CF", "ZF", "CZF"};
  if (suite == "layers") {
    std::vector<std::string> out;
    for (size_t k = 1; k <= base.model.hidden_dims.size(); ++k)
      out.push_back(std::to_string(k));
    return out;
  }
  if (suite == "init") {
    return {"BE", "BE(1e-4)", "BE(1e-3)", "BE(1e-2)", "BE(O)", "BE(O,1e-4)", "BE(O,1e-3)",
            "BE(O,1e-2)"};
  }
  throw ConfigError("unknown ablation suite '" + suite + "'");
}

void run_ablation(const std::string& suite, const ExperimentConfig& base) {
  base.validate();
  if (base.model.method != Method::batch_ensemble)
    throw ConfigError("ablation suites run on the batch_ensemble method");
  if (suite == "gates" && base.model.task != Task::timeseries)
    throw ConfigError("the gates suite needs a timeseries task");
  const std::vector<std::string> variants = ablation_variants(suite, base);
  fs::create_directories(base.output_dir);

  struct Row {
    std::string variant;
    long params = 0;
    std::map<std::string, MeanSe> metrics;
  };
  std::vector<Row> rows;
  for (const std::string& variant : variants) {
    ExperimentConfig cfg = base;
    cfg.name = base.name + "_" + suite + "_" + variant;
    cfg.output_dir = base.output_dir + "/" + suite + "_" + variant;
    if (suite == "adapters") {
      cfg.model.adapter_mask.input_scale = variant.find('R') != std::string::npos;
      cfg.model.adapter_mask.output_scale = variant.find('S') != std::string::npos;
      cfg.model.adapter_mask.bias = variant.find('B') != std::string::npos;
    } else if (suite == "gates") {
      cfg.model.gate_mask = GateMask::from_label(variant);
    } else if (suite == "layers") {
      cfg.model.be_layer_count = std::stoi(variant);
    } else if (suite == "init") {
      cfg.model.init_scheme = variant.find('O') != std::string::npos ? InitScheme::orthogonal
                                                                     : InitScheme::random_sign;
      const size_t open = variant.find("1e-");
      cfg.model.ortho_lambda = open == std::string::npos ? 0.0
                                                         : std::stod(variant.substr(open, 4));
    }
    std::vector<SeedOutcome> outcomes = run_experiment(cfg);
    Row row;
    row.variant = variant;
    row.params = outcomes.front().report.param_count;
    for (auto& [name, field] : scalar_fields()) {
      std::vector<double> vals;
      for (const auto& o : outcomes)
        if (!std::isnan(o.report.*field)) vals.push_back(o.report.*field);
      if (!vals.empty()) row.metrics[name] = mean_se(vals);
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::string> metric_names;
  for (auto& [name, ms] : rows.front().metrics) metric_names.push_back(name);
  std::ostringstream csv, md;
  csv.precision(10);
  md.precision(5);
  csv << "variant,param_count";
  for (const auto& m : metric_names) csv << "," << m << "_mean," << m << "_se";
  csv << "\n";
  md << "| variant | params |";
  for (const auto& m : metric_names) md << " " << m << " |";
  md << "\n|---|---|";
  for (size_t i = 0; i < metric_names.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& row : rows) {
    csv << row.variant << "," << row.params;
    md << "| " << row.variant << " | " << row.params << " |";
    for (const auto& m : metric_names) {
      const auto it = row.metrics.find(m);
      if (it == row.metrics.end()) {
        csv << ",,";
        md << " - |";
      } else {
        csv << "," << it->second.mean << "," << it->second.se;
        md << " " << it->second.mean << " +- " << it->second.se << " |";
      }
    }
    csv << "\n";
    md << "\n";
  }
  write_file(base.output_dir + "/" + suite + "_ablation.csv", csv.str());
  write_file(base.output_dir + "/" + suite + "_ablation.md", md.str());
}

void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  fs::create_directories(out_dir);
  struct Run {
    std::string dir, dataset, method;
    bool shift = false;
    size_t seed_count = 0;
    std::map<std::string, MeanSe> metrics;
    std::map<std::string, MeanSe> decomposition;
  };
  std::vector<Run> runs;
  std::vector<std::string> missing;
  std::vector<std::string> warnings;

  for (const std::string& dir : run_dirs) {
    if (!fs::exists(dir + "/config.json")) {
      missing.push_back(dir);
      continue;
    }
    ExperimentConfig cfg = ExperimentConfig::from_json_file(dir + "/config.json");
    Run run;
    run.dir = dir;
    run.dataset = cfg.dataset.label();
    run.method = to_string(cfg.model.method);
    run.shift = cfg.shift;
    std::vector<MetricsReport> reports;
    for (uint64_t seed : cfg.seeds) {
      const std::string path = dir + "/metrics_seed_" + std::to_string(seed) + ".json";
      if (!fs::exists(path)) continue;
      std::ifstream in(path);
      std::stringstream ss;
      ss << in.rdbuf();
      reports.push_back(MetricsReport::from_json_string(ss.str()));
    }
    if (reports.empty()) {
      missing.push_back(dir);
      continue;
    }
    run.seed_count = reports.size();
    auto put = [&](const std::string& name, auto getter) {
      std::vector<double> vals;
      for (const auto& r : reports) {
        const double v = getter(r);
        if (!std::isnan(v)) vals.push_back(v);
      }
      if (!vals.empty()) run.metrics[name] = mean_se(vals);
    };
    for (auto& [name, field] : scalar_fields())
      put(name, [field](const MetricsReport& r) { return r.*field; });
    auto put_dec = [&](const std::string& name, auto getter) {
      std::vector<double> vals;
      for (const auto& r : reports) vals.push_back(getter(r));
      run.decomposition[name] = mean_se(vals);
    };
    put_dec("total", [](const MetricsReport& r) { return r.decomposition.total; });
    put_dec("aleatoric", [](const MetricsReport& r) { return r.decomposition.aleatoric; });
    put_dec("epistemic", [](const MetricsReport& r) { return r.decomposition.epistemic; });
    runs.push_back(std::move(run));
  }

  for (size_t i = 0; i < runs.size(); ++i)
    for (size_t j = i + 1; j < runs.size(); ++j)
      if (runs[i].seed_count != runs[j].seed_count)
        warnings.push_back("seed counts differ: " + runs[i].dir + " has " +
                           std::to_string(runs[i].seed_count) + ", " + runs[j].dir + " has " +
                           std::to_string(runs[j].seed_count));

  std::ostringstream md, csv;
  md.precision(5);
  csv.precision(10);
  for (const auto& w : warnings) md << "> warning: " << w << "\n";
  for (const auto& m : missing) md << "> missing run: " << m << "\n";
  if (!warnings.empty() || !missing.empty()) md << "\n";

  csv << "dataset,method,shift,metric,mean,se\n";
  md << "| dataset | method | shift | metric | mean +- se |\n|---|---|---|---|---|\n";
  for (const auto& run : runs)
    for (const auto& [name, ms] : run.metrics) {
      csv << run.dataset << "," << run.method << "," << (run.shift ? 1 : 0) << "," << name << ","
          << ms.mean << "," << ms.se << "\n";
      md << "| " << run.dataset << " | " << run.method << " | " << (run.shift ? "yes" : "no")
         << " | " << name << " | " << ms.mean << " +- " << ms.se << " |\n";
    }

  // uncertainty decomposition table with shift - id deltas
  md << "\n## Uncertainty decomposition (ID vs shift)\n\n";
  md << "| dataset | method | total ID | aleatoric ID | epistemic ID | total shift | aleatoric "
        "shift | epistemic shift | d total | d aleatoric | d epistemic |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
  std::ostringstream dec_csv;
  dec_csv.precision(10);
  dec_csv << "dataset,method,component,id,shift,delta\n";
  for (const auto& id_run : runs) {
    if (id_run.shift) continue;
    const std::string base_dataset = id_run.dataset;
    for (const auto& shift_run : runs) {
      if (!shift_run.shift || shift_run.method != id_run.method) continue;
      if (shift_run.dataset != base_dataset + "/shift" && shift_run.dataset != base_dataset)
        continue;
      md << "| " << base_dataset << " | " << id_run.method;
      for (const char* comp : {"total", "aleatoric", "epistemic"})
        md << " | " << id_run.decomposition.at(comp).mean;
      for (const char* comp : {"total", "aleatoric", "epistemic"})
        md << " | " << shift_run.decomposition.at(comp).mean;
      for (const char* comp : {"total", "aleatoric", "epistemic"}) {
        const double delta =
            shift_run.decomposition.at(comp).mean - id_run.decomposition.at(comp).mean;
        md << " | " << delta;
        dec_csv << base_dataset << "," << id_run.method << "," << comp << ","
                << id_run.decomposition.at(comp).mean << ","
                << shift_run.decomposition.at(comp).mean << "," << delta << "\n";
      }
      md << " |\n";
    }
  }
  write_file(out_dir + "/report.md", md.str());
  write_file(out_dir + "/report.csv", csv.str());
  write_file(out_dir + "/decomposition.csv", dec_csv.str());
}

}  // namespace batchens
