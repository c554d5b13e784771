#include <doctest.h>

#include <cmath>

#include "batchens/errors.hpp"
#include "batchens/losses.hpp"
#include "batchens/metrics.hpp"
#include "batchens/rng.hpp"

using namespace batchens;

TEST_CASE("coverage grid") {
  CoverageGrid g = CoverageGrid::make_default();
  CHECK(g.size() == 39);
  CHECK(g.levels.front() == doctest::Approx(0.025));
  CHECK(g.levels.back() == doctest::Approx(0.975));
  for (size_t j = 1; j < g.size(); ++j)
    CHECK(g.levels[j] - g.levels[j - 1] == doctest::Approx(0.025));
}

TEST_CASE("normal_quantile against reference values") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(normal_quantile(0.84134474606854293) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(normal_quantile(0.0013498980316300933) == doctest::Approx(-3.0).epsilon(1e-8));
  CHECK_THROWS_AS(normal_quantile(0.0), ContractError);
}

TEST_CASE("brier score hand values") {
  SUBCASE("perfect one-hot") {
    CHECK(brier_score({1.0, 0.0}, 2, {0}) == doctest::Approx(0.0));
  }
  SUBCASE("uniform over two classes") {
    CHECK(brier_score({0.5, 0.5}, 2, {1}) == doctest::Approx(0.5));
  }
  SUBCASE("0.8/0.2 on the true class") {
    CHECK(brier_score({0.8, 0.2}, 2, {0}) == doctest::Approx(0.08));
  }
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(brier_score({0.5, 0.5}, 2, {2}), DataError);
  }
}

TEST_CASE("expected calibration error hand values") {
  SUBCASE("confident and always right") {
    std::vector<double> probs = {1.0, 0.0, 1.0, 0.0};
    CHECK(expected_calibration_error(probs, 2, {0, 0}, 15) == doctest::Approx(0.0));
  }
  SUBCASE("one sample, confidence 0.8, correct") {
    CHECK(expected_calibration_error({0.8, 0.2}, 2, {0}, 15) == doctest::Approx(0.2));
  }
  SUBCASE("two samples one bin, one correct") {
    std::vector<double> probs = {0.8, 0.2, 0.8, 0.2};
    CHECK(expected_calibration_error(probs, 2, {0, 1}, 15) == doctest::Approx(0.3));
  }
  SUBCASE("bounded by one") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> probs;
      std::vector<int> labels;
      for (int i = 0; i < 50; ++i) {
        double p = rng.uniform(0.0, 1.0);
        probs.push_back(p);
        probs.push_back(1.0 - p);
        labels.push_back(static_cast<int>(rng.below(2)));
      }
      const double e = expected_calibration_error(probs, 2, labels, 15);
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
    }
  }
}

TEST_CASE("coverage curve") {
  CoverageGrid grid = CoverageGrid::make_default();
  SUBCASE("targets equal to the mean are always covered") {
    std::vector<double> mu(50, 1.0), var(50, 0.25), y(50, 1.0);
    auto emp = coverage_curve(mu, var, y, grid);
    for (double v : emp) CHECK(v == 1.0);
  }
  SUBCASE("tiny variance with off-mean targets is never covered") {
    std::vector<double> mu(50, 0.0), var(50, 1e-30), y(50, 1.0);
    auto emp = coverage_curve(mu, var, y, grid);
    for (double v : emp) CHECK(v == 0.0);
  }
  SUBCASE("self-consistency on the model's own distribution") {
    Rng rng(5);
    const int n = 20000;
    std::vector<double> mu(n), var(n), y(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = rng.uniform(-2.0, 2.0);
      const double sd = rng.uniform(0.2, 1.5);
      var[i] = sd * sd;
      y[i] = mu[i] + sd * rng.normal();
    }
    auto emp = coverage_curve(mu, var, y, grid);
    for (size_t j = 0; j < grid.size(); ++j) CHECK(std::abs(emp[j] - grid.levels[j]) < 0.02);
    CalibrationErrors cal = rmsce_and_area(emp, grid);
    CHECK(cal.rmsce < 0.02);
    CHECK(cal.miscalibration_area < 0.02);
  }
  SUBCASE("nonpositive variance rejected") {
    CHECK_THROWS_AS(coverage_curve({0.0}, {0.0}, {0.0}, grid), ContractError);
  }
}

TEST_CASE("rmsce and miscalibration area") {
  CoverageGrid grid = CoverageGrid::make_default();
  SUBCASE("perfect calibration scores zero") {
    CalibrationErrors cal = rmsce_and_area(grid.levels, grid);
    CHECK(cal.rmsce == doctest::Approx(0.0));
    CHECK(cal.miscalibration_area == doctest::Approx(0.0));
  }
  SUBCASE("constant +0.1 offset") {
    std::vector<double> emp;
    for (double v : grid.levels) emp.push_back(v + 0.1);
    CalibrationErrors cal = rmsce_and_area(emp, grid);
    CHECK(cal.rmsce == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(cal.miscalibration_area == doctest::Approx(0.1 * (0.975 - 0.025)).epsilon(1e-12));
  }
  SUBCASE("single-point grid integrates to zero area") {
    CoverageGrid g;
    g.levels = {0.5};
    CalibrationErrors cal = rmsce_and_area({0.62}, g);
    CHECK(cal.rmsce == doctest::Approx(0.12));
    CHECK(cal.miscalibration_area == 0.0);
  }
}

TEST_CASE("regression decomposition") {
  SUBCASE("identical members have zero epistemic term") {
    Decomposition d = decompose_regression_sample({0.5, 0.5, 0.5}, {0.2, 0.2, 0.2});
    CHECK(d.epistemic == doctest::Approx(0.0));
    CHECK(d.total == doctest::Approx(0.2));
  }
  SUBCASE("hand value mu=(0,2), var=(1,1)") {
    Decomposition d = decompose_regression_sample({0.0, 2.0}, {1.0, 1.0});
    CHECK(d.aleatoric == doctest::Approx(1.0));
    CHECK(d.epistemic == doctest::Approx(1.0));
    CHECK(d.total == doctest::Approx(2.0));
  }
  SUBCASE("additivity and agreement with the mixture variance") {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
      const int K = 1 + static_cast<int>(rng.below(10));
      std::vector<double> mus(K), vars(K);
      for (int k = 0; k < K; ++k) {
        mus[k] = rng.uniform(-3.0, 3.0);
        vars[k] = rng.uniform(0.05, 2.0);
      }
      Decomposition d = decompose_regression_sample(mus, vars);
      CHECK(std::abs(d.total - (d.aleatoric + d.epistemic)) <= 1e-12);
      CHECK(d.epistemic >= 0.0);
      GaussianMixtureMoments agg = aggregate_gaussian(mus, vars);
      CHECK(std::abs(d.total - agg.variance) <= 1e-12 * std::max(1.0, agg.variance));
    }
  }
  SUBCASE("additive structure of reported rows") {
    // decomposition emits components whose sum is the reported total,
    // e.g. 0.013 = 0.012 + 0.001
    Decomposition d = decompose_regression_sample({-std::sqrt(0.001), std::sqrt(0.001)},
                                                  {0.012, 0.012});
    CHECK(d.aleatoric == doctest::Approx(0.012));
    CHECK(d.epistemic == doctest::Approx(0.001));
    CHECK(d.total == doctest::Approx(0.013));
  }
}

TEST_CASE("classification decomposition") {
  SUBCASE("identical members have zero epistemic term") {
    Decomposition d = decompose_classification_sample({{0.7, 0.3}, {0.7, 0.3}});
    CHECK(d.epistemic == doctest::Approx(0.0));
  }
  SUBCASE("fully disagreeing members") {
    Decomposition d = decompose_classification_sample({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(d.total == doctest::Approx(std::log(2.0)));
    CHECK(d.aleatoric == doctest::Approx(0.0));
    CHECK(d.epistemic == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("uniform members over C classes") {
    const int C = 5;
    std::vector<std::vector<double>> members(3, std::vector<double>(C, 1.0 / C));
    Decomposition d = decompose_classification_sample(members);
    CHECK(d.aleatoric == doctest::Approx(std::log(static_cast<double>(C))));
    CHECK(d.epistemic == doctest::Approx(0.0));
  }
  SUBCASE("epistemic nonnegative and additive on random members") {
    Rng rng(9);
    for (int t = 0; t < 100; ++t) {
      const int K = 1 + static_cast<int>(rng.below(8));
      std::vector<std::vector<double>> members;
      for (int k = 0; k < K; ++k) {
        std::vector<double> row(3);
        double s = 0.0;
        for (double& v : row) {
          v = rng.uniform(0.01, 1.0);
          s += v;
        }
        for (double& v : row) v /= s;
        members.push_back(row);
      }
      Decomposition d = decompose_classification_sample(members);
      CHECK(d.epistemic >= 0.0);
      CHECK(std::abs(d.total - (d.aleatoric + d.epistemic)) <= 1e-12);
    }
  }
}

TEST_CASE("selective curve") {
  SUBCASE("full coverage equals the global metric") {
    std::vector<double> sq = {0.0, 1.0, 4.0, 9.0};
    std::vector<double> unc = {0.1, 0.2, 0.3, 0.4};
    SelectiveCurve c = selective_curve(sq, unc, SelectiveMetric::rmse, {1.0});
    CHECK(c.value[0] == doctest::Approx(std::sqrt((0.0 + 1.0 + 4.0 + 9.0) / 4.0)));
  }
  SUBCASE("half coverage keeps the two most certain samples") {
    // errors (0,1,2,3) with matching uncertainty order: gamma=0.5 keeps
    // errors 0 and 1 -> rmse sqrt(0.5)
    std::vector<double> sq = {0.0, 1.0, 4.0, 9.0};
    std::vector<double> unc = {0.0, 1.0, 2.0, 3.0};
    SelectiveCurve c = selective_curve(sq, unc, SelectiveMetric::rmse, {0.5});
    CHECK(c.value[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  }
  SUBCASE("ties broken by sample index") {
    std::vector<double> correct = {1.0, 0.0, 1.0, 0.0};
    std::vector<double> unc(4, 0.5);
    SelectiveCurve c =
        selective_curve(correct, unc, SelectiveMetric::accuracy, {0.25, 0.5, 0.75, 1.0});
    CHECK(c.value[0] == doctest::Approx(1.0));
    CHECK(c.value[1] == doctest::Approx(0.5));
    CHECK(c.value[2] == doctest::Approx(2.0 / 3.0));
    CHECK(c.value[3] == doctest::Approx(0.5));
  }
  SUBCASE("ceil selection never empties") {
    std::vector<double> sq = {1.0, 2.0};
    std::vector<double> unc = {0.1, 0.2};
    SelectiveCurve c = selective_curve(sq, unc, SelectiveMetric::rmse, {0.01});
    CHECK(c.value[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
}

TEST_CASE("evaluation nll approaches the entropy rate on self-generated data") {
  Rng rng(11);
  const int n = 50000;
  std::vector<double> mu(n), var(n), y(n);
  double expected_entropy = 0.0;
  for (int i = 0; i < n; ++i) {
    mu[i] = rng.uniform(-1.0, 1.0);
    const double sd = rng.uniform(0.3, 1.2);
    var[i] = sd * sd;
    y[i] = mu[i] + sd * rng.normal();
    expected_entropy += 0.5 * std::log(2.0 * M_PI * M_E * var[i]);
  }
  expected_entropy /= n;
  const double nll = regression_nll(mu, var, y, true);
  CHECK(std::abs(nll - expected_entropy) / std::abs(expected_entropy) < 0.02);
}

TEST_CASE("training-form vs evaluation nll differ by the constant") {
  std::vector<double> mu = {0.0, 1.0};
  std::vector<double> var = {1.0, 0.5};
  std::vector<double> y = {0.2, 0.8};
  const double full = regression_nll(mu, var, y, true);
  const double bare = regression_nll(mu, var, y, false);
  CHECK(full - bare == doctest::Approx(0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("metrics report json round trip") {
  MetricsReport r;
  r.dataset = "toy";
  r.method = "batch_ensemble";
  r.task = "regression";
  r.seed = 42;
  r.param_count = 1234;
  r.rmse = 0.125;
  r.nll = -0.5;
  r.nll_no_const = -1.41;
  r.accuracy = std::nan("");
  r.decomposition = {0.013, 0.012, 0.001};
  r.cov_nominal = {0.1, 0.9};
  r.cov_empirical = {0.12, 0.88};
  r.selective.coverage = {0.5, 1.0};
  r.selective.value = {0.1, 0.2};
  MetricsReport back = MetricsReport::from_json_string(r.to_json_string());
  CHECK(back.dataset == "toy");
  CHECK(back.seed == 42);
  CHECK(back.rmse == 0.125);
  CHECK(back.decomposition.epistemic == 0.001);
  CHECK(back.cov_empirical == r.cov_empirical);
  CHECK(back.selective.value == r.selective.value);
  CHECK(std::isnan(back.accuracy));

  const std::string csv = metrics_to_csv(r);
  CHECK(csv.find("rmse,0.125") != std::string::npos);
  CHECK(csv.find("coverage_0.1,0.12") != std::string::npos);
}
