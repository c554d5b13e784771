#include "batchens/losses.hpp"

#include <cmath>

#include "batchens/errors.hpp"

namespace batchens {

Var gaussian_nll(Pass& pass, Var mu, Var logvar, Var y) {
  const Tensor& mv = pass.tape.value(mu);
  const Tensor& lv = pass.tape.value(logvar);
  const Tensor& yv = pass.tape.value(y);
  if (!mv.same_shape(lv) || !mv.same_shape(yv))
    throw ShapeError("gaussian_nll: mu/logvar/y shapes disagree");
  if (!mv.all_finite() || !lv.all_finite() || !yv.all_finite())
    throw NumericError("gaussian_nll: non-finite input");
  Var resid = sub(y, mu);
  Var sq = mul(resid, resid);
  // (y-mu)^2 * exp(-logvar) / 2 + logvar / 2
  Var fit = mul(sq, exp_(scale(logvar, -1.0)));
  return mean(add(scale(logvar, 0.5), scale(fit, 0.5)));
}

Var categorical_nll(Pass& pass, Var probs, const std::vector<int>& labels) {
  const Tensor& pv = pass.tape.value(probs);
  const int n = pv.rows(), c = pv.cols();
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("categorical_nll: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw DataError("categorical_nll: label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " outside [0," + std::to_string(c) + ")");
    double rowsum = 0.0;
    for (int j = 0; j < c; ++j) rowsum += pv.at(i, j);
    if (std::abs(rowsum - 1.0) > 1e-3)
      throw DataError("categorical_nll: row " + std::to_string(i) + " sums to " +
                      std::to_string(rowsum));
  }
  Var picked = pick_cols(probs, labels);
  return scale(mean(log_(clamp_min(picked, 1e-12))), -1.0);
}

Var ensemble_loss(Pass& pass, const std::vector<Var>& member_losses,
                  const std::vector<Var>& penalties) {
  if (member_losses.empty()) throw ContractError("ensemble_loss: no member losses");
  Var total = member_losses[0];
  for (size_t k = 1; k < member_losses.size(); ++k) total = add(total, member_losses[k]);
  total = scale(total, 1.0 / static_cast<double>(member_losses.size()));
  for (const Var& p : penalties) total = add(total, p);
  const double v = pass.tape.value(total).item();
  if (!std::isfinite(v)) throw NumericError("ensemble_loss: non-finite loss " + std::to_string(v));
  return total;
}

GaussianMixtureMoments aggregate_gaussian(const std::vector<double>& member_means,
                                          const std::vector<double>& member_variances) {
  if (member_means.empty() || member_means.size() != member_variances.size())
    throw ContractError("aggregate_gaussian: bad member arrays");
  const double k = static_cast<double>(member_means.size());
  double mu = 0.0;
  for (double m : member_means) mu += m;
  mu /= k;
  double second = 0.0;
  for (size_t i = 0; i < member_means.size(); ++i) {
    if (member_variances[i] <= 0.0)
      throw ContractError("aggregate_gaussian: member variance must be positive");
    second += member_variances[i] + member_means[i] * member_means[i];
  }
  double var = second / k - mu * mu;
  if (var < 0.0) var = 0.0;  // guards tiny negative round-off
  return {mu, var};
}

std::vector<double> aggregate_categorical(const std::vector<std::vector<double>>& member_probs) {
  if (member_probs.empty()) throw ContractError("aggregate_categorical: no members");
  const size_t c = member_probs[0].size();
  std::vector<double> avg(c, 0.0);
  for (const auto& row : member_probs) {
    if (row.size() != c) throw ShapeError("aggregate_categorical: ragged member rows");
    for (size_t j = 0; j < c; ++j) avg[j] += row[j];
  }
  for (double& v : avg) v /= static_cast<double>(member_probs.size());
  return avg;
}

}  // namespace batchens
