#pragma once

#include <vector>

#include "batchens/tape.hpp"

namespace batchens {

// Gaussian negative log-likelihood without the (1/2)log(2*pi) constant:
//   mean over elements of  (1/2) logvar + (y - mu)^2 / (2 exp(logvar)).
// The constant-free form is the training objective; evaluation-side NLL
// (metrics module) includes the full normalization and is labeled so.
Var gaussian_nll(Pass& pass, Var mu, Var logvar, Var y);

// Categorical negative log-likelihood over probability rows: mean of
// -log p(true class), probabilities floored at 1e-12 inside the log.
// labels are 0-based class indices.
Var categorical_nll(Pass& pass, Var probs, const std::vector<int>& labels);

// Mean of the per-member losses plus the sum of penalty terms; one
// backward pass from the result aggregates shared-weight gradients over
// members while adapter gradients stay member-local.
Var ensemble_loss(Pass& pass, const std::vector<Var>& member_losses,
                  const std::vector<Var>& penalties = {});

// Moment-matched single Gaussian for a uniform K-component mixture:
//   mu*    = (1/K) sum mu_k
//   sigma2* = (1/K) sum (sigma2_k + mu_k^2) - mu*^2
struct GaussianMixtureMoments {
  double mean = 0.0;
  double variance = 0.0;
};
GaussianMixtureMoments aggregate_gaussian(const std::vector<double>& member_means,
                                          const std::vector<double>& member_variances);

// Element-wise mean of per-member probability rows; stays a distribution.
std::vector<double> aggregate_categorical(const std::vector<std::vector<double>>& member_probs);

}  // namespace batchens
