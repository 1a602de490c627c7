#pragma once

// Checks for the identifiability results of the cascade model.
//
// Linear Gaussian case: Y = aX + bN + e with X, N, e ~ N(0,1) admits a
// backward model X = cY + dN' + e' with c = a/s and d = a/sqrt(s), where
// s = a^2 + b^2 + 1. The hidden N' is not given, so verify_backward builds
// one from the residual X - cY:
//
//   R  = X - cY                       (independent of Y, variance (b^2+1)/s)
//   W  = unit-variance combination of (X, N, e) orthogonal to both Y and R
//   N' = (d / var R) R + sqrt(1 - d^2 / var R) W
//   e' = X - cY - dN' = R - dN'
//
// N' has unit variance and cov(e', N') = 0, so e' is independent of Y and N'.
// Its variance is (b^2 + 1 - a^2)/s, which is 1 only when a = 0. The
// construction needs d^2 <= var R, i.e. a^2 <= b^2 + 1; outside that range N'
// falls back to the standardized R and e' is no longer independent of N'.
//
// K = 0: without latent noise the conditional ELBO is exactly the Gaussian
// additive-noise log-likelihood of the decoder's regression.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "canm/direction.hpp"
#include "canm/model.hpp"

namespace canm::theory {

struct LinearGaussianSpec {
  double a = 1.0;
  double b = 1.0;
};

struct BackwardModel {
  double c = 0.0;               // coefficient of Y
  double d = 0.0;               // coefficient of N'
  double noise_variance = 1.0;  // variance of e' as stated for the closed form
};

BackwardModel backward_coeffs(const LinearGaussianSpec& spec);

/// Variance of e' that actually makes the backward model hold with unit
/// variance X and N': (b^2 + 1 - a^2) / (a^2 + b^2 + 1). Negative when no
/// such decomposition exists.
double consistent_noise_variance(const LinearGaussianSpec& spec);

struct LinearGaussianSample {
  std::vector<double> x, n, eps, y;
};

LinearGaussianSample simulate(const LinearGaussianSpec& spec, std::size_t m, std::uint64_t seed);

struct BackwardCheck {
  BackwardModel model;
  bool realizable = true;  // a^2 <= b^2 + 1
  double p_eps_y = 1.0;     // HSIC permutation p-value for (e', Y)
  double p_eps_nhat = 1.0;  // HSIC permutation p-value for (e', N')
  double eps_mean = 0.0;
  double eps_variance = 0.0;
  double claimed_variance = 1.0;
  double consistent_variance = 1.0;
  double corr_xy = 0.0;
  std::size_t points = 0;
};

/// Requires m >= 20; results below m = 500 have little power.
BackwardCheck verify_backward(const LinearGaussianSpec& spec, std::size_t m, std::uint64_t seed,
                              std::size_t permutations = 200);

/// |L_fwd - L_bwd| from the full direction pipeline on simulated linear
/// Gaussian data (seeded by cfg.train.seed). Requires m >= 50; estimates below
/// m = 1000 are noisy.
double nonidentifiability_gap(const LinearGaussianSpec& spec, std::size_t m, const direction::DirectionConfig& cfg);

/// Gaussian additive-noise log-likelihood log N(y_i; f(x_i), exp(log_var_eps))
/// of a K = 0 model, evaluated with plain loops over the decoder weights.
std::vector<double> anm_loglik(const vae::CanmModel& model, std::span<const double> x, std::span<const double> y);

/// Max per-point |ELBO_i - anm_loglik_i| for a K = 0 model.
double k0_deviation(vae::CanmModel& model, const vae::PairDataset& data);

/// Fits a K = 0 model on `data` and returns k0_deviation of the fit.
double k0_equivalence(const vae::PairDataset& data, const vae::TrainConfig& cfg);

struct Claim {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string note;
};

nlohmann::json claim_to_json(const Claim& c);

}  // namespace canm::theory
