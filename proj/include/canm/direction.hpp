#pragma once

// Bidirectional scoring: marginal log-density of the hypothetical cause plus
// the conditional ELBO of the best latent dimension, compared with a margin.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "canm/common.hpp"
#include "canm/model.hpp"

namespace canm::direction {

/// One-dimensional Gaussian mixture.
struct GmmDensity {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t components() const noexcept { return weights.size(); }
  double log_density(double x) const;
  double mean_log_density(std::span<const double> xs) const;
  /// -2 log L + (3k - 1) log n
  double bic(std::span<const double> xs) const;
};

struct GmmFitOptions {
  std::size_t max_components = 5;
  std::size_t max_iterations = 500;
  std::size_t max_restarts = 5;
  double tolerance = 1e-9;
  std::uint64_t seed = 0;
};

/// EM fit of a k-component mixture, restarting with jittered means when a
/// component collapses. Throws NumericError after max_restarts collapses.
GmmDensity fit_gmm(std::span<const double> samples, std::size_t k, const GmmFitOptions& opt = {});

/// Mixture with the component count chosen by BIC over 1..max_components.
/// Counts whose EM keeps collapsing are skipped.
GmmDensity fit_marginal(std::span<const double> samples, const GmmFitOptions& opt = {});

struct DirectionConfig {
  vae::TrainConfig train;
  std::size_t k_max = 1;
  double delta = 0.01;
  std::size_t threads = 1;
};

struct DirectionScore {
  double score = 0.0;        // marginal + conditional, nats per point
  double marginal = 0.0;     // mean log p(cause)
  double conditional = 0.0;  // ELBO of the refitted model on the full data
  std::size_t latent_dim = 0;
  std::vector<double> per_k_scores;
  vae::CanmModel model;
};

/// Scores cause -> effect on a standardized pair (cause = pair.x()).
DirectionScore score_direction(const vae::PairDataset& pair, const DirectionConfig& cfg);

/// Forward if l_xy > l_yx + delta, Backward if l_xy < l_yx - delta, else Undecided.
Verdict decide(double l_xy, double l_yx, double delta);

struct DirectionReport {
  std::string method = "canm";
  double l_xy = 0.0;
  double l_yx = 0.0;
  double delta = 0.0;
  Verdict verdict = Verdict::undecided;
  std::size_t k_xy = 0;
  std::size_t k_yx = 0;
  std::vector<double> per_k_xy;
  std::vector<double> per_k_yx;
  std::uint64_t seed = 0;
  std::size_t points = 0;
  double runtime_seconds = 0.0;  // not serialized; machine output stays byte-stable

  double margin() const noexcept { return l_xy - l_yx; }
};

DirectionReport infer(const vae::PairDataset& pair, const DirectionConfig& cfg);

nlohmann::json report_to_json(const DirectionReport& r);
DirectionReport report_from_json(const nlohmann::json& j);

}  // namespace canm::direction
