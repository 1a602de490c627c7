#pragma once

// Cascade additive noise model fitted as a variational auto-encoder.
//
// The encoder maps (x, y) to a diagonal Gaussian posterior over K latent noises
// n; the decoder maps (x, n) to a prediction of y, and the residual
// y - f(x, n) is scored under a Gaussian with one learned log-variance. With
// K == 0 there is no encoder and the model is a plain additive noise
// regression of y on x.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "canm/diffcore.hpp"

namespace canm::vae {

using diffcore::Matrix;

struct Standardization {
  double mean_x = 0.0;
  double std_x = 1.0;
  double mean_y = 0.0;
  double std_y = 1.0;
};

/// Paired observations, centered and scaled to unit (population) variance.
class PairDataset {
 public:
  /// Throws DataError on length mismatch, fewer than 2 points, non-finite
  /// values, or a zero-variance column.
  static PairDataset standardize(std::span<const double> x, std::span<const double> y);

  std::size_t size() const noexcept { return x_.size(); }
  const std::vector<double>& x() const noexcept { return x_; }
  const std::vector<double>& y() const noexcept { return y_; }
  const Standardization& standardization() const noexcept { return standardization_; }

  /// Same data with the roles of x and y exchanged.
  PairDataset swapped() const;
  /// Rows at `indices`, keeping the parent's standardization metadata.
  PairDataset subset(std::span<const std::size_t> indices) const;

 private:
  PairDataset(std::vector<double> x, std::vector<double> y, Standardization s)
      : x_(std::move(x)), y_(std::move(y)), standardization_(s) {}

  std::vector<double> x_;
  std::vector<double> y_;
  Standardization standardization_;
};

struct ArchConfig {
  std::vector<std::size_t> encoder_hidden{32, 32};
  std::vector<std::size_t> decoder_hidden{32, 32};
  diffcore::Activation activation = diffcore::Activation::tanh;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::size_t mc_samples = 5;
  // Monte-Carlo samples for held-out and final scoring.
  std::size_t eval_mc_samples = 20;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 20;
  std::size_t max_recoveries = 3;
  ArchConfig arch;

  void validate() const;
};

/// One fitted direction. Parameter blocks: "enc.*" (absent when K == 0),
/// "dec.*", and the 1x1 "log_var_eps".
struct CanmModel {
  std::size_t latent_dim = 0;
  diffcore::MlpSpec encoder;
  diffcore::MlpSpec decoder;
  diffcore::ParamStore params;

  static CanmModel create(std::size_t latent_dim, const ArchConfig& arch, std::uint64_t seed);

  bool has_encoder() const noexcept { return latent_dim > 0; }
  double log_var_eps() const { return params.value("log_var_eps")(0, 0); }
};

struct LatentPosterior {
  Matrix mu;     // m x K
  Matrix sigma;  // m x K, strictly positive
};

struct ElboParts {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Per-point decomposition: total_i = recon_i - kl_i.
struct PointwiseElbo {
  std::vector<double> recon;
  std::vector<double> kl;
};

/// KL(N(mu, diag(exp(log_var))) || N(0, I)).
double gaussian_kl(std::span<const double> mu, std::span<const double> log_var);

/// mu + exp(0.5*log_var) * u, elementwise.
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> log_var,
                                   std::span<const double> u);

/// Standard-normal draws for `samples` reparameterized passes over `batch`
/// points; row l*batch + i holds the draw for point i in pass l.
Matrix draw_noise(std::size_t batch, std::size_t samples, std::size_t latent_dim, Rng& rng);

/// Conditional ELBO averaged over the batch, with the reconstruction
/// expectation estimated from `samples` reparameterized draws. The log p(x)
/// term of the full score is not included.
ElboParts elbo(CanmModel& model, std::span<const double> x, std::span<const double> y, std::size_t samples,
               Rng& rng);
PointwiseElbo elbo_pointwise(CanmModel& model, std::span<const double> x, std::span<const double> y,
                             std::size_t samples, Rng& rng);

/// Records the negative batch ELBO on `tape`; `noise` comes from draw_noise.
diffcore::Var negative_elbo(diffcore::Tape& tape, CanmModel& model, const Matrix& x, const Matrix& y,
                            const Matrix& noise, std::size_t samples);

/// Deterministic score: ELBO with noise drawn from a stream derived from `seed`.
ElboParts evaluate(CanmModel& model, const PairDataset& data, std::size_t samples, std::uint64_t seed);

struct TrainResult {
  CanmModel model;
  std::vector<double> trace;  // validation ELBO after each epoch
  double best_score = 0.0;
  std::size_t best_epoch = 0;
  std::size_t recoveries = 0;
};

/// Fits a model with `latent_dim` noises, returning the parameter snapshot
/// with the best validation ELBO. Without a validation set the training data
/// itself is used for snapshot selection.
TrainResult train(const PairDataset& data, std::size_t latent_dim, const TrainConfig& cfg);
TrainResult train(const PairDataset& data, const PairDataset& validation, std::size_t latent_dim,
                  const TrainConfig& cfg);

/// Encoder means and standard deviations; throws Error if the model has no latent noise.
LatentPosterior posterior(CanmModel& model, const PairDataset& data);

struct LatentSelection {
  std::size_t best_k = 0;
  std::vector<double> test_scores;  // one per K in 0..k_max
};

/// 80/20 split, one model per K in 0..k_max, picks the smallest K whose
/// held-out ELBO is within `tie_tolerance` of the best. `threads` > 1 trains
/// candidates concurrently with identical results.
LatentSelection select_latent_dim(const PairDataset& data, std::size_t k_max, const TrainConfig& cfg,
                                  std::size_t threads = 1, double tie_tolerance = 0.01);

nlohmann::json model_to_json(const CanmModel& model, const Standardization& standardization);
CanmModel model_from_json(const nlohmann::json& j, Standardization* standardization = nullptr);

}  // namespace canm::vae
