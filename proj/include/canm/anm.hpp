#pragma once

// Additive-noise-model baseline: regress each variable on the other with
// Gaussian kernel ridge regression and test the residual for independence
// from the hypothetical cause with HSIC.

#include <cstdint>
#include <span>
#include <vector>

#include "canm/common.hpp"
#include "canm/direction.hpp"
#include "canm/kernels.hpp"
#include "canm/model.hpp"

namespace canm::anm {

struct KernelRidgeModel {
  std::vector<double> inputs;
  std::vector<double> alpha;
  double bandwidth = 1.0;
  double lambda = 1.0;

  double predict(double x) const;
  std::vector<double> predict(std::span<const double> xs) const;
};

std::vector<double> default_lambda_grid();  // 1e-4 .. 1, log-spaced, 5 values

struct KernelRidgeOptions {
  std::vector<double> lambda_grid = default_lambda_grid();
  std::size_t folds = 5;
  // Cross-validation runs on at most this many evenly strided points.
  std::size_t cv_max_points = 1000;
};

/// Gaussian-kernel ridge regression, bandwidth from the median heuristic,
/// ridge chosen by k-fold cross-validation. Solves (K + lambda I) alpha = y.
KernelRidgeModel kr_fit(std::span<const double> x, std::span<const double> y, const KernelRidgeOptions& opt = {});

struct HsicResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
};

/// Biased HSIC V-statistic trace(K H L H) / m^2 with median-heuristic Gaussian
/// kernels and a permutation p-value (1 + #{perm >= observed}) / (1 + permutations).
/// Symmetric: hsic(a, b) and hsic(b, a) run the identical computation.
HsicResult hsic(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                std::uint64_t seed, bool use_parallel = true);

enum class Mode { statistic, significance };

struct AnmConfig {
  std::size_t permutations = 200;
  double alpha = 0.01;
  std::uint64_t seed = 0;
  KernelRidgeOptions regression;
};

struct AnmResult {
  HsicResult forward;   // HSIC(x, y - f(x))
  HsicResult backward;  // HSIC(y, x - g(y))
  Verdict statistic_verdict = Verdict::undecided;
  Verdict significance_verdict = Verdict::undecided;

  Verdict verdict(Mode mode) const noexcept {
    return mode == Mode::statistic ? statistic_verdict : significance_verdict;
  }
};

/// Runs both regressions and tests once; both decision modes are filled in.
AnmResult anm_direction(const vae::PairDataset& pair, const AnmConfig& cfg = {});

/// Report in the shared DirectionReport shape: l_xy = -HSIC(x, residual),
/// l_yx = -HSIC(y, residual), method "anm", plus p-values and mode.
nlohmann::json anm_report_json(const AnmResult& r, Mode mode, const AnmConfig& cfg, std::size_t points);

}  // namespace canm::anm
