#include "canm/anm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace canm::anm {

namespace {

double stddev(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double a : v) s += (a - mean) * (a - mean);
  return std::sqrt(s / n);
}

double heuristic_bandwidth(std::span<const double> x) {
  const double med = kernels::median_pairwise_distance(x);
  if (med > 0.0) return med;
  const double sd = stddev(x);
  return sd > 0.0 ? sd : 1.0;
}

// Returns false when the regularized Gram matrix is not numerically SPD.
bool solve_ridge(const kernels::Matrix& gram, std::span<const double> y, double lambda, std::vector<double>& alpha) {
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd sol = llt.solve(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
  if (!sol.allFinite()) return false;
  alpha.assign(sol.data(), sol.data() + sol.size());
  return true;
}

}  // namespace

std::vector<double> default_lambda_grid() { return {1e-4, 1e-3, 1e-2, 1e-1, 1.0}; }

double KernelRidgeModel::predict(double x) const {
  const double s = 1.0 / (2.0 * bandwidth * bandwidth);
  double acc = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double d = x - inputs[i];
    acc += alpha[i] * std::exp(-d * d * s);
  }
  return acc;
}

std::vector<double> KernelRidgeModel::predict(std::span<const double> xs) const {
  const kernels::Matrix k = kernels::parallel::gaussian_gram(xs, inputs, bandwidth);
  const Eigen::VectorXd out =
      k * Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  return {out.data(), out.data() + out.size()};
}

KernelRidgeModel kr_fit(std::span<const double> x, std::span<const double> y, const KernelRidgeOptions& opt) {
  if (x.size() != y.size()) throw DimensionError("kr_fit: x and y lengths differ");
  if (x.size() < 10) throw DataError("kr_fit: need at least 10 points");
  if (opt.lambda_grid.empty()) throw Error("kr_fit: empty lambda grid");
  if (opt.folds < 2) throw Error("kr_fit: need at least 2 folds");
  std::vector<double> grid = opt.lambda_grid;
  std::sort(grid.begin(), grid.end());

  KernelRidgeModel model;
  model.inputs.assign(x.begin(), x.end());
  model.bandwidth = heuristic_bandwidth(x);

  // Cross-validation subset: evenly strided when the data is large.
  const std::size_t m = x.size();
  const std::size_t cv_n = std::min(m, std::max(opt.cv_max_points, opt.folds * 2));
  std::vector<double> cx(cv_n), cy(cv_n);
  for (std::size_t i = 0; i < cv_n; ++i) {
    const std::size_t src = i * m / cv_n;
    cx[i] = x[src];
    cy[i] = y[src];
  }

  std::size_t best = grid.size();
  double best_mse = INFINITY;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sse = 0.0;
    bool ok = true;
    for (std::size_t f = 0; f < opt.folds && ok; ++f) {
      std::vector<double> tx, ty, vx, vy;
      for (std::size_t i = 0; i < cv_n; ++i) {
        (i % opt.folds == f ? vx : tx).push_back(cx[i]);
        (i % opt.folds == f ? vy : ty).push_back(cy[i]);
      }
      std::vector<double> alpha;
      if (!solve_ridge(kernels::parallel::gaussian_gram(tx, tx, model.bandwidth), ty, grid[g], alpha)) {
        ok = false;
        break;
      }
      const KernelRidgeModel fold{tx, alpha, model.bandwidth, grid[g]};
      const auto pred = fold.predict(std::span<const double>(vx));
      for (std::size_t i = 0; i < vx.size(); ++i) sse += (vy[i] - pred[i]) * (vy[i] - pred[i]);
    }
    if (ok && sse < best_mse) {
      best_mse = sse;
      best = g;
    }
  }
  if (best == grid.size()) throw NumericError("kr_fit: every ridge value in the grid gave a singular system");

  const kernels::Matrix gram = kernels::parallel::gaussian_gram(x, x, model.bandwidth);
  for (std::size_t g = best; g < grid.size(); ++g) {
    if (solve_ridge(gram, y, grid[g], model.alpha)) {
      model.lambda = grid[g];
      return model;
    }
  }
  throw NumericError("kr_fit: ridge grid exhausted on the full data");
}

HsicResult hsic(std::span<const double> a, std::span<const double> b, std::size_t permutations, std::uint64_t seed,
                bool use_parallel) {
  if (a.size() != b.size()) throw DimensionError("hsic: inputs differ in length");
  if (a.size() < 20) throw DataError("hsic: need at least 20 points");
  HsicResult res{0.0, 1.0, permutations};
  if (!(stddev(a) > 0.0) || !(stddev(b) > 0.0)) return res;
  // Canonical operand order makes the computation symmetric in (a, b).
  if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) std::swap(a, b);

  const double m = static_cast<double>(a.size());
  kernels::Matrix k, l;
  if (use_parallel) {
    k = kernels::parallel::gaussian_gram(a, a, heuristic_bandwidth(a));
    l = kernels::parallel::gaussian_gram(b, b, heuristic_bandwidth(b));
    kernels::parallel::center(k);
    kernels::parallel::center(l);
  } else {
    k = kernels::serial::gaussian_gram(a, a, heuristic_bandwidth(a));
    l = kernels::serial::gaussian_gram(b, b, heuristic_bandwidth(b));
    kernels::serial::center(k);
    kernels::serial::center(l);
  }
  const double observed = use_parallel ? kernels::parallel::frobenius_dot(k, l) : kernels::serial::frobenius_dot(k, l);
  res.statistic = std::max(0.0, observed / (m * m));
  if (permutations == 0) return res;

  Rng rng = make_rng(seed, {stream::permutation});
  std::vector<kernels::Permutation> perms(permutations, kernels::Permutation(a.size()));
  for (auto& p : perms) {
    std::iota(p.begin(), p.end(), 0u);
    std::shuffle(p.begin(), p.end(), rng);
  }
  const auto null = use_parallel ? kernels::parallel::permuted_dots(k, l, perms)
                                 : kernels::serial::permuted_dots(k, l, perms);
  const std::size_t exceed =
      static_cast<std::size_t>(std::count_if(null.begin(), null.end(), [&](double v) { return v >= observed; }));
  res.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + permutations);
  return res;
}

AnmResult anm_direction(const vae::PairDataset& pair, const AnmConfig& cfg) {
  const auto& x = pair.x();
  const auto& y = pair.y();
  const auto fx = kr_fit(x, y, cfg.regression).predict(std::span<const double>(x));
  const auto gy = kr_fit(y, x, cfg.regression).predict(std::span<const double>(y));
  std::vector<double> r_fwd(x.size()), r_bwd(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    r_fwd[i] = y[i] - fx[i];
    r_bwd[i] = x[i] - gy[i];
  }
  AnmResult r;
  r.forward = hsic(x, r_fwd, cfg.permutations, cfg.seed);
  r.backward = hsic(y, r_bwd, cfg.permutations, cfg.seed);

  if (r.forward.statistic < r.backward.statistic)
    r.statistic_verdict = Verdict::forward;
  else if (r.forward.statistic > r.backward.statistic)
    r.statistic_verdict = Verdict::backward;

  const bool fwd_ok = r.forward.p_value > cfg.alpha, bwd_ok = r.backward.p_value > cfg.alpha;
  if (fwd_ok && !bwd_ok)
    r.significance_verdict = Verdict::forward;
  else if (bwd_ok && !fwd_ok)
    r.significance_verdict = Verdict::backward;
  return r;
}

nlohmann::json anm_report_json(const AnmResult& r, Mode mode, const AnmConfig& cfg, std::size_t points) {
  const double l_xy = -r.forward.statistic, l_yx = -r.backward.statistic;
  return {{"method", "anm"},
          {"mode", mode == Mode::statistic ? "statistic" : "significance"},
          {"l_xy", l_xy},
          {"l_yx", l_yx},
          {"margin", l_xy - l_yx},
          {"delta", 0.0},
          {"verdict", to_string(r.verdict(mode))},
          {"k_xy", 0},
          {"k_yx", 0},
          {"p_xy", r.forward.p_value},
          {"p_yx", r.backward.p_value},
          {"alpha", cfg.alpha},
          {"permutations", cfg.permutations},
          {"seed", cfg.seed},
          {"points", points}};
}

}  // namespace canm::anm
