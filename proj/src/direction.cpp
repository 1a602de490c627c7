#include "canm/direction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <optional>

namespace canm::direction {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double logsumexp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

struct EmOutcome {
  GmmDensity gmm;
  bool collapsed = false;
};

EmOutcome run_em(std::span<const double> xs, std::vector<double> means, double total_var, const GmmFitOptions& opt) {
  const std::size_t n = xs.size(), k = means.size();
  GmmDensity g{std::vector<double>(k, 1.0 / static_cast<double>(k)), std::move(means),
               std::vector<double>(k, total_var)};
  const double var_floor = 1e-6 * total_var;
  std::vector<double> resp(n * k), lp(k);
  double prev = -INFINITY;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) lp[j] = std::log(g.weights[j]) + log_normal(xs[i], g.means[j], g.variances[j]);
      const double lse = logsumexp(lp);
      ll += lse;
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] = std::exp(lp[j] - lse);
    }
    for (std::size_t j = 0; j < k; ++j) {
      double nj = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nj += resp[i * k + j];
        sx += resp[i * k + j] * xs[i];
      }
      if (!(nj > 1e-8 * static_cast<double>(n))) return {g, true};
      const double mu = sx / nj;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) sv += resp[i * k + j] * (xs[i] - mu) * (xs[i] - mu);
      g.weights[j] = nj / static_cast<double>(n);
      g.means[j] = mu;
      g.variances[j] = sv / nj;
      if (!(g.variances[j] > var_floor)) return {g, true};
    }
    if (std::abs(ll - prev) < opt.tolerance * static_cast<double>(n)) break;
    prev = ll;
  }
  return {g, false};
}

}  // namespace

double GmmDensity::log_density(double x) const {
  std::vector<double> lp(components());
  for (std::size_t j = 0; j < components(); ++j) lp[j] = std::log(weights[j]) + log_normal(x, means[j], variances[j]);
  return logsumexp(lp);
}

double GmmDensity::mean_log_density(std::span<const double> xs) const {
  double acc = 0.0;
  for (double x : xs) acc += log_density(x);
  return acc / static_cast<double>(xs.size());
}

double GmmDensity::bic(std::span<const double> xs) const {
  const double n = static_cast<double>(xs.size());
  const double params = 3.0 * static_cast<double>(components()) - 1.0;
  return -2.0 * mean_log_density(xs) * n + params * std::log(n);
}

GmmDensity fit_gmm(std::span<const double> samples, std::size_t k, const GmmFitOptions& opt) {
  if (k < 1) throw DataError("fit_gmm: need at least one component");
  if (samples.size() < 10) throw DataError("fit_gmm: need at least 10 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw DataError("fit_gmm: samples have zero variance");

  std::vector<double> init(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(k);
    init[j] = sorted[static_cast<std::size_t>(q * (n - 1.0))];
  }
  Rng rng = make_rng(opt.seed, {stream::gmm, k});
  std::normal_distribution<double> jitter(0.0, 0.5 * std::sqrt(var));
  for (std::size_t attempt = 0; attempt <= opt.max_restarts; ++attempt) {
    std::vector<double> means = init;
    if (attempt > 0)
      for (auto& m : means) m += jitter(rng);
    EmOutcome out = run_em(sorted, std::move(means), var, opt);
    if (!out.collapsed) return out.gmm;
  }
  throw NumericError("fit_gmm: " + std::to_string(k) + "-component EM collapsed after " +
                     std::to_string(opt.max_restarts) + " restarts");
}

GmmDensity fit_marginal(std::span<const double> samples, const GmmFitOptions& opt) {
  std::optional<GmmDensity> best;
  double best_bic = INFINITY;
  for (std::size_t k = 1; k <= opt.max_components; ++k) {
    try {
      GmmDensity g = fit_gmm(samples, k, opt);
      const double b = g.bic(samples);
      if (b < best_bic) {
        best_bic = b;
        best = std::move(g);
      }
    } catch (const NumericError&) {
      if (k == 1) throw;
    }
  }
  return *best;
}

// ---------------------------------------------------------------- scoring

DirectionScore score_direction(const vae::PairDataset& pair, const DirectionConfig& cfg) {
  DirectionScore s;
  s.marginal = fit_marginal(pair.x()).mean_log_density(pair.x());
  vae::LatentSelection sel = vae::select_latent_dim(pair, cfg.k_max, cfg.train, cfg.threads);
  s.latent_dim = sel.best_k;
  s.per_k_scores = sel.test_scores;
  vae::TrainConfig full = cfg.train;
  full.seed = derive_seed(cfg.train.seed, {stream::eval, sel.best_k});
  vae::TrainResult fit = vae::train(pair, sel.best_k, full);
  s.conditional = vae::evaluate(fit.model, pair, cfg.train.eval_mc_samples, full.seed).total;
  s.model = std::move(fit.model);
  s.score = s.marginal + s.conditional;
  return s;
}

Verdict decide(double l_xy, double l_yx, double delta) {
  if (!std::isfinite(l_xy) || !std::isfinite(l_yx)) throw NumericError("decide: non-finite score");
  if (!(delta >= 0.0)) throw Error("decide: delta must be >= 0");
  if (l_xy > l_yx + delta) return Verdict::forward;
  if (l_xy < l_yx - delta) return Verdict::backward;
  return Verdict::undecided;
}

DirectionReport infer(const vae::PairDataset& pair, const DirectionConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  DirectionScore fwd, bwd;
  if (cfg.threads > 1) {
    DirectionConfig half = cfg;
    half.threads = std::max<std::size_t>(1, cfg.threads / 2);
    auto back = std::async(std::launch::async, [&] { return score_direction(pair.swapped(), half); });
    fwd = score_direction(pair, half);
    bwd = back.get();
  } else {
    fwd = score_direction(pair, cfg);
    bwd = score_direction(pair.swapped(), cfg);
  }
  DirectionReport r;
  r.l_xy = fwd.score;
  r.l_yx = bwd.score;
  r.delta = cfg.delta;
  r.verdict = decide(r.l_xy, r.l_yx, cfg.delta);
  r.k_xy = fwd.latent_dim;
  r.k_yx = bwd.latent_dim;
  r.per_k_xy = fwd.per_k_scores;
  r.per_k_yx = bwd.per_k_scores;
  r.seed = cfg.train.seed;
  r.points = pair.size();
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

nlohmann::json report_to_json(const DirectionReport& r) {
  return {{"method", r.method},
          {"l_xy", r.l_xy},
          {"l_yx", r.l_yx},
          {"margin", r.margin()},
          {"delta", r.delta},
          {"verdict", to_string(r.verdict)},
          {"k_xy", r.k_xy},
          {"k_yx", r.k_yx},
          {"per_k_scores", {{"xy", r.per_k_xy}, {"yx", r.per_k_yx}}},
          {"seed", r.seed},
          {"points", r.points}};
}

DirectionReport report_from_json(const nlohmann::json& j) {
  try {
    DirectionReport r;
    r.method = j.at("method").get<std::string>();
    r.l_xy = j.at("l_xy").get<double>();
    r.l_yx = j.at("l_yx").get<double>();
    r.delta = j.at("delta").get<double>();
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.k_xy = j.at("k_xy").get<std::size_t>();
    r.k_yx = j.at("k_yx").get<std::size_t>();
    r.per_k_xy = j.at("per_k_scores").at("xy").get<std::vector<double>>();
    r.per_k_yx = j.at("per_k_scores").at("yx").get<std::vector<double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.points = j.at("points").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
}

}  // namespace canm::direction
