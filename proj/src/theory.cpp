#include "canm/theory.hpp"

#include <cmath>

#include "canm/anm.hpp"

namespace canm::theory {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct Vec3 {
  double x, n, e;
};

Vec3 cross(const Vec3& u, const Vec3& v) {
  return {u.n * v.e - u.e * v.n, u.e * v.x - u.x * v.e, u.x * v.n - u.n * v.x};
}

double norm2(const Vec3& v) { return v.x * v.x + v.n * v.n + v.e * v.e; }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s / static_cast<double>(v.size());
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

}  // namespace

BackwardModel backward_coeffs(const LinearGaussianSpec& spec) {
  const double s = spec.a * spec.a + spec.b * spec.b + 1.0;
  return {spec.a / s, spec.a / std::sqrt(s), 1.0};
}

double consistent_noise_variance(const LinearGaussianSpec& spec) {
  const double s = spec.a * spec.a + spec.b * spec.b + 1.0;
  return (spec.b * spec.b + 1.0 - spec.a * spec.a) / s;
}

LinearGaussianSample simulate(const LinearGaussianSpec& spec, std::size_t m, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::theory});
  std::normal_distribution<double> z(0.0, 1.0);
  LinearGaussianSample s;
  s.x.resize(m);
  s.n.resize(m);
  s.eps.resize(m);
  s.y.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    s.x[i] = z(rng);
    s.n[i] = z(rng);
    s.eps[i] = z(rng);
    s.y[i] = spec.a * s.x[i] + spec.b * s.n[i] + s.eps[i];
  }
  return s;
}

BackwardCheck verify_backward(const LinearGaussianSpec& spec, std::size_t m, std::uint64_t seed,
                              std::size_t permutations) {
  if (m < 20) throw DataError("verify_backward: need m >= 20");
  BackwardCheck out;
  out.model = backward_coeffs(spec);
  out.points = m;
  out.claimed_variance = out.model.noise_variance;
  out.consistent_variance = consistent_noise_variance(spec);
  const double c = out.model.c, d = out.model.d;

  // Coefficients on (X, N, e).
  const Vec3 y_dir{spec.a, spec.b, 1.0};
  const Vec3 r{1.0 - c * spec.a, -c * spec.b, -c};
  const double var_r = norm2(r);
  Vec3 w = cross(y_dir, r);
  const double wn = std::sqrt(norm2(w));
  w = {w.x / wn, w.n / wn, w.e / wn};

  double coef_r = 0.0, coef_w = 0.0;
  if (d * d <= var_r) {
    coef_r = d / var_r;
    coef_w = std::sqrt(1.0 - d * d / var_r);
  } else {
    out.realizable = false;
    coef_r = 1.0 / std::sqrt(var_r);
  }

  const LinearGaussianSample s = simulate(spec, m, seed);
  std::vector<double> n_hat(m), eps_hat(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double ri = r.x * s.x[i] + r.n * s.n[i] + r.e * s.eps[i];
    const double wi = w.x * s.x[i] + w.n * s.n[i] + w.e * s.eps[i];
    n_hat[i] = coef_r * ri + coef_w * wi;
    eps_hat[i] = s.x[i] - c * s.y[i] - d * n_hat[i];
  }
  out.eps_mean = mean_of(eps_hat);
  double v = 0.0;
  for (double e : eps_hat) v += (e - out.eps_mean) * (e - out.eps_mean);
  out.eps_variance = v / static_cast<double>(m - 1);
  out.corr_xy = correlation(s.x, s.y);
  out.p_eps_y = anm::hsic(eps_hat, s.y, permutations, derive_seed(seed, {stream::theory, 1})).p_value;
  out.p_eps_nhat = anm::hsic(eps_hat, n_hat, permutations, derive_seed(seed, {stream::theory, 2})).p_value;
  return out;
}

double nonidentifiability_gap(const LinearGaussianSpec& spec, std::size_t m, const direction::DirectionConfig& cfg) {
  if (m < 50) throw DataError("nonidentifiability_gap: need m >= 50");
  const LinearGaussianSample s = simulate(spec, m, cfg.train.seed);
  const auto pair = vae::PairDataset::standardize(s.x, s.y);
  const direction::DirectionReport r = direction::infer(pair, cfg);
  return std::abs(r.l_xy - r.l_yx);
}

std::vector<double> anm_loglik(const vae::CanmModel& model, std::span<const double> x, std::span<const double> y) {
  if (model.has_encoder()) throw Error("anm_loglik: model has latent noise");
  if (x.size() != y.size()) throw DimensionError("anm_loglik: x and y lengths differ");
  const double log_var = model.log_var_eps();
  const double var = std::exp(log_var);
  const std::size_t layers = model.decoder.layer_count();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> h{x[i]};
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& w = model.params.value(diffcore::layer_weight_name("dec", l));
      const auto& b = model.params.value(diffcore::layer_bias_name("dec", l));
      std::vector<double> next(static_cast<std::size_t>(w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < w.rows(); ++k) acc += h[static_cast<std::size_t>(k)] * w(k, j);
        acc += b(0, j);
        if (l + 1 < layers)
          acc = model.decoder.activation == diffcore::Activation::tanh ? std::tanh(acc) : std::max(acc, 0.0);
        next[static_cast<std::size_t>(j)] = acc;
      }
      h = std::move(next);
    }
    const double r = y[i] - h[0];
    out[i] = -0.5 * (kLog2Pi + log_var + r * r / var);
  }
  return out;
}

double k0_deviation(vae::CanmModel& model, const vae::PairDataset& data) {
  Rng rng = make_rng(0, {stream::eval});
  const vae::PointwiseElbo p = vae::elbo_pointwise(model, data.x(), data.y(), 1, rng);
  const std::vector<double> ref = anm_loglik(model, data.x(), data.y());
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(p.recon[i] - p.kl[i] - ref[i]));
  return worst;
}

double k0_equivalence(const vae::PairDataset& data, const vae::TrainConfig& cfg) {
  vae::TrainResult fit = vae::train(data, 0, cfg);
  return k0_deviation(fit.model, data);
}

nlohmann::json claim_to_json(const Claim& c) {
  nlohmann::json j = {{"claim", c.name}, {"statistic", c.statistic}, {"threshold", c.threshold}, {"pass", c.pass}};
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

}  // namespace canm::theory
