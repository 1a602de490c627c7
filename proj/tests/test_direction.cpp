#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "canm/direction.hpp"
#include "canm/synthgen.hpp"
#include "canm/theory.hpp"

using namespace canm;
using namespace canm::direction;

namespace {

std::vector<double> normals(std::size_t n, double mean, double sd, Rng& rng) {
  std::normal_distribution<double> z(mean, sd);
  std::vector<double> v(n);
  for (auto& a : v) a = z(rng);
  return v;
}

DirectionConfig fast_config(std::uint64_t seed) {
  DirectionConfig cfg;
  cfg.train.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("fit_marginal on a single Gaussian") {
  Rng rng(1);
  const auto xs = normals(10000, 0.0, 1.0, rng);
  const GmmDensity g = fit_marginal(xs);
  CHECK(g.components() == 1);
  CHECK(std::abs(g.means[0]) < 0.05);
  CHECK(g.variances[0] >= 0.9);
  CHECK(g.variances[0] <= 1.1);

  // Held-out average log density approaches minus the differential entropy.
  const auto held = normals(10000, 0.0, 1.0, rng);
  CHECK(std::abs(g.mean_log_density(held) + 1.4189) < 0.05);
}

TEST_CASE("fit_marginal separates two modes") {
  Rng rng(2);
  auto xs = normals(2000, -5.0, 0.5, rng);
  const auto right = normals(2000, 5.0, 0.5, rng);
  xs.insert(xs.end(), right.begin(), right.end());
  const GmmDensity g = fit_marginal(xs);
  REQUIRE(g.components() == 2);
  const double lo = std::min(g.means[0], g.means[1]), hi = std::max(g.means[0], g.means[1]);
  CHECK(std::abs(lo + 5.0) < 0.1);
  CHECK(std::abs(hi - 5.0) < 0.1);
  CHECK(g.weights[0] + g.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gmm density integrates to one") {
  Rng rng(3);
  auto xs = normals(600, -1.0, 0.7, rng);
  const auto more = normals(400, 2.0, 1.3, rng);
  xs.insert(xs.end(), more.begin(), more.end());
  const GmmDensity g = fit_gmm(xs, 3);
  // Composite Simpson on [-20, 20].
  const int n = 40000;
  const double a = -20.0, b = 20.0, h = (b - a) / n;
  double s = std::exp(g.log_density(a)) + std::exp(g.log_density(b));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * std::exp(g.log_density(a + i * h));
  CHECK(std::abs(s * h / 3.0 - 1.0) < 1e-6);

  // log_density against a direct mixture sum.
  for (double t : {-3.0, 0.0, 1.7}) {
    double p = 0.0;
    for (std::size_t k = 0; k < g.components(); ++k)
      p += g.weights[k] * std::exp(-0.5 * (t - g.means[k]) * (t - g.means[k]) / g.variances[k]) /
           std::sqrt(2.0 * std::numbers::pi * g.variances[k]);
    CHECK(g.log_density(t) == doctest::Approx(std::log(p)).epsilon(1e-12));
  }
  // BIC = -2 log L + (3k - 1) log n.
  const double bic = -2.0 * g.mean_log_density(xs) * xs.size() + 8.0 * std::log(static_cast<double>(xs.size()));
  CHECK(g.bic(xs) == doctest::Approx(bic).epsilon(1e-10));
}

TEST_CASE("gmm errors") {
  const std::vector<double> few{1, 2, 3};
  CHECK_THROWS_AS(fit_gmm(few, 1), DataError);
  const std::vector<double> flat(50, 1.0);
  CHECK_THROWS_AS(fit_marginal(flat), DataError);
  Rng rng(4);
  const auto xs = normals(100, 0.0, 1.0, rng);
  CHECK_THROWS_AS(fit_gmm(xs, 0), DataError);
}

TEST_CASE("decide") {
  CHECK(decide(-2.62, -2.67, 0.01) == Verdict::forward);
  CHECK(decide(-2.49, -2.51, 0.01) == Verdict::forward);
  CHECK(decide(-2.51, -2.49, 0.01) == Verdict::backward);
  CHECK(decide(-2.5, -2.5, 0.01) == Verdict::undecided);
  CHECK(decide(-2.5, -2.505, 0.01) == Verdict::undecided);
  Rng rng(5);
  std::uniform_real_distribution<double> u(-5.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng);
    const Verdict v = decide(a, b, 0.01), w = decide(b, a, 0.01);
    if (v == Verdict::forward) CHECK(w == Verdict::backward);
    if (v == Verdict::backward) CHECK(w == Verdict::forward);
    if (v == Verdict::undecided) CHECK(w == Verdict::undecided);
  }
  CHECK_THROWS_AS(decide(std::nan(""), 0.0, 0.01), NumericError);
  CHECK_THROWS_AS(decide(0.0, INFINITY, 0.01), NumericError);
  CHECK_THROWS(decide(0.0, 0.0, -0.1));
}

TEST_CASE("infer: swap symmetry, determinism, JSON round trip") {
  const auto c = synthgen::generate(400, 0, 11);
  const auto pair = vae::PairDataset::standardize(c.sample.x, c.sample.y);
  const DirectionConfig cfg = fast_config(5);
  const DirectionReport r = infer(pair, cfg);
  const DirectionReport s = infer(pair.swapped(), cfg);
  CHECK(s.l_xy == r.l_yx);
  CHECK(s.l_yx == r.l_xy);
  CHECK(std::abs(s.margin()) == std::abs(r.margin()));
  CHECK(s.k_xy == r.k_yx);
  if (r.verdict == Verdict::forward) CHECK(s.verdict == Verdict::backward);
  CHECK(r.per_k_xy.size() == cfg.k_max + 1);
  CHECK(r.points == 400);
  CHECK(r.seed == 5);

  const DirectionReport again = infer(pair, cfg);
  CHECK(again.l_xy == r.l_xy);
  CHECK(again.l_yx == r.l_yx);

  DirectionConfig two = cfg;
  two.threads = 2;
  const DirectionReport par = infer(pair, two);
  CHECK(par.l_xy == r.l_xy);
  CHECK(par.l_yx == r.l_yx);
  CHECK(par.per_k_yx == r.per_k_yx);

  const auto j = report_to_json(r);
  CHECK_FALSE(j.contains("runtime_seconds"));
  const DirectionReport back = report_from_json(j);
  CHECK(back.l_xy == r.l_xy);
  CHECK(back.l_yx == r.l_yx);
  CHECK(back.verdict == r.verdict);
  CHECK(back.k_xy == r.k_xy);
  CHECK(back.per_k_xy == r.per_k_xy);
  CHECK(report_to_json(back) == j);
  CHECK_THROWS_AS(report_from_json(nlohmann::json{{"method", "canm"}}), DataError);
}

TEST_CASE("linear Gaussian pairs are mostly undecided or near ties") {
  int ties = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto lg = theory::simulate({1.0, 1.0}, 500, s);
    const auto r = infer(vae::PairDataset::standardize(lg.x, lg.y), fast_config(s));
    if (r.verdict == Verdict::undecided || std::abs(r.margin()) < 0.05) ++ties;
  }
  CHECK(ties > 12);
}
