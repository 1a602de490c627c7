#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "canm/synthgen.hpp"
#include "canm/theory.hpp"
#include "support/reference_mlp.hpp"

using namespace canm;
using namespace canm::theory;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("backward_coeffs examples") {
  const BackwardModel m10 = backward_coeffs({1.0, 0.0});
  CHECK(m10.c == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m10.d == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(m10.noise_variance == 1.0);
  const BackwardModel m11 = backward_coeffs({1.0, 1.0});
  CHECK(m11.c == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(m11.d == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
  const BackwardModel m0 = backward_coeffs({0.0, 2.0});
  CHECK(m0.c == 0.0);
  CHECK(m0.d == 0.0);
}

TEST_CASE("consistent backward variance identity") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const LinearGaussianSpec s{u(rng), u(rng)};
    const BackwardModel b = backward_coeffs(s);
    const double vy = s.a * s.a + s.b * s.b + 1.0;
    CHECK(std::abs(b.c * b.c * vy + b.d * b.d + consistent_noise_variance(s) - 1.0) < 1e-12);
  }
}

// The stated identity with unit e' variance only holds when a = 0.
TEST_CASE("stated backward variance identity" * doctest::may_fail()) {
  for (const LinearGaussianSpec s : {LinearGaussianSpec{1.0, 1.0}, LinearGaussianSpec{2.0, 0.5}}) {
    const BackwardModel b = backward_coeffs(s);
    CHECK(std::abs(b.c * b.c * (s.a * s.a + s.b * s.b + 1.0) + b.d * b.d + 1.0 - 1.0) < 1e-12);
  }
}

TEST_CASE("stated unit noise variance at large m" * doctest::may_fail()) {
  const BackwardCheck r = verify_backward({1.0, 1.0}, 10000, 3, 50);
  CHECK(r.eps_variance >= 0.9);
  CHECK(r.eps_variance <= 1.1);
}

TEST_CASE("simulate follows the linear model") {
  const LinearGaussianSample s = simulate({1.5, -0.5}, 20000, 4);
  double vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    CHECK(s.y[i] == doctest::Approx(1.5 * s.x[i] - 0.5 * s.n[i] + s.eps[i]).epsilon(1e-14));
    vx += s.x[i] * s.x[i];
    vy += s.y[i] * s.y[i];
  }
  vx /= s.x.size();
  vy /= s.y.size();
  CHECK(std::abs(vx - 1.0) < 0.05);
  CHECK(std::abs(vy - 3.5) < 0.2);
  CHECK(simulate({1.5, -0.5}, 10, 4).x == simulate({1.5, -0.5}, 10, 4).x);
}

TEST_CASE("verify_backward: recovered noise matches the consistent model") {
  const BackwardCheck r = verify_backward({1.0, 1.0}, 2000, 5);
  CHECK(r.realizable);
  CHECK(r.points == 2000);
  CHECK(r.claimed_variance == 1.0);
  CHECK(r.consistent_variance == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(std::abs(r.eps_mean) < 4.0 * std::sqrt(r.consistent_variance / 2000.0));
  CHECK(std::abs(r.eps_variance - r.consistent_variance) < 5.0 * r.consistent_variance * std::sqrt(2.0 / 1999.0));
  CHECK(r.p_eps_y > 0.01);
  CHECK(r.p_eps_nhat > 0.01);

  const BackwardCheck again = verify_backward({1.0, 1.0}, 2000, 5);
  CHECK(again.eps_variance == r.eps_variance);
  CHECK(again.p_eps_y == r.p_eps_y);

  CHECK_THROWS(verify_backward({1.0, 1.0}, 10, 5));
}

TEST_CASE("verify_backward: unrealizable coefficients are flagged") {
  const BackwardCheck r = verify_backward({3.0, 0.5}, 500, 6, 50);
  CHECK_FALSE(r.realizable);
  CHECK(consistent_noise_variance({3.0, 0.5}) < 0.0);
}

TEST_CASE("verify_backward: a = 0 gives uncorrelated variables") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const BackwardCheck r = verify_backward({0.0, 1.0}, 4000, s, 50);
    CHECK(std::abs(r.corr_xy) < 3.0 / std::sqrt(4000.0));
    CHECK(r.model.c == 0.0);
  }
}

TEST_CASE("anm_loglik against a reference decoder") {
  vae::ArchConfig arch;
  for (std::uint64_t s = 0; s < 5; ++s) {
    vae::CanmModel model = vae::CanmModel::create(0, arch, s);
    model.params.value("log_var_eps")(0, 0) = -0.7 + 0.1 * static_cast<double>(s);
    Rng rng(s);
    std::normal_distribution<double> z;
    std::vector<double> x(50), y(50);
    for (auto& v : x) v = z(rng);
    for (auto& v : y) v = z(rng);
    diffcore::Matrix in(50, 1);
    for (std::size_t i = 0; i < 50; ++i) in(i, 0) = x[i];
    const diffcore::Matrix f = testing::reference_mlp(model.decoder, model.params, "dec", in);
    const double lv = model.log_var_eps();
    const auto ll = anm_loglik(model, x, y);
    for (std::size_t i = 0; i < 50; ++i) {
      const double r = y[i] - f(i, 0);
      const double ref = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * lv - 0.5 * r * r / std::exp(lv);
      CHECK(ll[i] == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("K = 0 ELBO equals the additive-noise log-likelihood") {
  vae::ArchConfig arch;
  for (std::uint64_t s = 0; s < 20; ++s) {
    vae::CanmModel model = vae::CanmModel::create(0, arch, 100 + s);
    model.params.value("log_var_eps")(0, 0) += 0.1 * static_cast<double>(s % 3);
    const auto c = synthgen::generate(200, 0, s);
    const auto data = vae::PairDataset::standardize(c.sample.x, c.sample.y);
    CHECK(k0_deviation(model, data) < 1e-10);
    // Point order does not matter.
    CHECK(k0_deviation(model, data.swapped().swapped()) < 1e-10);
  }
  vae::TrainConfig cfg;
  cfg.epochs = 5;
  const auto c = synthgen::generate(300, 0, 1);
  CHECK(k0_equivalence(vae::PairDataset::standardize(c.sample.x, c.sample.y), cfg) < 1e-10);
}

TEST_CASE("non-identifiability gap") {
  direction::DirectionConfig cfg;
  cfg.train.seed = 2;
  const double g = nonidentifiability_gap({1.0, 1.0}, 500, cfg);
  CHECK(g >= 0.0);
  CHECK(g == nonidentifiability_gap({1.0, 1.0}, 500, cfg));
  CHECK(nonidentifiability_gap({2.0, 0.5}, 1000, cfg) < 0.1);
  CHECK_THROWS(nonidentifiability_gap({1.0, 1.0}, 20, cfg));
}

TEST_CASE("non-identifiability gap shrinks with sample size") {
  std::vector<double> small, large;
  for (std::uint64_t s = 0; s < 10; ++s) {
    direction::DirectionConfig cfg;
    cfg.train.seed = s;
    small.push_back(nonidentifiability_gap({1.0, 1.0}, 500, cfg));
    large.push_back(nonidentifiability_gap({1.0, 1.0}, 5000, cfg));
  }
  MESSAGE("median gap m=500: " << median(small) << ", m=5000: " << median(large));
  CHECK(median(large) <= median(small));
}
