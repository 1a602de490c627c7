#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "canm/anm.hpp"
#include "canm/synthgen.hpp"

using namespace canm;
using namespace canm::synthgen;

TEST_CASE("sample_cause: determinism and moments") {
  const CauseSample a = sample_cause(1000, 42), b = sample_cause(1000, 42);
  CHECK(a.values == b.values);
  CHECK(sample_cause(1000, 43).values != a.values);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto c = sample_cause(10, s);
    CHECK(c.mixture.weights[0] + c.mixture.weights[1] + c.mixture.weights[2] == doctest::Approx(1.0).epsilon(1e-12));
    for (double sd : c.mixture.stddevs) {
      CHECK(sd >= 0.2);
      CHECK(sd <= 2.0);
    }
  }
  for (std::uint64_t s = 0; s < 5; ++s) {
    const std::size_t m = 100000;
    const auto c = sample_cause(m, s);
    // Analytic mixture moments from the drawn parameters.
    double mean = 0.0, second = 0.0;
    for (int k = 0; k < 3; ++k) {
      mean += c.mixture.weights[k] * c.mixture.means[k];
      second += c.mixture.weights[k] * (c.mixture.stddevs[k] * c.mixture.stddevs[k] + c.mixture.means[k] * c.mixture.means[k]);
    }
    CHECK(c.mixture.mean() == doctest::Approx(mean).epsilon(1e-12));
    CHECK(c.mixture.variance() == doctest::Approx(second - mean * mean).epsilon(1e-12));
    const double emp = std::accumulate(c.values.begin(), c.values.end(), 0.0) / m;
    CHECK(std::abs(emp - mean) < 3.0 * std::sqrt((second - mean * mean) / m));
  }
}

TEST_CASE("spline interpolates its knots and is C2") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const NaturalCubicSpline f = random_mechanism(-1.5, 2.5, s);
    REQUIRE(f.knots_x().size() == kKnots);
    for (std::size_t i = 1; i < kKnots; ++i) {
      CHECK(f.knots_x()[i] > f.knots_x()[i - 1]);
      CHECK(f.knots_x()[i] - f.knots_x()[i - 1] == doctest::Approx(0.8).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < kKnots; ++i) CHECK(std::abs(f(f.knots_x()[i]) - f.knots_y()[i]) < 1e-10);

    for (std::size_t i = 1; i + 1 < kKnots; ++i) {
      const double k = f.knots_x()[i];
      const double left = f.second_derivative(k - 1e-12), right = f.second_derivative(k + 1e-12);
      CHECK(std::abs(left - right) < 1e-8);
    }
    // Central differences inside each segment, where the spline is one cubic.
    const double h = 1e-3;
    for (std::size_t i = 0; i + 1 < kKnots; ++i) {
      const double t = 0.5 * (f.knots_x()[i] + f.knots_x()[i + 1]);
      const double fd2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
      CHECK(std::abs(fd2 - f.second_derivative(t)) < 1e-5);
      const double fd1 = (f(t + h) - f(t - h)) / (2.0 * h);
      CHECK(std::abs(fd1 - f.derivative(t)) < 1e-5);
    }
    // Natural boundary and linear extrapolation.
    CHECK(std::abs(f.second_derivative(-1.5 + 1e-12)) < 1e-8);
    CHECK(std::abs(f.second_derivative(2.5 - 1e-12)) < 1e-8);
    const double slope = f.derivative(2.5);
    CHECK(f(4.0) == doctest::Approx(f(2.5) + 1.5 * slope).epsilon(1e-12));
    CHECK(f(-3.0) == doctest::Approx(f(-1.5) - 1.5 * f.derivative(-1.5)).epsilon(1e-12));
    CHECK(f.second_derivative(5.0) == 0.0);
  }
  const NaturalCubicSpline a = random_mechanism(0.0, 1.0, 9), b = random_mechanism(0.0, 1.0, 9);
  for (double t = -0.5; t <= 1.5; t += 0.05) CHECK(a(t) == b(t));
  CHECK_THROWS(random_mechanism(1.0, 1.0, 1));
  CHECK_THROWS(random_mechanism(2.0, 1.0, 1));
}

TEST_CASE("spline on a known function") {
  // Natural cubic spline through samples of a straight line reproduces the line.
  std::vector<double> kx{0, 1, 2, 3, 4, 5}, ky(6);
  for (int i = 0; i < 6; ++i) ky[i] = 3.0 * kx[i] - 1.0;
  const NaturalCubicSpline f(kx, ky);
  for (double t = -2.0; t <= 7.0; t += 0.25) CHECK(f(t) == doctest::Approx(3.0 * t - 1.0).epsilon(1e-12));
}

TEST_CASE("generate: shapes and bookkeeping") {
  const Cascade c0 = generate(300, 0, 1);
  CHECK(c0.sample.intermediates.empty());
  CHECK(c0.sample.noises.size() == 1);
  CHECK(c0.spec.mechanisms.size() == 1);
  for (std::size_t i = 0; i < 300; ++i)
    CHECK(std::abs(c0.sample.y[i] - c0.spec.mechanisms[0](c0.sample.x[i]) - c0.sample.noises[0][i]) < 1e-12);

  const Cascade c3 = generate(300, 3, 2);
  CHECK(c3.sample.intermediates.size() == 3);
  CHECK(c3.sample.noises.size() == 4);
  CHECK(c3.spec.mechanisms.size() == 4);
  for (const auto& z : c3.sample.intermediates) CHECK(z.size() == 300);
  const auto& zt = c3.sample.intermediates.back();
  for (std::size_t i = 0; i < 300; ++i) CHECK(std::abs(c3.sample.y[i] - c3.spec.mechanisms[3](zt[i]) - c3.sample.noises[3][i]) < 1e-12);
  // Each mechanism grid spans the realized range of its input.
  const auto& z1 = c3.sample.intermediates[0];
  CHECK(c3.spec.mechanisms[1].knots_x().front() == *std::min_element(z1.begin(), z1.end()));
  CHECK(c3.spec.mechanisms[1].knots_x().back() == *std::max_element(z1.begin(), z1.end()));

  const Cascade again = generate(300, 3, 2);
  CHECK(again.sample.x == c3.sample.x);
  CHECK(again.sample.y == c3.sample.y);
}

TEST_CASE("generated noise is independent of the cause") {
  int pass = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Cascade c = generate(1000, 1, s);
    if (anm::hsic(c.sample.x, c.sample.noises.back(), 200, s).p_value > 0.01) ++pass;
  }
  CHECK(pass >= 18);
}

TEST_CASE("figure1_pair ranges and heteroscedastic residual") {
  const Figure1Sample f = figure1_pair(5000, 3);
  const double lo = 2.0 * std::tanh(-2.5) - 0.5, hi = 2.0 * std::tanh(2.5) + 0.5;
  for (std::size_t i = 0; i < f.x1.size(); ++i) {
    CHECK(f.x1[i] >= -0.5);
    CHECK(f.x1[i] <= 0.5);
    CHECK(f.x2[i] >= lo);
    CHECK(f.x2[i] <= hi);
  }

  // Least-squares natural cubic spline of x3 on x1 (spline values are linear
  // in the knot values, so the basis is the spline through unit vectors).
  const std::size_t knots = 8;
  std::vector<double> kx(knots);
  for (std::size_t k = 0; k < knots; ++k) kx[k] = -0.5 + static_cast<double>(k) / (knots - 1);
  std::vector<NaturalCubicSpline> basis;
  for (std::size_t k = 0; k < knots; ++k) {
    std::vector<double> e(knots, 0.0);
    e[k] = 1.0;
    basis.emplace_back(kx, e);
  }
  const std::size_t m = f.x1.size();
  Eigen::MatrixXd a(m, knots);
  Eigen::VectorXd b(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < knots; ++k) a(i, k) = basis[k](f.x1[i]);
    b(i) = f.x3[i];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd resid = b - a * coef;

  std::vector<double> sorted(f.x1);
  std::sort(sorted.begin(), sorted.end());
  const double t1 = sorted[m / 3], t2 = sorted[2 * m / 3];
  double ss[3] = {0, 0, 0};
  double n[3] = {0, 0, 0};
  for (std::size_t i = 0; i < m; ++i) {
    const int g = f.x1[i] < t1 ? 0 : (f.x1[i] < t2 ? 1 : 2);
    ss[g] += resid(i) * resid(i);
    n[g] += 1.0;
  }
  const double v0 = ss[0] / n[0], v1 = ss[1] / n[1], v2 = ss[2] / n[2];
  CHECK(std::max({v0, v1, v2}) / std::min({v0, v1, v2}) > 1.5);
}

TEST_CASE("writers") {
  const Cascade c = generate(5, 2, 7);
  std::ostringstream pair, csv;
  write_pair_file(pair, c.sample.x, c.sample.y);
  std::istringstream in(pair.str());
  double px = 0.0, py = 0.0;
  std::size_t rows = 0;
  while (in >> px >> py) {
    CHECK(px == c.sample.x[rows]);
    CHECK(py == c.sample.y[rows]);
    ++rows;
  }
  CHECK(rows == 5);

  write_sample_csv(csv, c.sample);
  CHECK(csv.str().rfind("x,z1,z2,y\n", 0) == 0);
  std::ostringstream csv0;
  write_sample_csv(csv0, generate(5, 0, 7).sample);
  CHECK(csv0.str().rfind("x,y\n", 0) == 0);

  const auto j = spec_to_json(c.spec);
  CHECK(j["depth"] == 2);
  CHECK(j["mechanisms"].size() == 3);
  CHECK(j["mechanisms"][0]["knots_x"].size() == kKnots);
}
