#include "canm/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "canm/common.hpp"

namespace canm::synthgen {

// ---------------------------------------------------------------- spline

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> knots_x, std::vector<double> knots_y)
    : x_(std::move(knots_x)), y_(std::move(knots_y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw DataError("spline needs at least two knots with matching values");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw DataError("spline knots must be strictly increasing");

  // Second derivatives M_i with M_0 = M_{n-1} = 0 (natural end conditions):
  // h_{i-1} M_{i-1} + 2 (h_{i-1} + h_i) M_i + h_i M_{i+1} = 6 (d_i - d_{i-1}).
  m_.assign(n, 0.0);
  if (n == 2) return;
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  // Thomas algorithm; the system is symmetric and diagonally dominant.
  for (std::size_t i = 1; i < k; ++i) {
    const double lower = x_[i + 1] - x_[i];
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = (rhs[i] - upper[i] * m_[i + 2]) / diag[i];
}

std::size_t NaturalCubicSpline::interval(double x) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const auto i = static_cast<std::size_t>(std::distance(x_.begin(), it));
  return std::clamp<std::size_t>(i == 0 ? 0 : i - 1, 0, x_.size() - 2);
}

double NaturalCubicSpline::operator()(double x) const {
  if (x < x_.front()) return y_.front() + derivative(x_.front()) * (x - x_.front());
  if (x > x_.back()) return y_.back() + derivative(x_.back()) * (x - x_.back());
  const std::size_t i = interval(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double NaturalCubicSpline::derivative(double x) const {
  const double xc = std::clamp(x, x_.front(), x_.back());
  const std::size_t i = interval(xc);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - xc) / h, b = (xc - x_[i]) / h;
  return (y_[i + 1] - y_[i]) / h + ((3.0 * b * b - 1.0) * m_[i + 1] - (3.0 * a * a - 1.0) * m_[i]) * h / 6.0;
}

double NaturalCubicSpline::second_derivative(double x) const {
  if (x < x_.front() || x > x_.back()) return 0.0;
  const std::size_t i = interval(x);
  const double h = x_[i + 1] - x_[i];
  return ((x_[i + 1] - x) * m_[i] + (x - x_[i]) * m_[i + 1]) / h;
}

// ---------------------------------------------------------------- cause

double MixtureParams::mean() const noexcept {
  double mu = 0.0;
  for (std::size_t k = 0; k < 3; ++k) mu += weights[k] * means[k];
  return mu;
}

double MixtureParams::variance() const noexcept {
  const double mu = mean();
  double v = 0.0;
  for (std::size_t k = 0; k < 3; ++k) v += weights[k] * (stddevs[k] * stddevs[k] + (means[k] - mu) * (means[k] - mu));
  return v;
}

MixtureParams draw_mixture(Rng& rng) {
  MixtureParams p;
  std::exponential_distribution<double> gamma1(1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  double total = 0.0;
  for (auto& w : p.weights) total += (w = gamma1(rng));
  for (auto& w : p.weights) w /= total;
  for (auto& mu : p.means) mu = normal(rng);
  for (auto& sd : p.stddevs) {
    const double u = unit(rng);
    const double laplace = -std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
    sd = std::clamp(std::abs(laplace), 0.2, 2.0);
  }
  return p;
}

std::vector<double> sample_mixture(const MixtureParams& p, std::size_t m, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(m);
  for (auto& v : out) {
    const double u = unit(rng);
    std::size_t k = 0;
    for (double acc = p.weights[0]; k < 2 && u >= acc; acc += p.weights[++k]) {
    }
    v = p.means[k] + p.stddevs[k] * normal(rng);
  }
  return out;
}

CauseSample sample_cause(std::size_t m, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::cause});
  CauseSample s;
  s.mixture = draw_mixture(rng);
  s.values = sample_mixture(s.mixture, m, rng);
  return s;
}

NaturalCubicSpline random_mechanism(double input_min, double input_max, std::uint64_t seed) {
  if (!(input_min < input_max)) throw DataError("random_mechanism: empty input range");
  Rng rng = make_rng(seed, {stream::mechanism});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> kx(kKnots), ky(kKnots);
  for (std::size_t i = 0; i < kKnots; ++i) {
    kx[i] = input_min + (input_max - input_min) * static_cast<double>(i) / static_cast<double>(kKnots - 1);
    ky[i] = normal(rng);
  }
  kx.back() = input_max;
  return NaturalCubicSpline(std::move(kx), std::move(ky));
}

// ---------------------------------------------------------------- cascade

Cascade generate(std::size_t m, std::size_t depth, std::uint64_t seed) {
  if (m < 1) throw DataError("generate: m must be >= 1");
  Cascade c;
  c.spec.depth = depth;
  c.spec.seed = seed;
  c.sample.seed = seed;
  CauseSample cause = sample_cause(m, derive_seed(seed, {stream::cause}));
  c.spec.cause = cause.mixture;
  c.sample.x = cause.values;

  std::vector<double> z = c.sample.x;
  for (std::size_t t = 1; t <= depth + 1; ++t) {
    auto [lo, hi] = std::minmax_element(z.begin(), z.end());
    double a = *lo, b = *hi;
    if (!(a < b)) {  // a single point has no range to span
      a -= 0.5;
      b += 0.5;
    }
    NaturalCubicSpline f = random_mechanism(a, b, derive_seed(seed, {stream::mechanism, t}));
    Rng noise_rng = make_rng(seed, {stream::stage_noise, t});
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = 1.0;
    std::vector<double> noise(m), next(m);
    for (std::size_t i = 0; i < m; ++i) {
      noise[i] = sd * normal(noise_rng);
      next[i] = f(z[i]) + noise[i];
    }
    c.spec.mechanisms.push_back(std::move(f));
    c.spec.noise_std.push_back(sd);
    c.sample.noises.push_back(std::move(noise));
    if (t <= depth) c.sample.intermediates.push_back(next);
    z = std::move(next);
  }
  c.sample.y = std::move(z);
  return c;
}

Figure1Sample figure1_pair(std::size_t m, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::cause});
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Figure1Sample s;
  s.x1.resize(m);
  s.x2.resize(m);
  s.x3.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    s.x1[i] = u(rng);
    const double n2 = u(rng), n3 = u(rng);
    s.x2[i] = 2.0 * std::tanh(5.0 * s.x1[i]) + n2;
    const double half = s.x2[i] / 2.0;
    s.x3[i] = half * half * half + n3;
  }
  return s;
}

// ---------------------------------------------------------------- emission

namespace {
void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}
}  // namespace

void write_pair_file(std::ostream& os, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("write_pair_file: column lengths differ");
  for (std::size_t i = 0; i < x.size(); ++i) {
    put(os, x[i]);
    os << ' ';
    put(os, y[i]);
    os << '\n';
  }
}

void write_sample_csv(std::ostream& os, const CascadeSample& s) {
  os << "x";
  for (std::size_t t = 0; t < s.intermediates.size(); ++t) os << ",z" << t + 1;
  os << ",y\n";
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    put(os, s.x[i]);
    for (const auto& z : s.intermediates) {
      os << ',';
      put(os, z[i]);
    }
    os << ',';
    put(os, s.y[i]);
    os << '\n';
  }
}

nlohmann::json spec_to_json(const CascadeSpec& spec) {
  nlohmann::json j;
  j["depth"] = spec.depth;
  j["seed"] = spec.seed;
  j["cause_mixture"] = {{"weights", spec.cause.weights}, {"means", spec.cause.means}, {"stddevs", spec.cause.stddevs}};
  auto& mech = j["mechanisms"] = nlohmann::json::array();
  for (const auto& f : spec.mechanisms)
    mech.push_back({{"knots_x", f.knots_x()},
                    {"knots_y", f.knots_y()},
                    {"second_derivatives", f.knot_second_derivatives()},
                    {"extrapolation", "linear"}});
  j["noise_std"] = spec.noise_std;
  return j;
}

}  // namespace canm::synthgen
