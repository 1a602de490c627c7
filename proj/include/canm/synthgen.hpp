#pragma once

// Synthetic cascade generator: a Gaussian-mixture cause pushed through T+1
// random spline mechanisms, each followed by additive standard-normal noise.
// Every intermediate stage is kept so latent-recovery checks have ground truth.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "canm/rng.hpp"

namespace canm::synthgen {

inline constexpr std::size_t kKnots = 6;

/// Natural cubic spline through given knots; linear extrapolation with the
/// boundary slope outside [knots_x.front(), knots_x.back()].
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> knots_x, std::vector<double> knots_y);

  double operator()(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;

  const std::vector<double>& knots_x() const noexcept { return x_; }
  const std::vector<double>& knots_y() const noexcept { return y_; }
  const std::vector<double>& knot_second_derivatives() const noexcept { return m_; }

 private:
  std::size_t interval(double x) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;
};

struct MixtureParams {
  std::array<double, 3> weights{};
  std::array<double, 3> means{};
  std::array<double, 3> stddevs{};

  double mean() const noexcept;
  double variance() const noexcept;
};

/// Dirichlet(1,1,1) weights, N(0,1) means, stddev = |Laplace(0,1)| clipped to [0.2, 2].
MixtureParams draw_mixture(Rng& rng);
std::vector<double> sample_mixture(const MixtureParams& p, std::size_t m, Rng& rng);

struct CauseSample {
  MixtureParams mixture;
  std::vector<double> values;
};

/// Draws mixture parameters and then m iid samples, all from `seed`.
CauseSample sample_cause(std::size_t m, std::uint64_t seed);

/// Natural cubic spline through 6 equally spaced knots on [input_min, input_max]
/// with N(0,1) knot values. Requires input_min < input_max.
NaturalCubicSpline random_mechanism(double input_min, double input_max, std::uint64_t seed);

struct CascadeSpec {
  std::size_t depth = 0;
  std::vector<NaturalCubicSpline> mechanisms;  // depth + 1 stages
  MixtureParams cause;
  std::vector<double> noise_std;  // per stage
  std::uint64_t seed = 0;
};

struct CascadeSample {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::vector<double>> intermediates;  // Z_1..Z_T
  std::vector<std::vector<double>> noises;         // N_1..N_T, then the final-stage noise
  std::uint64_t seed = 0;
};

struct Cascade {
  CascadeSpec spec;
  CascadeSample sample;
};

/// z_0 = x, z_t = f_t(z_{t-1}) + n_t for t = 1..T+1, y = z_{T+1}. Each f_t is
/// built on the realized range of z_{t-1}. Pure function of (m, depth, seed).
Cascade generate(std::size_t m, std::size_t depth, std::uint64_t seed);

struct Figure1Sample {
  std::vector<double> x1;
  std::vector<double> x2;
  std::vector<double> x3;
};

/// X2 = 2 tanh(5 X1) + N2, X3 = (X2/2)^3 + N3 with X1, N2, N3 ~ U(-0.5, 0.5).
Figure1Sample figure1_pair(std::size_t m, std::uint64_t seed);

/// Two-column whitespace-delimited text, 17 significant digits.
void write_pair_file(std::ostream& os, std::span<const double> x, std::span<const double> y);
/// CSV with header x,z1,...,zT,y.
void write_sample_csv(std::ostream& os, const CascadeSample& sample);
nlohmann::json spec_to_json(const CascadeSpec& spec);

}  // namespace canm::synthgen
