#pragma once

// Dense O(m^2) kernels behind the HSIC test and kernel ridge regression.
//
// Each kernel exists twice: `serial` is the reference implementation and
// `parallel` the OpenMP version. Both accumulate in the same order (per-row
// partial sums, then rows in index order; permutations independently), so
// they agree bit for bit and the parallel path never changes results.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace canm::kernels {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Permutation = std::vector<std::uint32_t>;

/// Median of |x_i - x_j| over i < j. Returns 0 when more than half the pairs tie.
double median_pairwise_distance(std::span<const double> x);

namespace serial {
/// K_ij = exp(-(a_i - b_j)^2 / (2 bandwidth^2)).
Matrix gaussian_gram(std::span<const double> a, std::span<const double> b, double bandwidth);
/// In place K <- H K H with H = I - 11'/m (K square and symmetric).
void center(Matrix& k);
/// sum_ij A_ij B_ij.
double frobenius_dot(const Matrix& a, const Matrix& b);
/// For each permutation p: sum_ij A_ij B_{p(i) p(j)}.
std::vector<double> permuted_dots(const Matrix& a, const Matrix& b, std::span<const Permutation> perms);
}  // namespace serial

namespace parallel {
Matrix gaussian_gram(std::span<const double> a, std::span<const double> b, double bandwidth);
void center(Matrix& k);
double frobenius_dot(const Matrix& a, const Matrix& b);
std::vector<double> permuted_dots(const Matrix& a, const Matrix& b, std::span<const Permutation> perms);
}  // namespace parallel

/// Worker count the parallel kernels will use (OpenMP max threads).
int max_threads();
/// Caps the parallel kernels on the calling thread (used inside worker pools).
void limit_threads(int n);

}  // namespace canm::kernels
