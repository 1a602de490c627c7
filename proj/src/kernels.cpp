#include "canm/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "canm/common.hpp"

namespace canm::kernels {

namespace {

void check_square_same(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != a.cols() || a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": expected two square matrices of equal size");
}

double row_dot(const Matrix& a, const Matrix& b, Eigen::Index i) {
  const double* ra = a.data() + i * a.cols();
  const double* rb = b.data() + i * b.cols();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) acc += ra[j] * rb[j];
  return acc;
}

double permuted_dot(const Matrix& a, const Matrix& b, const Permutation& p) {
  const auto n = a.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* ra = a.data() + i * n;
    const double* rb = b.data() + static_cast<Eigen::Index>(p[i]) * n;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += ra[j] * rb[p[j]];
    total += acc;
  }
  return total;
}

void check_perms(const Matrix& a, std::span<const Permutation> perms) {
  for (const auto& p : perms)
    if (static_cast<Eigen::Index>(p.size()) != a.rows()) throw DimensionError("permutation length mismatch");
}

double gram_entry(double a, double b, double inv_two_bw2) {
  const double d = a - b;
  return std::exp(-d * d * inv_two_bw2);
}

double inv_two_bw2(double bandwidth) {
  if (!(bandwidth > 0.0)) throw DataError("gaussian_gram: bandwidth must be > 0");
  return 1.0 / (2.0 * bandwidth * bandwidth);
}

// Shared tail of center(): row means are computed per row, the grand mean by
// summing row means in index order.
double grand_mean(const std::vector<double>& row_means) {
  double g = 0.0;
  for (double r : row_means) g += r;
  return g / static_cast<double>(row_means.size());
}

}  // namespace

double median_pairwise_distance(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::abs(x[i] - x[j]));
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

int max_threads() { return omp_get_max_threads(); }

void limit_threads(int n) { omp_set_num_threads(n < 1 ? 1 : n); }

// ---------------------------------------------------------------- serial

namespace serial {

Matrix gaussian_gram(std::span<const double> a, std::span<const double> b, double bandwidth) {
  const double s = inv_two_bw2(bandwidth);
  Matrix k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gram_entry(a[i], b[j], s);
  return k;
}

void center(Matrix& k) {
  if (k.rows() != k.cols()) throw DimensionError("center: matrix must be square");
  const auto n = k.rows();
  std::vector<double> rm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += k(i, j);
    rm[static_cast<std::size_t>(i)] = acc / static_cast<double>(n);
  }
  const double g = grand_mean(rm);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = k(i, j) - rm[static_cast<std::size_t>(i)] - rm[static_cast<std::size_t>(j)] + g;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  check_square_same(a, b, "frobenius_dot");
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) total += row_dot(a, b, i);
  return total;
}

std::vector<double> permuted_dots(const Matrix& a, const Matrix& b, std::span<const Permutation> perms) {
  check_square_same(a, b, "permuted_dots");
  check_perms(a, perms);
  std::vector<double> out(perms.size());
  for (std::size_t p = 0; p < perms.size(); ++p) out[p] = permuted_dot(a, b, perms[p]);
  return out;
}

}  // namespace serial

// ---------------------------------------------------------------- parallel

namespace parallel {

Matrix gaussian_gram(std::span<const double> a, std::span<const double> b, double bandwidth) {
  const double s = inv_two_bw2(bandwidth);
  const auto rows = static_cast<Eigen::Index>(a.size()), cols = static_cast<Eigen::Index>(b.size());
  Matrix k(rows, cols);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) k(i, j) = gram_entry(a[i], b[j], s);
  return k;
}

void center(Matrix& k) {
  if (k.rows() != k.cols()) throw DimensionError("center: matrix must be square");
  const auto n = k.rows();
  std::vector<double> rm(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += k(i, j);
    rm[static_cast<std::size_t>(i)] = acc / static_cast<double>(n);
  }
  const double g = grand_mean(rm);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = k(i, j) - rm[static_cast<std::size_t>(i)] - rm[static_cast<std::size_t>(j)] + g;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  check_square_same(a, b, "frobenius_dot");
  std::vector<double> rows(static_cast<std::size_t>(a.rows()));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < a.rows(); ++i) rows[static_cast<std::size_t>(i)] = row_dot(a, b, i);
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

std::vector<double> permuted_dots(const Matrix& a, const Matrix& b, std::span<const Permutation> perms) {
  check_square_same(a, b, "permuted_dots");
  check_perms(a, perms);
  std::vector<double> out(perms.size());
  const auto count = static_cast<std::ptrdiff_t>(perms.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < count; ++p) out[static_cast<std::size_t>(p)] = permuted_dot(a, b, perms[p]);
  return out;
}

}  // namespace parallel

}  // namespace canm::kernels
