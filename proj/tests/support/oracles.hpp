#pragma once

// Test-side reference implementations. Everything here recomputes quantities
// by a route independent of the library code under test: dense linear
// algebra, scaling-and-squaring matrix exponentials, direct quadrature.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix zeros(int n) { return Matrix(n, std::vector<double>(n, 0.0)); }

inline Matrix identity(int n) {
  Matrix I = zeros(n);
  for (int i = 0; i < n; ++i) I[i][i] = 1.0;
  return I;
}

inline Matrix matmul(const Matrix& A, const Matrix& B) {
  const int n = static_cast<int>(A.size());
  Matrix C = zeros(n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double a = A[i][k];
      if (a == 0.0) continue;
      for (int j = 0; j < n; ++j) C[i][j] += a * B[k][j];
    }
  return C;
}

inline std::vector<double> matvec(const Matrix& A, std::span<const double> v) {
  const int n = static_cast<int>(A.size());
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[i] += A[i][j] * v[j];
  return out;
}

/// Scaled finite-difference Laplacian M^2 D on the interior points.
inline Matrix fd_laplacian(int M) {
  const int n = M - 1;
  Matrix A = zeros(n);
  const double scale = static_cast<double>(M) * M;
  for (int i = 0; i < n; ++i) {
    A[i][i] = -2.0 * scale;
    if (i > 0) A[i][i - 1] = scale;
    if (i + 1 < n) A[i][i + 1] = scale;
  }
  return A;
}

inline double max_abs(const Matrix& A) {
  double m = 0.0;
  for (const auto& row : A)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

/// Dense matrix exponential by scaling and squaring with a Taylor kernel.
inline Matrix expm(Matrix A) {
  const int n = static_cast<int>(A.size());
  int squarings = 0;
  double norm = max_abs(A) * n;
  while (norm > 0.5 && squarings < 60) {
    for (auto& row : A)
      for (double& v : row) v *= 0.5;
    norm *= 0.5;
    ++squarings;
  }
  Matrix result = identity(n);
  Matrix term = identity(n);
  for (int k = 1; k <= 24; ++k) {
    term = matmul(term, A);
    for (auto& row : term)
      for (double& v : row) v /= k;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) result[i][j] += term[i][j];
  }
  for (int s = 0; s < squarings; ++s) result = matmul(result, result);
  return result;
}

/// Dense Gaussian elimination with partial pivoting.
inline std::vector<double> solve_dense(Matrix A, std::vector<double> b) {
  const int n = static_cast<int>(A.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
    if (A[pivot][col] == 0.0) throw std::runtime_error("solve_dense: singular matrix");
    std::swap(A[col], A[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = col + 1; r < n; ++r) {
      const double f = A[r][col] / A[col][col];
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= A[r][c] * x[c];
    x[r] = acc / A[r][r];
  }
  return x;
}

/// Direct dense sine analysis, c_j = (1/M) sum_m sqrt(2) sin(j pi m / M) v_m.
inline std::vector<double> dst_forward_dense(std::span<const double> v, int M) {
  const int n = M - 1;
  std::vector<double> out(n, 0.0);
  for (int j = 1; j <= n; ++j) {
    double acc = 0.0;
    for (int m = 1; m <= n; ++m)
      acc += std::numbers::sqrt2 * std::sin(j * m * std::numbers::pi / M) * v[m - 1];
    out[j - 1] = acc / M;
  }
  return out;
}

inline std::vector<double> dst_inverse_dense(std::span<const double> coeffs, int M) {
  const int n = M - 1;
  std::vector<double> out(n, 0.0);
  for (int m = 1; m <= n; ++m) {
    double acc = 0.0;
    for (int j = 1; j <= n; ++j)
      acc += coeffs[j - 1] * std::numbers::sqrt2 * std::sin(j * m * std::numbers::pi / M);
    out[m - 1] = acc;
  }
  return out;
}

/// Composite Simpson quadrature on [a,b].
template <class F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int k = 1; k < panels; ++k) acc += (k % 2 == 1 ? 4.0 : 2.0) * f(a + k * h);
  return acc * h / 3.0;
}

/// Kolmogorov-Smirnov distance of a sample against the standard normal CDF.
inline double ks_statistic_normal(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-sample[i] / std::numbers::sqrt2);
    d = std::max(d, std::abs(cdf - static_cast<double>(i + 1) / n));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
  }
  return d;
}

inline double mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / (static_cast<double>(v.size()) - 1.0);
}

}  // namespace oracle
