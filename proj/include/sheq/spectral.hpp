#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sheq/errors.hpp"
#include "sheq/grid.hpp"

namespace sheq {

/// Closed-form eigenstructure of the finite-difference Laplacian M^2 D on the
/// interior points, plus the sine transforms that diagonalize it.
///
/// Eigenvalues are lambda_j = -4 M^2 sin^2(j pi / (2M)) with eigenvectors
/// phi_j(x_m) = sqrt(2) sin(j pi m / M), j = 1..M-1. The table of eigenvector
/// samples is symmetric in (j, m), so the forward and inverse transforms share
/// it. Instances are immutable after construction and safe to share across
/// threads; the semigroup factor cache is internally synchronized.
class SpectralBasis {
 public:
  explicit SpectralBasis(int cells) : M_(cells) {
    if (cells < 2)
      throw ValidationError("SpectralBasis: M must be >= 2, got " + std::to_string(cells));
    const int n = M_ - 1;
    lambda_.resize(n);
    phi_.resize(static_cast<std::size_t>(n) * n);
    const double pi = std::numbers::pi;
    for (int j = 1; j <= n; ++j) {
      const double s = std::sin(j * pi / (2.0 * M_));
      lambda_[j - 1] = -4.0 * s * s * static_cast<double>(M_) * M_;
      for (int m = 1; m <= n; ++m)
        phi_[static_cast<std::size_t>(j - 1) * n + (m - 1)] =
            std::numbers::sqrt2 * std::sin(j * m * pi / M_);
    }
  }

  SpectralBasis(const SpectralBasis&) = delete;
  SpectralBasis& operator=(const SpectralBasis&) = delete;

  int cells() const { return M_; }
  int modes() const { return M_ - 1; }

  const std::vector<double>& eigenvalues() const { return lambda_; }
  double eigenvalue(int j) const { return lambda_.at(j - 1); }  // 1-based mode index

  /// Eigenvector samples phi_j(x_m) for m = 1..M-1 (1-based mode index).
  std::span<const double> mode(int j) const {
    const int n = M_ - 1;
    if (j < 1 || j > n) throw ValidationError("SpectralBasis::mode: index out of range");
    return {phi_.data() + static_cast<std::size_t>(j - 1) * n, static_cast<std::size_t>(n)};
  }

  double mode_value(int j, int m) const {
    return phi_[static_cast<std::size_t>(j - 1) * (M_ - 1) + (m - 1)];
  }

  /// Piecewise-linear extension of mode j to any x in [0,1] (zero at 0 and 1).
  double mode_interpolated(int j, double x) const {
    if (x < 0.0 || x > 1.0)
      throw ValidationError("SpectralBasis::mode_interpolated: x must lie in [0,1]");
    int l = static_cast<int>(std::floor(M_ * x));
    if (l >= M_) l = M_ - 1;
    const double theta = M_ * x - l;
    const double left = (l == 0) ? 0.0 : mode_value(j, l);
    const double right = (l + 1 == M_) ? 0.0 : mode_value(j, l + 1);
    return left + theta * (right - left);
  }

  /// Sine coefficients c_j = (1/M) sum_m phi_j(x_m) v_m of an interior vector.
  std::vector<double> to_modes(std::span<const double> v) const {
    const int n = M_ - 1;
    if (static_cast<int>(v.size()) != n)
      throw ValidationError("to_modes: expected length " + std::to_string(n));
    std::vector<double> coeffs(n, 0.0);
    for (int j = 0; j < n; ++j) {
      const double* row = phi_.data() + static_cast<std::size_t>(j) * n;
      double acc = 0.0;
      for (int m = 0; m < n; ++m) acc += row[m] * v[m];
      coeffs[j] = acc / M_;
    }
    return coeffs;
  }

  /// Reconstructs v_m = sum_j c_j phi_j(x_m) from sine coefficients.
  std::vector<double> from_modes(std::span<const double> coeffs) const {
    const int n = M_ - 1;
    if (static_cast<int>(coeffs.size()) != n)
      throw ValidationError("from_modes: expected length " + std::to_string(n));
    std::vector<double> v(n, 0.0);
    for (int j = 0; j < n; ++j) {
      const double* row = phi_.data() + static_cast<std::size_t>(j) * n;
      const double c = coeffs[j];
      if (c == 0.0) continue;
      for (int m = 0; m < n; ++m) v[m] += c * row[m];
    }
    return v;
  }

  /// Per-mode decay factors exp(lambda_j * lag), memoized on the exact bit
  /// pattern of the lag so fixed-step runs reuse them.
  std::shared_ptr<const std::vector<double>> semigroup_factors(double lag) const {
    if (lag < 0.0) throw ValidationError("semigroup_factors: lag must be nonnegative");
    const std::uint64_t key = std::bit_cast<std::uint64_t>(lag);
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = factor_cache_.find(key);
      if (it != factor_cache_.end()) return it->second;
    }
    auto factors = std::make_shared<std::vector<double>>(lambda_.size());
    for (std::size_t j = 0; j < lambda_.size(); ++j) (*factors)[j] = std::exp(lambda_[j] * lag);
    std::lock_guard<std::mutex> lock(cache_mutex_);
    return factor_cache_.try_emplace(key, std::move(factors)).first->second;
  }

  /// Applies the discrete heat semigroup e^{A lag} by diagonalization:
  /// transform to modes, scale by exp(lambda_j lag), transform back.
  std::vector<double> apply_semigroup(std::span<const double> v, double lag) const {
    if (lag < 0.0) throw ValidationError("apply_semigroup: lag must be nonnegative");
    if (lag == 0.0) return std::vector<double>(v.begin(), v.end());
    auto factors = semigroup_factors(lag);
    std::vector<double> coeffs = to_modes(v);
    for (std::size_t j = 0; j < coeffs.size(); ++j) coeffs[j] *= (*factors)[j];
    return from_modes(coeffs);
  }

  /// Dense propagator e^{A lag} assembled from the eigendecomposition,
  /// row-major (M-1) x (M-1). One matrix-vector product per step then
  /// replaces the transform pair in the stepper hot loop. Memoized on the
  /// lag bit pattern so repeated fixed-step runs share one assembly.
  std::shared_ptr<const std::vector<double>> propagator_cached(double lag) const {
    if (lag < 0.0) throw ValidationError("propagator: lag must be nonnegative");
    const std::uint64_t key = std::bit_cast<std::uint64_t>(lag);
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = propagator_cache_.find(key);
      if (it != propagator_cache_.end()) return it->second;
    }
    const int n = M_ - 1;
    auto factors = semigroup_factors(lag);
    auto P = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
      const double* row = phi_.data() + static_cast<std::size_t>(j) * n;
      const double w = (*factors)[j] / M_;
      for (int m = 0; m < n; ++m) {
        const double a = w * row[m];
        double* __restrict out = P->data() + static_cast<std::size_t>(m) * n;
        for (int l = 0; l < n; ++l) out[l] += a * row[l];
      }
    }
    std::lock_guard<std::mutex> lock(cache_mutex_);
    return propagator_cache_.try_emplace(key, std::move(P)).first->second;
  }

  std::vector<double> propagator(double lag) const { return *propagator_cached(lag); }

  /// Propagator folded over the x -> 1-x reversal it commutes with: the
  /// symmetric/antisymmetric halves act on the corresponding reflection
  /// components of a vector. Half the arithmetic of the dense form; stored
  /// column-major with rows padded to kStripe for the stepper's hot loop.
  struct FoldedPropagator {
    static constexpr int kStripe = 16;
    int half = 0;      // reflection pairs
    int odd = 0;       // 1 when a center point exists
    int rows = 0;      // outputs computed directly (= half + odd)
    int rstride = 0;   // rows padded to a stripe multiple
    std::vector<double> sym;   // (half + odd) columns, center column last
    std::vector<double> asym;  // half columns
  };

  std::shared_ptr<const FoldedPropagator> folded_propagator_cached(double lag) const {
    if (lag < 0.0) throw ValidationError("propagator: lag must be nonnegative");
    const std::uint64_t key = std::bit_cast<std::uint64_t>(lag);
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = folded_cache_.find(key);
      if (it != folded_cache_.end()) return it->second;
    }
    const int n = M_ - 1;
    const auto P = propagator_cached(lag);
    auto at = [&](int m, int l) { return (*P)[static_cast<std::size_t>(m) * n + l]; };
    auto F = std::make_shared<FoldedPropagator>();
    F->half = n / 2;
    F->odd = n % 2;
    F->rows = F->half + F->odd;
    F->rstride = (F->rows + FoldedPropagator::kStripe - 1) & ~(FoldedPropagator::kStripe - 1);
    F->sym.assign(static_cast<std::size_t>(F->half + F->odd) * F->rstride, 0.0);
    F->asym.assign(std::max<std::size_t>(1, static_cast<std::size_t>(F->half) * F->rstride),
                   0.0);
    for (int i = 0; i < F->half; ++i)
      for (int m = 0; m < F->rows; ++m) {
        F->sym[static_cast<std::size_t>(i) * F->rstride + m] =
            0.5 * (at(m, i) + at(m, n - 1 - i));
        F->asym[static_cast<std::size_t>(i) * F->rstride + m] =
            0.5 * (at(m, i) - at(m, n - 1 - i));
      }
    if (F->odd)  // center column rides along with the symmetric half
      for (int m = 0; m < F->rows; ++m)
        F->sym[static_cast<std::size_t>(F->half) * F->rstride + m] = at(m, F->half);
    std::lock_guard<std::mutex> lock(cache_mutex_);
    return folded_cache_.try_emplace(key, std::move(F)).first->second;
  }

 private:
  int M_;
  std::vector<double> lambda_;
  std::vector<double> phi_;  // row-major, phi_[(j-1)*(M-1) + (m-1)]
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<const std::vector<double>>>
      factor_cache_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<const std::vector<double>>>
      propagator_cache_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<const FoldedPropagator>>
      folded_cache_;
};

/// Builds the eigenstructure for M cells. Rejects M < 2.
inline std::shared_ptr<const SpectralBasis> build_basis(int cells) {
  return std::make_shared<const SpectralBasis>(cells);
}

/// Discrete L2 norm on the interior grid, ||v||^2 = (1/M) sum_m v_m^2.
inline double discrete_l2_norm(std::span<const double> v, int M) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / M);
}

}  // namespace sheq
