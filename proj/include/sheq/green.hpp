#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sheq/errors.hpp"
#include "sheq/grid.hpp"
#include "sheq/problem.hpp"
#include "sheq/spectral.hpp"

namespace sheq {

/// Evaluation point of the discrete heat kernel: piecewise-linear in x,
/// piecewise-constant (floor-to-grid) in y.
struct KernelQuery {
  int M = 2;
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// Discrete kernel G(t,x,y) = sum_j exp(lambda_j t) phi_j^lin(x) phi_j(floor(y)).
inline double green_eval(const KernelQuery& q, const SpectralBasis& basis) {
  if (q.M != basis.cells()) throw ValidationError("green_eval: query M does not match basis");
  if (q.t < 0.0) throw ValidationError("green_eval: t must be nonnegative");
  const int cell = grid_floor_index(q.y, q.M);
  if (cell == 0 || cell >= q.M) return 0.0;  // kernel vanishes where phi_j does
  double acc = 0.0;
  for (int j = 1; j < q.M; ++j)
    acc += std::exp(basis.eigenvalue(j) * q.t) * basis.mode_interpolated(j, q.x) *
           basis.mode_value(j, cell);
  return acc;
}

/// Exact integral over y of |G(t,x,y)|^2: the floor-to-grid factors are an
/// orthonormal family in y, so the cross terms drop and the cell-wise
/// quadrature reduces to a plain mode sum.
inline double green_l2y(int M, double t, double x, const SpectralBasis& basis) {
  if (M != basis.cells()) throw ValidationError("green_l2y: M does not match basis");
  if (!(t > 0.0)) throw ValidationError("green_l2y: t must be positive");
  double acc = 0.0;
  for (int j = 1; j < M; ++j) {
    const double phi = basis.mode_interpolated(j, x);
    const double e = std::exp(basis.eigenvalue(j) * t);
    acc += e * e * phi * phi;
  }
  return acc;
}

/// Exact integral over y of |G(t,x,y) - G(s,x,y)|^2, same reduction.
inline double green_l2y_increment(int M, double t, double s, double x,
                                  const SpectralBasis& basis) {
  if (M != basis.cells()) throw ValidationError("green_l2y_increment: M does not match basis");
  if (t < 0.0 || s < 0.0) throw ValidationError("green_l2y_increment: times must be nonnegative");
  double acc = 0.0;
  for (int j = 1; j < M; ++j) {
    const double phi = basis.mode_interpolated(j, x);
    const double d = std::exp(basis.eigenvalue(j) * t) - std::exp(basis.eigenvalue(j) * s);
    acc += d * d * phi * phi;
  }
  return acc;
}

/// Continuous Dirichlet heat kernel, truncated so the dropped tail is below
/// 1e-12. Documentation utility only; nothing downstream consumes it.
inline double continuous_heat_kernel(double t, double x, double y) {
  if (!(t > 0.0)) throw ValidationError("continuous_heat_kernel: t must be positive");
  const double pi2 = std::numbers::pi * std::numbers::pi;
  int truncation = 1;
  while (2.0 * (truncation + 1) * std::exp(-static_cast<double>(truncation + 1) * (truncation + 1) *
                                           pi2 * t) > 1e-12 && truncation < 4000)
    ++truncation;
  double acc = 0.0;
  for (int j = 1; j <= truncation; ++j)
    acc += 2.0 * std::exp(-static_cast<double>(j) * j * pi2 * t) *
           std::sin(j * std::numbers::pi * x) * std::sin(j * std::numbers::pi * y);
  return acc;
}

/// One step of the frozen-integrand mild form: the kernel quadrature that the
/// exponential scheme must reproduce. All y-integrals are exact cell sums, so
/// agreement with the scheme is a roundoff-level statement, not a quadrature
/// tolerance. This routine exists to cross-validate the stepper and stays on
/// the direct kernel-evaluation route throughout.
inline std::vector<double> mild_step_oracle(std::span<const double> u, const Problem& problem,
                                            double t_n, double dt, std::span<const double> dW,
                                            const SpectralBasis& basis) {
  const int M = basis.cells();
  if (static_cast<int>(u.size()) != M - 1)
    throw ValidationError("mild_step_oracle: state length must be M-1");
  if (dW.size() != u.size())
    throw ValidationError("mild_step_oracle: increment length must match state");
  if (!(dt > 0.0)) throw ValidationError("mild_step_oracle: dt must be positive");

  const double root_m = std::sqrt(static_cast<double>(M));
  std::vector<double> out(M - 1, 0.0);
  for (int m = 1; m < M; ++m) {
    double acc = 0.0;
    for (int l = 1; l < M; ++l) {
      // Any y inside cell l sees the same kernel value.
      const double y = (l + 0.5) / M;
      const double g = green_eval({M, dt, static_cast<double>(m) / M, y}, basis);
      const double x_l = static_cast<double>(l) / M;
      const double u_l = u[l - 1];
      acc += g * (u_l + dt * problem.f(t_n, x_l, u_l)) / M;
      acc += g * problem.sigma(t_n, x_l, u_l) * dW[l - 1] / root_m;
    }
    out[m - 1] = acc;
  }
  return out;
}

/// Which kernel estimate a probe sweep targets.
enum class KernelBound {
  kIntegratedIncrement,  // int_0^s int |G(t-r) - G(s-r)|^2 dy dr <= C (t-s)^(1/2)
  kSquareIntegral,       // int |G(t)|^2 dy <= C / sqrt(t)
  kIncrement,            // int |G(t) - G(s)|^2 dy <= C s^-a (t-s)^(a-1/2)
};

inline std::string_view kernel_bound_label(KernelBound b) {
  switch (b) {
    case KernelBound::kIntegratedIncrement: return "integrated-increment";
    case KernelBound::kSquareIntegral: return "square-integral";
    case KernelBound::kIncrement: return "increment";
  }
  throw ValidationError("kernel_bound_label: unknown bound");
}

struct BoundProbe {
  int M = 0;
  double s = 0.0;
  double t = 0.0;
  double x = 0.0;
  double alpha = 0.0;
  double lhs = 0.0;
  double envelope = 0.0;
  double ratio = 0.0;
};

struct BoundFit {
  KernelBound bound;
  double fitted_constant = 0.0;    // max measured/envelope ratio on the probe grid
  double refined_constant = 0.0;   // same on the doubled grid
  BoundProbe max_probe;
  bool passed = false;
  std::vector<BoundProbe> probes;
};

/// Density of the probe sweep; refinement doubles every count.
struct ProbeGridSpec {
  int time_count = 6;
  int gap_count = 5;
  int x_count = 9;
  int alpha_count = 6;
  double t_max = 0.5;
  double alpha_min = 0.6;
  double alpha_max = 2.4;
  int time_panels = 128;  // Simpson panels for the r-integral of bound (i)
};

namespace detail {

// Simpson rule for int_0^s |G(t-r) - G(s-r)|^2 (integrated over y) dr.
inline double integrated_increment_lhs(int M, double s, double t, double x,
                                       const SpectralBasis& basis, int panels) {
  if (panels % 2 != 0) ++panels;
  const double h = s / panels;
  double acc = 0.0;
  for (int k = 0; k <= panels; ++k) {
    const double r = k * h;
    const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    acc += w * green_l2y_increment(M, t - r, s - r, x, basis);
  }
  return acc * h / 3.0;
}

inline std::vector<double> linspace_interior(double lo, double hi, int count) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i)
    out[i] = lo + (hi - lo) * (i + 1) / static_cast<double>(count + 1);
  return out;
}

inline void sweep_bound(KernelBound bound, int M, const SpectralBasis& basis,
                        const ProbeGridSpec& grid, std::vector<BoundProbe>& out) {
  const auto xs = linspace_interior(0.0, 1.0, grid.x_count);
  const auto ss = linspace_interior(0.0, grid.t_max * 0.5, grid.time_count);
  const auto gaps = linspace_interior(0.0, grid.t_max * 0.5, grid.gap_count);
  const auto alphas = linspace_interior(grid.alpha_min, grid.alpha_max, grid.alpha_count);

  switch (bound) {
    case KernelBound::kIntegratedIncrement:
      for (double s : ss)
        for (double gap : gaps)
          for (double x : xs) {
            const double t = s + gap;
            const double lhs = integrated_increment_lhs(M, s, t, x, basis, grid.time_panels);
            const double env = std::sqrt(gap);
            out.push_back({M, s, t, x, 0.0, lhs, env, lhs / env});
          }
      break;
    case KernelBound::kSquareIntegral:
      for (double t : ss)
        for (double x : xs) {
          const double lhs = green_l2y(M, t, x, basis);
          const double env = 1.0 / std::sqrt(t);
          out.push_back({M, 0.0, t, x, 0.0, lhs, env, lhs / env});
        }
      break;
    case KernelBound::kIncrement:
      for (double s : ss)
        for (double gap : gaps)
          for (double x : xs)
            for (double alpha : alphas) {
              const double t = s + gap;
              const double lhs = green_l2y_increment(M, t, s, x, basis);
              const double env = std::pow(s, -alpha) * std::pow(gap, alpha - 0.5);
              out.push_back({M, s, t, x, alpha, lhs, env, lhs / env});
            }
      break;
  }
}

inline double max_ratio(const std::vector<BoundProbe>& probes, BoundProbe* where) {
  double best = 0.0;
  for (const auto& p : probes)
    if (p.ratio > best) {
      best = p.ratio;
      if (where) *where = p;
    }
  return best;
}

}  // namespace detail

/// Sweeps one kernel estimate over a probe grid for each M, fits the constant
/// as the worst measured/envelope ratio, and re-fits on a doubled grid. The
/// check passes when both constants are finite and agree within a factor 2;
/// the bound's constant itself is never hard-coded.
inline BoundFit check_bound(KernelBound bound, std::span<const int> Ms,
                            const ProbeGridSpec& grid = {}) {
  if (Ms.empty()) throw ValidationError("check_bound: empty set of grid sizes");
  BoundFit fit;
  fit.bound = bound;
  std::vector<BoundProbe> refined;
  ProbeGridSpec doubled = grid;
  doubled.time_count *= 2;
  doubled.gap_count *= 2;
  doubled.x_count *= 2;
  doubled.alpha_count *= 2;
  for (int M : Ms) {
    SpectralBasis basis(M);
    detail::sweep_bound(bound, M, basis, grid, fit.probes);
    detail::sweep_bound(bound, M, basis, doubled, refined);
  }
  fit.fitted_constant = detail::max_ratio(fit.probes, &fit.max_probe);
  fit.refined_constant = detail::max_ratio(refined, nullptr);
  const double lo = std::min(fit.fitted_constant, fit.refined_constant);
  const double hi = std::max(fit.fitted_constant, fit.refined_constant);
  fit.passed = std::isfinite(hi) && lo > 0.0 && hi / lo < 2.0;
  return fit;
}

}  // namespace sheq
