#pragma once

#include <cmath>
#include <functional>
#include <mutex>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <fftw3.h>

#include "sheq/errors.hpp"
#include "sheq/grid.hpp"
#include "sheq/noise.hpp"

namespace sheq {

using Coefficient = std::function<double(double t, double x, double u)>;
using InitialDatum = std::function<double(double x)>;

/// Drift, diffusion and initial datum of one equation instance. Coefficient
/// functions must be pure; instances are immutable value objects.
class Problem {
 public:
  Problem(std::string label, Coefficient drift, Coefficient diffusion, InitialDatum u0,
          bool lipschitz)
      : label_(std::move(label)),
        f_(std::move(drift)),
        sigma_(std::move(diffusion)),
        u0_(std::move(u0)),
        lipschitz_(lipschitz) {
    if (std::abs(u0_(0.0)) > 1e-12 || std::abs(u0_(1.0)) > 1e-12)
      throw ValidationError("Problem '" + label_ + "': u0 must vanish at both boundaries");
  }

  const std::string& label() const { return label_; }
  bool lipschitz() const { return lipschitz_; }
  double f(double t, double x, double u) const { return f_(t, x, u); }
  double sigma(double t, double x, double u) const { return sigma_(t, x, u); }
  double u0(double x) const { return u0_(x); }

 private:
  std::string label_;
  Coefficient f_;
  Coefficient sigma_;
  InitialDatum u0_;
  bool lipschitz_;
};

enum class BuiltinProblem { kStrongTest, kAsTest, kNonlipDemo };

inline Problem builtin_problem(BuiltinProblem which) {
  const InitialDatum cosine_bump = [](double x) {
    return std::cos(std::numbers::pi * (x - 0.5));
  };
  switch (which) {
    case BuiltinProblem::kStrongTest:
      return Problem(
          "strong-test", [](double, double, double u) { return 0.5 * u; },
          [](double, double, double u) { return 1.0 - u; }, cosine_bump, true);
    case BuiltinProblem::kAsTest:
      return Problem(
          "as-test", [](double, double, double u) { return 1.0 - u; },
          [](double, double, double u) { return std::sin(u); }, cosine_bump, true);
    case BuiltinProblem::kNonlipDemo:
      // Cubic drift: continuous but not globally Lipschitz.
      return Problem(
          "nonlip-demo", [](double, double, double u) { return u - u * u * u; },
          [](double, double, double u) { return 1.0 - u; }, cosine_bump, false);
  }
  throw ValidationError("builtin_problem: unknown enumerator");
}

inline Problem problem_from_label(std::string_view label) {
  if (label == "strong-test") return builtin_problem(BuiltinProblem::kStrongTest);
  if (label == "as-test") return builtin_problem(BuiltinProblem::kAsTest);
  if (label == "nonlip-demo") return builtin_problem(BuiltinProblem::kNonlipDemo);
  throw ValidationError("unknown problem label '" + std::string(label) +
                        "' (expected strong-test, as-test or nonlip-demo)");
}

/// Initial datum sampled at the interior points x_1..x_{M-1}.
inline std::vector<double> eval_u0_on_grid(const Problem& problem, const GridSpec& grid) {
  std::vector<double> u(grid.interior());
  for (int m = 1; m < grid.M; ++m) u[m - 1] = problem.u0(grid.x(m));
  return u;
}

struct LipschitzProbe {
  double f_constant = 0.0;
  double sigma_constant = 0.0;
};

/// Fits max |g(u)-g(v)|/|u-v| over random probe pairs on [-10,10]. A smoke
/// test of the asserted Lipschitz flag, never a correctness gate.
inline LipschitzProbe lipschitz_probe(const Problem& problem, int pairs = 1000,
                                      std::uint64_t seed = 7) {
  LipschitzProbe out;
  for (int i = 0; i < pairs; ++i) {
    const double u = 20.0 * (counter_uniform(seed, 0, i, 1) - 0.5);
    double v = 20.0 * (counter_uniform(seed, 0, i, 2) - 0.5);
    if (u == v) v += 1e-3;
    const double du = std::abs(u - v);
    out.f_constant =
        std::max(out.f_constant, std::abs(problem.f(0.0, 0.5, u) - problem.f(0.0, 0.5, v)) / du);
    out.sigma_constant = std::max(
        out.sigma_constant, std::abs(problem.sigma(0.0, 0.5, u) - problem.sigma(0.0, 0.5, v)) / du);
  }
  return out;
}

namespace detail {

// Sine coefficients <g, phi_j> for j = 1..J by the composite trapezoidal rule
// on a uniform grid of `panels` cells, evaluated as a type-I DST (the sums are
// identical; FFTW just computes them fast). FFTW's planner is not thread-safe,
// hence the lock.
inline std::vector<double> sine_coefficients(const InitialDatum& g, int truncation, int panels) {
  const int n = panels - 1;
  std::vector<double> in(n), out(n);
  for (int k = 1; k < panels; ++k) in[k - 1] = g(static_cast<double>(k) / panels);
  {
    static std::mutex planner_mutex;
    std::lock_guard<std::mutex> lock(planner_mutex);
    fftw_plan plan = fftw_plan_r2r_1d(n, in.data(), out.data(), FFTW_RODFT00, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  std::vector<double> coeffs(truncation);
  const double scale = std::numbers::sqrt2 / (2.0 * panels);
  for (int j = 1; j <= truncation; ++j) coeffs[j - 1] = scale * out[j - 1];
  return coeffs;
}

}  // namespace detail

/// Fractional Sobolev norm (sum over j <= J of (1+j^2)^beta |<g,phi_j>|^2)^(1/2),
/// with coefficients from composite quadrature on 64*J panels. Quadrature
/// convergence is checked by panel doubling and failure to converge is
/// reported rather than silently accepted.
inline double sobolev_norm(const InitialDatum& g, double beta, int truncation) {
  if (truncation < 1) throw ValidationError("sobolev_norm: truncation J must be >= 1");
  const auto norm_with_panels = [&](int panels) {
    const auto coeffs = detail::sine_coefficients(g, truncation, panels);
    double acc = 0.0;
    for (int j = truncation; j >= 1; --j)
      acc += std::pow(1.0 + static_cast<double>(j) * j, beta) * coeffs[j - 1] * coeffs[j - 1];
    return std::sqrt(acc);
  };
  const int panels = 64 * truncation;
  const double coarse = norm_with_panels(panels);
  const double fine = norm_with_panels(2 * panels);
  if (!(std::abs(coarse - fine) <= 1e-3 * (1.0 + std::abs(fine))))
    throw NumericalAbort("sobolev_norm: quadrature did not converge (got " +
                         std::to_string(coarse) + " vs " + std::to_string(fine) +
                         " under panel doubling)");
  return fine;
}

}  // namespace sheq
