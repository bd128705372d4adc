#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "sheq/green.hpp"
#include "sheq/schemes.hpp"
#include "support/oracles.hpp"

using namespace sheq;

namespace {

std::vector<double> random_vector(int n, std::uint64_t seed) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = counter_gaussian(seed, 0, i, 0);
  return v;
}

}  // namespace

TEST_CASE("kernel values at time zero and grid symmetry", "[green]") {
  SpectralBasis b2(2);
  // Single mode at M = 2: G(0, 1/2, y in upper cell) = phi_1(1/2)^2 = 2.
  CHECK(green_eval({2, 0.0, 0.5, 0.75}, b2) == Catch::Approx(2.0).margin(1e-12));

  const int M = 8;
  SpectralBasis basis(M);
  for (int m = 1; m < M; ++m)
    for (int l = 1; l < M; ++l) {
      const double a = green_eval({M, 0.05, m / 8.0, (l + 0.25) / 8.0}, basis);
      const double b = green_eval({M, 0.05, l / 8.0, (m + 0.25) / 8.0}, basis);
      REQUIRE(a == Catch::Approx(b).margin(1e-12));
    }

  // y in the first cell sees a vanishing kernel; t < 0 is rejected.
  CHECK(green_eval({M, 0.3, 0.5, 0.05}, basis) == 0.0);
  CHECK_THROWS_AS(green_eval({M, -0.1, 0.5, 0.5}, basis), ValidationError);
}

TEST_CASE("kernel decays like its slowest mode for large times", "[green]") {
  const int M = 8;
  SpectralBasis basis(M);
  for (double t : {1.0, 4.0}) {
    const double envelope = 2.0 * (M - 1) * std::exp(basis.eigenvalue(1) * t);
    for (double x : {0.2, 0.5, 0.9})
      for (double y : {0.3, 0.8}) CHECK(std::abs(green_eval({M, t, x, y}, basis)) <= envelope);
  }
  // The term-wise envelope itself falls below 1e-12 once t is large.
  CHECK(2.0 * (M - 1) * std::exp(basis.eigenvalue(1) * 4.0) < 1e-12);
}

TEST_CASE("squared-kernel integral matches direct cell quadrature", "[green]") {
  const int M = 16;
  SpectralBasis basis(M);
  for (double t : {0.01, 0.1})
    for (double x : {3.0 / 16.0, 0.5, 0.37}) {
      double direct = 0.0;
      for (int l = 0; l < M; ++l) {
        const double g = green_eval({M, t, x, (l + 0.5) / M}, basis);
        direct += g * g / M;
      }
      CHECK(green_l2y(M, t, x, basis) == Catch::Approx(direct).margin(1e-12));
    }
  CHECK_THROWS_AS(green_l2y(M, 0.0, 0.5, basis), ValidationError);
}

TEST_CASE("squared-kernel integral decays in time and obeys the sqrt(t) envelope",
          "[green]") {
  const int M = 64;
  SpectralBasis basis(M);
  CHECK(green_l2y(M, 50.0, 0.5, basis) < 1e-12);

  double worst = 0.0;
  for (int k = 1; k <= 10; ++k) {
    const double t = std::ldexp(1.0, -k);
    for (int m = 1; m < M; m += 4)
      worst = std::max(worst, green_l2y(M, t, m / static_cast<double>(M), basis) * std::sqrt(t));
  }
  CHECK(worst < 1.0);  // a desk-scale constant; stability is checked via check_bound
}

TEST_CASE("kernel mass stays sub-stochastic", "[green]") {
  for (int M : {4, 16, 64}) {
    SpectralBasis basis(M);
    for (double t : {1e-4, 1e-2, 0.5})
      for (int m = 1; m < M; ++m) {
        double mass = 0.0;
        for (int l = 0; l < M; ++l)
          mass += green_eval({M, t, m / static_cast<double>(M), (l + 0.5) / M}, basis) / M;
        REQUIRE(mass <= 1.0 + 1e-10);
      }
  }
}

TEST_CASE("continuous kernel utility integrates to one-ish mass", "[green]") {
  // Small time, interior point: boundary influence is negligible and the
  // truncated series behaves like the whole-line heat kernel.
  const double mass = oracle::simpson(
      [](double y) { return continuous_heat_kernel(0.001, 0.5, y); }, 0.0, 1.0, 2048);
  CHECK(mass == Catch::Approx(1.0).margin(1e-6));
  CHECK_THROWS_AS(continuous_heat_kernel(0.0, 0.5, 0.5), ValidationError);
}

TEST_CASE("mild step with zero coefficients is the plain semigroup", "[green]") {
  const int M = 8;
  SpectralBasis basis(M);
  const Problem free("free", [](double, double, double) { return 0.0; },
                     [](double, double, double) { return 0.0; },
                     [](double) { return 0.0; }, true);
  const auto u = random_vector(M - 1, 3);
  const std::vector<double> dW(M - 1, 0.0);
  const double dt = 0.02;
  const auto mild = mild_step_oracle(u, free, 0.0, dt, dW, basis);
  const auto semi = basis.apply_semigroup(u, dt);
  for (int m = 0; m < M - 1; ++m) CHECK(mild[m] == Catch::Approx(semi[m]).margin(1e-12));
}

TEST_CASE("mild step equals the exponential step on random data", "[green]") {
  const Problem problem = builtin_problem(BuiltinProblem::kStrongTest);
  double worst = 0.0;
  for (int M : {2, 4, 5, 8, 11, 16}) {  // even and odd interior sizes
    SpectralBasis basis(M);
    const double dt = 0x1p-7;
    for (int trial = 0; trial < 100; ++trial) {
      const auto u = random_vector(M - 1, 1000 + trial);
      std::vector<double> dW(M - 1);
      for (int m = 0; m < M - 1; ++m)
        dW[m] = std::sqrt(dt) * counter_gaussian(2000 + trial, 0, m, 9);
      const auto mild = mild_step_oracle(u, problem, 0.0, dt, dW, basis);
      const auto stepped = step_sexp({0, 0.0, u}, problem, dW, dt, basis);
      for (int m = 0; m < M - 1; ++m)
        worst = std::max(worst, std::abs(mild[m] - stepped.u[m]));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("mild step approaches identity plus noise as dt vanishes", "[green]") {
  const int M = 16;
  SpectralBasis basis(M);
  const Problem problem = builtin_problem(BuiltinProblem::kStrongTest);
  const auto u = random_vector(M - 1, 4);
  std::vector<double> dW(M - 1);
  for (int m = 0; m < M - 1; ++m) dW[m] = 1e-3 * counter_gaussian(5, 0, m, 1);
  const double dt = 1e-12;
  const auto mild = mild_step_oracle(u, problem, 0.0, dt, dW, basis);
  const double root_m = std::sqrt(static_cast<double>(M));
  for (int m = 0; m < M - 1; ++m) {
    const double expected = u[m] + root_m * problem.sigma(0.0, (m + 1.0) / M, u[m]) * dW[m];
    CHECK(mild[m] == Catch::Approx(expected).margin(1e-6));
  }
}

TEST_CASE("kernel bound sweeps fit stable constants", "[green]") {
  const std::vector<int> Ms = {8, 16, 32};
  ProbeGridSpec grid;
  grid.time_count = 4;
  grid.gap_count = 4;
  grid.x_count = 5;
  grid.alpha_count = 4;

  const auto integrated = check_bound(KernelBound::kIntegratedIncrement, Ms, grid);
  CHECK(integrated.passed);
  CHECK(std::isfinite(integrated.fitted_constant));
  CHECK(integrated.fitted_constant > 0.0);

  const auto square = check_bound(KernelBound::kSquareIntegral, Ms, grid);
  CHECK(square.passed);

  const auto increment = check_bound(KernelBound::kIncrement, Ms, grid);
  CHECK(increment.passed);
  CHECK_FALSE(increment.probes.empty());

  // Restricting the exponent range to (1/2, 1) reports its own stable fit.
  ProbeGridSpec narrow = grid;
  narrow.alpha_min = 0.55;
  narrow.alpha_max = 0.95;
  const auto narrow_fit = check_bound(KernelBound::kIncrement, Ms, narrow);
  CHECK(narrow_fit.passed);

  CHECK_THROWS_AS(check_bound(KernelBound::kIncrement, std::vector<int>{}, grid),
                  ValidationError);
}

TEST_CASE("increment bound with unit exponent stays bounded across probes", "[green]") {
  double worst = 0.0;
  for (int M : {8, 16, 32, 64}) {
    SpectralBasis basis(M);
    for (double s : {0.05, 0.1, 0.2})
      for (double gap : {0.01, 0.05, 0.15})
        for (double x : {0.25, 0.5, 0.71}) {
          const double lhs = green_l2y_increment(M, s + gap, s, x, basis);
          worst = std::max(worst, lhs * s / std::sqrt(gap));  // alpha = 1 envelope
        }
  }
  CHECK(std::isfinite(worst));
  CHECK(worst < 10.0);
}

TEST_CASE("degenerate probes of the increment bounds vanish", "[green]") {
  const int M = 8;
  SpectralBasis basis(M);
  // s = t collapses the integrands of bounds (i) and (iii) to zero.
  CHECK(green_l2y_increment(M, 0.25, 0.25, 0.4, basis) == 0.0);
  CHECK(green_l2y_increment(M, 0.25, 0.25, 5.0 / 8.0, basis) == 0.0);
}
