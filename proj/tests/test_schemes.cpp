#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "sheq/experiments.hpp"
#include "sheq/schemes.hpp"
#include "support/oracles.hpp"

using namespace sheq;

namespace {

const Problem kFreeHeat("free", [](double, double, double) { return 0.0; },
                        [](double, double, double) { return 0.0; },
                        [](double x) { return std::sin(std::numbers::pi * x); }, true);

struct ZeroNoise {
  void next(std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }
};

std::vector<double> random_vector(int n, std::uint64_t seed) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = counter_gaussian(seed, 0, i, 0);
  return v;
}

// Explicit Euler control for the stability comparison; not part of the
// library's scheme set.
std::vector<double> explicit_euler_step(std::span<const double> u, double dt, int M) {
  const int n = M - 1;
  std::vector<double> out(n);
  const double scale = dt * static_cast<double>(M) * M;
  for (int i = 0; i < n; ++i) {
    const double left = i > 0 ? u[i - 1] : 0.0;
    const double right = i + 1 < n ? u[i + 1] : 0.0;
    out[i] = u[i] + scale * (left - 2.0 * u[i] + right);
  }
  return out;
}

}  // namespace

TEST_CASE("drift and diffusion vectors", "[schemes]") {
  const Problem p("p", [](double, double, double u) { return 0.5 * u; },
                  [](double, double, double u) { return 1.0 - u; },
                  [](double) { return 0.0; }, true);
  SolverState state{0, 0.0, {2.0, 4.0, 0.0}};
  const auto F = drift_vector(p, state);
  CHECK(F == std::vector<double>{1.0, 2.0, 0.0});

  const Problem ones("ones", [](double, double, double) { return 1.0; },
                     [](double, double, double) { return 1.0; },
                     [](double) { return 0.0; }, true);
  SolverState zero_state{0, 0.0, {0.0, 0.0, 0.0}};
  const std::vector<double> dW = {0.5, -0.25, 1.0};
  const auto S = diffusion_scaled(ones, zero_state, dW, 4);
  CHECK(S[0] == Catch::Approx(1.0));   // sqrt(4) * 0.5
  CHECK(S[1] == Catch::Approx(-0.5));
  CHECK(S[2] == Catch::Approx(2.0));

  SolverState at_one{0, 0.0, {1.0, 1.0, 1.0}};
  for (double v : diffusion_scaled(p, at_one, dW, 4)) CHECK(v == 0.0);
  CHECK_THROWS_AS(diffusion_scaled(p, at_one, std::vector<double>{1.0}, 4), ValidationError);

  const Problem affine("affine", [](double, double, double u) { return 1.0 - u; },
                       [](double, double, double) { return 0.0; },
                       [](double) { return 0.0; }, true);
  const auto G = drift_vector(affine, zero_state);
  CHECK(G == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("tridiagonal solver against the dense oracle", "[schemes]") {
  Tridiag identity;
  identity.sub.assign(4, 0.0);
  identity.diag.assign(4, 1.0);
  identity.super.assign(4, 0.0);
  const std::vector<double> rhs = {1.0, -2.0, 3.0, 0.5};
  CHECK(tridiag_solve(identity, rhs) == rhs);

  const int n = 7;
  Tridiag A;
  A.sub.resize(n);
  A.diag.resize(n);
  A.super.resize(n);
  for (int i = 0; i < n; ++i) {
    A.sub[i] = i > 0 ? -0.7 - 0.05 * i : 0.0;
    A.super[i] = i + 1 < n ? -0.9 + 0.03 * i : 0.0;
    A.diag[i] = 3.0 + 0.1 * i;  // diagonally dominant
  }
  const auto b = random_vector(n, 5);
  const auto x = tridiag_solve(A, b);

  auto dense = oracle::zeros(n);
  for (int i = 0; i < n; ++i) {
    dense[i][i] = A.diag[i];
    if (i > 0) dense[i][i - 1] = A.sub[i];
    if (i + 1 < n) dense[i][i + 1] = A.super[i];
  }
  const auto expected = oracle::solve_dense(dense, b);
  double norm_rhs = 0.0, resid = 0.0;
  const auto Ax = A.multiply(x);
  for (int i = 0; i < n; ++i) {
    CHECK(x[i] == Catch::Approx(expected[i]).margin(1e-10));
    norm_rhs = std::max(norm_rhs, std::abs(b[i]));
    resid = std::max(resid, std::abs(Ax[i] - b[i]));
  }
  CHECK(resid <= 1e-10 * norm_rhs);

  Tridiag singular;
  singular.sub.assign(2, 0.0);
  singular.diag.assign(2, 0.0);
  singular.super.assign(2, 0.0);
  CHECK_THROWS_AS(tridiag_solve(singular, std::vector<double>{1.0, 1.0}), NumericalAbort);
}

TEST_CASE("multiply-then-solve round trip for the scheme matrices", "[schemes]") {
  const int M = 16;
  const double dt = 0x1p-6;
  const auto u = random_vector(M - 1, 8);
  for (const Tridiag& A : {sem_matrix(M, dt), cnm_matrices(M, dt).first}) {
    const auto rhs = A.multiply(u);
    const auto back = tridiag_solve(A, rhs);
    for (int i = 0; i < M - 1; ++i) CHECK(back[i] == Catch::Approx(u[i]).margin(1e-11));
  }
}

TEST_CASE("single steps act on eigenvectors by the expected scalars", "[schemes]") {
  const int M = 8;
  const SpectralBasis basis(M);
  const double dt = 0.01;
  const double lambda = basis.eigenvalue(1);
  SolverState state{0, 0.0, std::vector<double>(basis.mode(1).begin(), basis.mode(1).end())};
  const std::vector<double> no_noise(M - 1, 0.0);

  const auto sexp = step_sexp(state, kFreeHeat, no_noise, dt, basis);
  const auto sem = step_sem(state, kFreeHeat, no_noise, dt, basis);
  const auto cnm = step_cnm(state, kFreeHeat, no_noise, dt, basis);
  CHECK(sexp.n == 1);
  CHECK(sexp.t == Catch::Approx(dt));
  const double f_exp = std::exp(lambda * dt);
  const double f_sem = 1.0 / (1.0 - dt * lambda);
  const double f_cnm = (1.0 + 0.5 * dt * lambda) / (1.0 - 0.5 * dt * lambda);
  for (int m = 0; m < M - 1; ++m) {
    const double phi = basis.mode_value(1, m + 1);
    CHECK(sexp.u[m] == Catch::Approx(f_exp * phi).margin(1e-12));
    CHECK(sem.u[m] == Catch::Approx(f_sem * phi).margin(1e-12));
    CHECK(cnm.u[m] == Catch::Approx(f_cnm * phi).margin(1e-12));
  }
}

TEST_CASE("semi-implicit step with constant forcing", "[schemes]") {
  const int M = 8;
  const SpectralBasis basis(M);
  const double dt = 0.05;
  const double c = 0.75;
  const Problem constant_drift("c", [&](double, double, double) { return c; },
                               [](double, double, double) { return 0.0; },
                               [](double) { return 0.0; }, true);
  const auto u0 = random_vector(M - 1, 13);
  SolverState state{0, 0.0, u0};
  const std::vector<double> no_noise(M - 1, 0.0);
  const auto next = step_sem(state, constant_drift, no_noise, dt, basis);

  std::vector<double> rhs(M - 1);
  for (int i = 0; i < M - 1; ++i) rhs[i] = u0[i] + dt * c;
  const auto expected = tridiag_solve(sem_matrix(M, dt), rhs);
  for (int i = 0; i < M - 1; ++i) CHECK(next.u[i] == Catch::Approx(expected[i]).margin(1e-12));
}

TEST_CASE("crank-nicolson with zero diffusion reduces to the deterministic scheme",
          "[schemes]") {
  const int M = 8;
  const SpectralBasis basis(M);
  const double dt = 0.03;
  const Problem drift_only("d", [](double, double, double u) { return 0.5 * u; },
                           [](double, double, double) { return 0.0; },
                           [](double) { return 0.0; }, true);
  const auto u0 = random_vector(M - 1, 17);
  SolverState state{0, 0.0, u0};
  const std::vector<double> no_noise(M - 1, 0.0);
  const auto next = step_cnm(state, drift_only, no_noise, dt, basis);

  const auto [left, right] = cnm_matrices(M, dt);
  auto rhs = right.multiply(u0);
  for (int i = 0; i < M - 1; ++i) rhs[i] += dt * 0.5 * u0[i];
  const auto expected = tridiag_solve(left, rhs);
  for (int i = 0; i < M - 1; ++i) CHECK(next.u[i] == Catch::Approx(expected[i]).margin(1e-12));
}

TEST_CASE("exponential steps stay on the semigroup orbit for any step size", "[schemes]") {
  const int M = 64;
  const SpectralBasis basis(M);
  const GridSpec grid(M, 40, 4.0);  // dt = 0.1, dt * M^2 = 409.6, far beyond explicit stability
  const Problem mode1("m", [](double, double, double) { return 0.0; },
                      [](double, double, double) { return 0.0; },
                      [](double x) { return std::numbers::sqrt2 *
                                            std::sin(std::numbers::pi * x); }, true);
  ZeroNoise noise;
  std::vector<std::int64_t> record(grid.N + 1);
  for (std::int64_t n = 0; n <= grid.N; ++n) record[n] = n;
  const auto run = integrate(SchemeKind::kSexp, mode1, grid, basis, noise, record);
  REQUIRE_FALSE(run.aborted);
  REQUIRE(run.snapshots.size() == static_cast<std::size_t>(grid.N + 1));
  double previous_norm = discrete_l2_norm(run.snapshots[0].u, M);
  for (std::int64_t n = 0; n <= grid.N; ++n) {
    const double factor = std::exp(basis.eigenvalue(1) * grid.t(n));
    for (int m = 0; m < M - 1; ++m)
      REQUIRE(run.snapshots[n].u[m] ==
              Catch::Approx(factor * basis.mode_value(1, m + 1)).margin(1e-11));
    const double norm = discrete_l2_norm(run.snapshots[n].u, M);
    REQUIRE(norm <= previous_norm * (1.0 + 1e-13));
    previous_norm = norm;
  }
}

TEST_CASE("explicit euler control blows up where the exponential scheme does not",
          "[schemes]") {
  const int M = 64;
  const double dt = 0.1;
  SpectralBasis basis(M);
  std::vector<double> u(basis.mode(1).begin(), basis.mode(1).end());
  double sup = 0.0;
  for (int n = 0; n < 10; ++n) {
    u = explicit_euler_step(u, dt, M);
    for (double v : u) sup = std::max(sup, std::abs(v));
  }
  CHECK(sup > 1e6);
}

TEST_CASE("zero state with silent noise stays zero", "[schemes]") {
  const int M = 8;
  const SpectralBasis basis(M);
  const Problem additive("additive", [](double, double, double) { return 0.0; },
                         [](double, double, double u) { return 1.0 - u; },
                         [](double) { return 0.0; }, true);
  const SolverState zero{0, 0.0, std::vector<double>(M - 1, 0.0)};
  const std::vector<double> no_noise(M - 1, 0.0);
  const auto next = step_sexp(zero, additive, no_noise, 0.05, basis);
  for (double u : next.u) CHECK(u == 0.0);
}

TEST_CASE("halving the mesh does not increase the deterministic error", "[schemes]") {
  // Spatial smoke test on the heat equation with an exact continuum solution.
  const double T = 0.1;
  const std::int64_t steps = 1 << 12;  // fine fixed dt
  const Problem mode1("m", [](double, double, double) { return 0.0; },
                      [](double, double, double) { return 0.0; },
                      [](double x) { return std::sin(std::numbers::pi * x); }, true);
  auto sup_error = [&](int M) {
    const SpectralBasis basis(M);
    const GridSpec grid(M, steps, T);
    ZeroNoise noise;
    const std::int64_t record[] = {steps};
    const auto run = integrate(SchemeKind::kSexp, mode1, grid, basis, noise, record);
    const double decay = std::exp(-std::numbers::pi * std::numbers::pi * T);
    double err = 0.0;
    for (int m = 1; m < M; ++m)
      err = std::max(err, std::abs(run.snapshots[0].u[m - 1] -
                                   decay * std::sin(std::numbers::pi * m / M)));
    return err;
  };
  const double coarse = sup_error(16);
  const double fine = sup_error(32);
  CHECK(fine < coarse);
  CHECK(fine < 0.25 * coarse * 1.5);  // roughly second order in the mesh
}

TEST_CASE("integration without steps returns the initial state", "[schemes]") {
  const GridSpec grid(8, 0, 1.0);
  const SpectralBasis basis(8);
  ZeroNoise noise;
  const std::int64_t record[] = {0};
  const auto run = integrate(SchemeKind::kSexp, kFreeHeat, grid, basis, noise, record);
  REQUIRE(run.snapshots.size() == 1);
  CHECK(run.snapshots[0].n == 0);
  CHECK(run.snapshots[0].u == eval_u0_on_grid(kFreeHeat, grid));
}

TEST_CASE("integration is deterministic given the noise plan", "[schemes]") {
  const int M = 16;
  const GridSpec grid(M, 32, 0.5);
  const SpectralBasis basis(M);
  const Problem problem = builtin_problem(BuiltinProblem::kStrongTest);
  const std::int64_t record[] = {0, 16, 32};
  const NoisePlan plan(11, M, 32, 0.5, 4);

  CoupledStream s1(plan, 32), s2(plan, 32);
  const auto r1 = integrate(SchemeKind::kSexp, problem, grid, basis, s1, record);
  const auto r2 = integrate(SchemeKind::kSexp, problem, grid, basis, s2, record);
  REQUIRE(r1.snapshots.size() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    for (int m = 0; m < M - 1; ++m) REQUIRE(r1.snapshots[k].u[m] == r2.snapshots[k].u[m]);
}

TEST_CASE("integration aborts on non-finite states with the step index", "[schemes]") {
  const Problem exploding("x", [](double, double, double u) { return u * u * u * 1e8; },
                          [](double, double, double) { return 0.0; },
                          [](double x) { return std::sin(std::numbers::pi * x); }, false);
  const GridSpec grid(8, 64, 1.0);
  const SpectralBasis basis(8);
  ZeroNoise noise;
  const std::int64_t record[] = {64};
  const auto run = integrate(SchemeKind::kSexp, exploding, grid, basis, noise, record);
  CHECK(run.aborted);
  CHECK(run.abort_step > 0);
}

TEST_CASE("linear homogeneity with zero diffusion", "[schemes]") {
  const int M = 16;
  const SpectralBasis basis(M);
  const double dt = 0x1p-7;
  const Problem linear("lin", [](double, double, double u) { return 0.5 * u; },
                       [](double, double, double) { return 0.0; },
                       [](double) { return 0.0; }, true);
  const auto u = random_vector(M - 1, 23);
  std::vector<double> scaled(u);
  for (double& v : scaled) v *= 3.0;
  const std::vector<double> no_noise(M - 1, 0.0);
  for (SchemeKind kind : {SchemeKind::kSexp, SchemeKind::kSem, SchemeKind::kCnm}) {
    const auto base = one_step(kind, {0, 0.0, u}, linear, no_noise, dt, basis);
    const auto big = one_step(kind, {0, 0.0, scaled}, linear, no_noise, dt, basis);
    for (int m = 0; m < M - 1; ++m)
      REQUIRE(big.u[m] == Catch::Approx(3.0 * base.u[m]).margin(1e-12));
  }
}

TEST_CASE("deterministic temporal orders of the implicit schemes", "[schemes]") {
  // f = sigma = 0 with a two-mode smooth initial datum; errors against the
  // exact spectral solution at T.
  const int M = 16;
  const SpectralBasis basis(M);
  const double T = 0.25;
  const Problem smooth("smooth", [](double, double, double) { return 0.0; },
                       [](double, double, double) { return 0.0; },
                       [](double x) {
                         return std::sin(std::numbers::pi * x) +
                                0.3 * std::sin(2.0 * std::numbers::pi * x);
                       }, true);
  const GridSpec finest(M, 1, T);
  const auto u0 = eval_u0_on_grid(smooth, finest);

  auto exact_at = [&](double t) {
    SpectralBasis local(M);
    auto coeffs = local.to_modes(u0);
    for (int j = 1; j < M; ++j) coeffs[j - 1] *= std::exp(local.eigenvalue(j) * t);
    return local.from_modes(coeffs);
  };
  const auto exact = exact_at(T);

  auto run_error = [&](SchemeKind kind, std::int64_t steps) {
    const GridSpec grid(M, steps, T);
    ZeroNoise noise;
    const std::int64_t record[] = {steps};
    const auto run = integrate(kind, smooth, grid, basis, noise, record);
    double err = 0.0;
    for (int m = 0; m < M - 1; ++m)
      err = std::max(err, std::abs(run.snapshots[0].u[m] - exact[m]));
    return err;
  };

  std::vector<std::pair<double, double>> sem_points, cnm_points;
  for (std::int64_t steps : {64, 128, 256, 512, 1024}) {
    sem_points.emplace_back(T / steps, run_error(SchemeKind::kSem, steps));
    cnm_points.emplace_back(T / steps, run_error(SchemeKind::kCnm, steps));
  }
  const auto [sem_slope, sem_se] = fit_order(sem_points);
  const auto [cnm_slope, cnm_se] = fit_order(cnm_points);
  CHECK(sem_slope == Catch::Approx(1.0).margin(0.1));
  CHECK(cnm_slope == Catch::Approx(2.0).margin(0.2));
}

TEST_CASE("pilot second moments stay within a fixed budget", "[schemes]") {
  const int M = 32;
  const std::int64_t steps = 128;
  const double T = 0.5;
  const GridSpec grid(M, steps, T);
  const SpectralBasis basis(M);
  const Problem problem = builtin_problem(BuiltinProblem::kStrongTest);
  std::vector<std::int64_t> record(steps + 1);
  for (std::int64_t n = 0; n <= steps; ++n) record[n] = n;

  const int samples = 64;
  std::vector<double> sum_sq(static_cast<std::size_t>(steps + 1) * (M - 1), 0.0);
  for (int s = 0; s < samples; ++s) {
    const NoisePlan plan(3, M, steps, T, static_cast<std::uint32_t>(s));
    CoupledStream stream(plan, steps);
    const auto run = integrate(SchemeKind::kSexp, problem, grid, basis, stream, record);
    REQUIRE_FALSE(run.aborted);
    for (std::size_t k = 0; k < run.snapshots.size(); ++k)
      for (int m = 0; m < M - 1; ++m) {
        const double u = run.snapshots[k].u[m];
        sum_sq[k * (M - 1) + m] += u * u;
      }
  }
  double initial = 0.0;
  for (int m = 0; m < M - 1; ++m)
    initial = std::max(initial, sum_sq[m] / samples);
  double sup = 0.0;
  for (double v : sum_sq) sup = std::max(sup, v / samples);
  CHECK(sup <= 10.0 * initial);
}
