#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sheq/errors.hpp"
#include "sheq/grid.hpp"
#include "sheq/problem.hpp"
#include "sheq/spectral.hpp"

namespace sheq {

/// The three time integrators on the finite-difference semidiscretization.
/// The exponential scheme needs no linear solve; the semi-implicit Euler and
/// Crank-Nicolson schemes each solve one tridiagonal system per step.
enum class SchemeKind { kSexp, kSem, kCnm };

inline std::string_view scheme_label(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kSexp: return "sexp";
    case SchemeKind::kSem: return "sem";
    case SchemeKind::kCnm: return "cnm";
  }
  throw ValidationError("scheme_label: unknown scheme");
}

inline SchemeKind scheme_from_label(std::string_view label) {
  if (label == "sexp") return SchemeKind::kSexp;
  if (label == "sem") return SchemeKind::kSem;
  if (label == "cnm") return SchemeKind::kCnm;
  throw ValidationError("unknown scheme '" + std::string(label) +
                        "' (expected sexp, sem or cnm)");
}

/// Interior solution values at one discrete time.
struct SolverState {
  std::int64_t n = 0;
  double t = 0.0;
  std::vector<double> u;
};

/// Tridiagonal matrix in banded storage; sub[0] and super[last] are unused.
struct Tridiag {
  std::vector<double> sub, diag, super;

  int size() const { return static_cast<int>(diag.size()); }

  std::vector<double> multiply(std::span<const double> v) const {
    const int n = size();
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
      double acc = diag[i] * v[i];
      if (i > 0) acc += sub[i] * v[i - 1];
      if (i + 1 < n) acc += super[i] * v[i + 1];
      out[i] = acc;
    }
    return out;
  }
};

/// Cached forward-elimination coefficients of a diagonally dominant
/// tridiagonal matrix (Thomas algorithm without pivoting).
class TridiagFactors {
 public:
  explicit TridiagFactors(const Tridiag& A) {
    const int n = A.size();
    mult_.resize(n, 0.0);
    inv_pivot_.resize(n);
    super_ = A.super;
    std::vector<double> pivot(n);
    pivot[0] = A.diag[0];
    if (pivot[0] == 0.0) throw NumericalAbort("tridiag factorization: zero pivot at row 0");
    for (int i = 1; i < n; ++i) {
      mult_[i] = A.sub[i] / pivot[i - 1];
      pivot[i] = A.diag[i] - mult_[i] * A.super[i - 1];
      if (pivot[i] == 0.0)
        throw NumericalAbort("tridiag factorization: zero pivot at row " + std::to_string(i));
    }
    for (int i = 0; i < n; ++i) inv_pivot_[i] = 1.0 / pivot[i];
  }

  void solve_into(std::span<const double> rhs, std::span<double> x) const {
    const int n = static_cast<int>(inv_pivot_.size());
    x[0] = rhs[0];
    for (int i = 1; i < n; ++i) x[i] = rhs[i] - mult_[i] * x[i - 1];
    x[n - 1] *= inv_pivot_[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = (x[i] - super_[i] * x[i + 1]) * inv_pivot_[i];
  }

 private:
  std::vector<double> mult_, inv_pivot_, super_;
};

/// Solves A x = rhs by forward elimination / back substitution.
inline std::vector<double> tridiag_solve(const Tridiag& A, std::span<const double> rhs) {
  if (A.size() != static_cast<int>(rhs.size()))
    throw ValidationError("tridiag_solve: dimension mismatch");
  std::vector<double> x(rhs.size());
  TridiagFactors(A).solve_into(rhs, x);
  return x;
}

/// System matrix I - dt A of the semi-implicit Euler step.
inline Tridiag sem_matrix(int M, double dt) {
  const int n = M - 1;
  const double a = dt * static_cast<double>(M) * M;
  Tridiag A;
  A.sub.assign(n, -a);
  A.diag.assign(n, 1.0 + 2.0 * a);
  A.super.assign(n, -a);
  A.sub[0] = 0.0;
  A.super[n - 1] = 0.0;
  return A;
}

/// Left and right matrices I -/+ (dt/2) A of the Crank-Nicolson step.
inline std::pair<Tridiag, Tridiag> cnm_matrices(int M, double dt) {
  const int n = M - 1;
  const double a = 0.5 * dt * static_cast<double>(M) * M;
  Tridiag left, right;
  left.sub.assign(n, -a);
  left.diag.assign(n, 1.0 + 2.0 * a);
  left.super.assign(n, -a);
  right.sub.assign(n, a);
  right.diag.assign(n, 1.0 - 2.0 * a);
  right.super.assign(n, a);
  left.sub[0] = right.sub[0] = 0.0;
  left.super[n - 1] = right.super[n - 1] = 0.0;
  return {left, right};
}

/// Entrywise drift F(U)_m = f(t_n, x_m, U_m).
inline std::vector<double> drift_vector(const Problem& problem, const SolverState& state) {
  const int M = static_cast<int>(state.u.size()) + 1;
  std::vector<double> out(state.u.size());
  for (std::size_t i = 0; i < state.u.size(); ++i)
    out[i] = problem.f(state.t, static_cast<double>(i + 1) / M, state.u[i]);
  return out;
}

/// Scaled diffusion (Sigma(U) dW)_m = sqrt(M) sigma(t_n, x_m, U_m) dW_m.
inline std::vector<double> diffusion_scaled(const Problem& problem, const SolverState& state,
                                            std::span<const double> dW, int M) {
  if (dW.size() != state.u.size())
    throw ValidationError("diffusion_scaled: increment length must match state");
  const double root_m = std::sqrt(static_cast<double>(M));
  std::vector<double> out(state.u.size());
  for (std::size_t i = 0; i < state.u.size(); ++i)
    out[i] = root_m * problem.sigma(state.t, static_cast<double>(i + 1) / M, state.u[i]) * dW[i];
  return out;
}

/// One scheme instantiated for a fixed (M, dt): the exponential propagator or
/// the tridiagonal factorization is assembled once and reused every step.
/// Holds scratch buffers, so use one instance per thread.
class TimeStepper {
 public:
  TimeStepper(SchemeKind kind, const SpectralBasis& basis, double dt)
      : kind_(kind), M_(basis.cells()), dt_(dt) {
    if (!(dt > 0.0)) throw ValidationError("TimeStepper: dt must be positive");
    const int n = M_ - 1;
    switch (kind_) {
      case SchemeKind::kSexp: {
        folded_ = basis.folded_propagator_cached(dt);
        fold_s_.resize(folded_->half + folded_->odd);
        fold_d_.resize(std::max(1, folded_->half));
        lift_s_.resize(folded_->rstride);
        lift_d_.resize(folded_->rstride);
        break;
      }
      case SchemeKind::kSem:
        factors_.emplace(sem_matrix(M_, dt));
        break;
      case SchemeKind::kCnm: {
        auto [left, right] = cnm_matrices(M_, dt);
        factors_.emplace(left);
        cnm_right_ = std::move(right);
        break;
      }
    }
    rhs_.resize(n);
    scratch_.resize(n);
  }

  SchemeKind kind() const { return kind_; }
  double dt() const { return dt_; }

  /// Advances the state by one step using the increments for its step index.
  void advance(const Problem& problem, SolverState& state, std::span<const double> dW) {
    const int n = M_ - 1;
    if (static_cast<int>(state.u.size()) != n)
      throw ValidationError("TimeStepper::advance: state length must be M-1");
    if (static_cast<int>(dW.size()) != n)
      throw ValidationError("TimeStepper::advance: increment length must be M-1");

    const double root_m = std::sqrt(static_cast<double>(M_));
    const double t = state.t;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(i + 1) / M_;
      const double u = state.u[i];
      rhs_[i] = u + dt_ * problem.f(t, x, u) + root_m * problem.sigma(t, x, u) * dW[i];
    }

    switch (kind_) {
      case SchemeKind::kSexp: {
        const int half = folded_->half;
        const double* __restrict rhs = rhs_.data();
        for (int i = 0; i < half; ++i) {
          fold_s_[i] = rhs[i] + rhs[n - 1 - i];
          fold_d_[i] = rhs[i] - rhs[n - 1 - i];
        }
        if (folded_->odd) fold_s_[half] = rhs[half];
        half_gemv(folded_->sym, fold_s_, half + folded_->odd, lift_s_);
        half_gemv(folded_->asym, fold_d_, half, lift_d_);
        double* __restrict u = state.u.data();
        for (int m = 0; m < folded_->rows; ++m) {
          u[m] = lift_s_[m] + lift_d_[m];
          if (m != n - 1 - m) u[n - 1 - m] = lift_s_[m] - lift_d_[m];
        }
        break;
      }
      case SchemeKind::kSem:
        factors_->solve_into(rhs_, scratch_);
        state.u.swap(scratch_);
        break;
      case SchemeKind::kCnm: {
        // rhs currently holds U + dt F + Sigma dW; the Crank-Nicolson right
        // side replaces the plain U term with (I + dt/2 A) U.
        for (int i = 0; i < n; ++i) {
          double acc = (cnm_right_.diag[i] - 1.0) * state.u[i];
          if (i > 0) acc += cnm_right_.sub[i] * state.u[i - 1];
          if (i + 1 < n) acc += cnm_right_.super[i] * state.u[i + 1];
          rhs_[i] += acc;
        }
        factors_->solve_into(rhs_, scratch_);
        state.u.swap(scratch_);
        break;
      }
    }
    state.n += 1;
    state.t = state.n * dt_;
  }

 private:
  static constexpr int kStripe = SpectralBasis::FoldedPropagator::kStripe;

  // Column-major half-size product, one register-resident output stripe at a
  // time.
  void half_gemv(const std::vector<double>& matrix, const std::vector<double>& v, int cols,
                 std::vector<double>& out) const {
    const double* __restrict vec = v.data();
    const int rstride = folded_->rstride;
    for (int b = 0; b < rstride; b += kStripe) {
      double acc[kStripe] = {0.0};
      const double* __restrict base = matrix.data() + b;
      for (int i = 0; i < cols; ++i) {
        const double a = vec[i];
        const double* __restrict col = base + static_cast<std::size_t>(i) * rstride;
#pragma omp simd
        for (int m = 0; m < kStripe; ++m) acc[m] += a * col[m];
      }
      double* __restrict o = out.data() + b;
#pragma omp simd
      for (int m = 0; m < kStripe; ++m) o[m] = acc[m];
    }
  }

  SchemeKind kind_;
  int M_;
  double dt_;
  std::shared_ptr<const SpectralBasis::FoldedPropagator> folded_;
  std::vector<double> fold_s_, fold_d_;  // reflection components of the rhs
  std::vector<double> lift_s_, lift_d_;  // half-size products
  std::optional<TridiagFactors> factors_;
  Tridiag cnm_right_;
  std::vector<double> rhs_, scratch_;
};

inline SolverState one_step(SchemeKind kind, const SolverState& state, const Problem& problem,
                            std::span<const double> dW, double dt, const SpectralBasis& basis) {
  TimeStepper stepper(kind, basis, dt);
  SolverState next = state;
  stepper.advance(problem, next, dW);
  return next;
}

/// Exponential step U' = e^{A dt}(U + dt F(U) + Sigma(U) dW).
inline SolverState step_sexp(const SolverState& state, const Problem& problem,
                             std::span<const double> dW, double dt, const SpectralBasis& basis) {
  return one_step(SchemeKind::kSexp, state, problem, dW, dt, basis);
}

/// Semi-implicit Euler-Maruyama step (I - dt A) U' = U + dt F(U) + Sigma(U) dW.
inline SolverState step_sem(const SolverState& state, const Problem& problem,
                            std::span<const double> dW, double dt, const SpectralBasis& basis) {
  return one_step(SchemeKind::kSem, state, problem, dW, dt, basis);
}

/// Crank-Nicolson-Maruyama step
/// (I - dt/2 A) U' = (I + dt/2 A) U + dt F(U) + Sigma(U) dW.
inline SolverState step_cnm(const SolverState& state, const Problem& problem,
                            std::span<const double> dW, double dt, const SpectralBasis& basis) {
  return one_step(SchemeKind::kCnm, state, problem, dW, dt, basis);
}

template <class S>
concept NoiseSource = requires(S s, std::span<double> out) {
  { s.next(out) };
};

struct IntegrationRun {
  std::vector<SolverState> snapshots;
  bool aborted = false;
  std::int64_t abort_step = -1;
};

/// Runs U^0 = u0 on the grid, then N steps of the chosen scheme, consuming
/// one increment block per step. Snapshots are returned for the requested
/// step indices; a non-finite state aborts with the offending step recorded.
template <NoiseSource S>
IntegrationRun integrate(SchemeKind kind, const Problem& problem, const GridSpec& grid,
                         const SpectralBasis& basis, S& noise,
                         std::span<const std::int64_t> record) {
  if (basis.cells() != grid.M) throw ValidationError("integrate: basis does not match grid");
  for (std::int64_t idx : record)
    if (idx < 0 || idx > grid.N)
      throw ValidationError("integrate: record index " + std::to_string(idx) + " out of range");

  IntegrationRun run;
  SolverState state;
  state.n = 0;
  state.t = 0.0;
  state.u = eval_u0_on_grid(problem, grid);

  std::vector<std::int64_t> wanted(record.begin(), record.end());
  std::sort(wanted.begin(), wanted.end());
  std::size_t next_record = 0;
  auto maybe_snapshot = [&]() {
    while (next_record < wanted.size() && wanted[next_record] == state.n) {
      run.snapshots.push_back(state);
      ++next_record;
    }
  };
  auto finite = [&]() {
    double acc = 0.0;
    for (double v : state.u) acc += v * v;
    return std::isfinite(acc);
  };

  maybe_snapshot();
  if (grid.N == 0) return run;

  TimeStepper stepper(kind, basis, grid.dt);
  std::vector<double> dW(grid.interior());
  for (std::int64_t n = 0; n < grid.N; ++n) {
    noise.next(std::span<double>(dW));
    stepper.advance(problem, state, dW);
    if (!finite()) {
      run.aborted = true;
      run.abort_step = state.n;
      return run;
    }
    maybe_snapshot();
  }
  return run;
}

}  // namespace sheq
