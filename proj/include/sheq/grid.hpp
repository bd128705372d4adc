#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sheq/errors.hpp"

namespace sheq {

/// Uniform space-time mesh on [0,1] x [0,T] with homogeneous Dirichlet
/// boundaries. Interior points are x_m = m/M for m = 1..M-1; state vectors
/// hold interior values only, boundary zeros are implicit.
struct GridSpec {
  int M = 2;             // spatial cells
  std::int64_t N = 1;    // time steps
  double T = 1.0;        // final time
  double dx = 0.5;
  double dt = 1.0;

  GridSpec() = default;
  // N = 0 is tolerated as the degenerate "no steps" mesh used by integrate.
  GridSpec(int cells, std::int64_t steps, double final_time)
      : M(cells),
        N(steps),
        T(final_time),
        dx(1.0 / cells),
        dt(steps > 0 ? final_time / steps : 0.0) {
    if (cells < 2) throw ValidationError("GridSpec: M must be >= 2, got " + std::to_string(cells));
    if (steps < 0) throw ValidationError("GridSpec: N must be >= 0, got " + std::to_string(steps));
    if (!(final_time > 0.0)) throw ValidationError("GridSpec: T must be positive");
  }

  int interior() const { return M - 1; }
  double x(int m) const { return static_cast<double>(m) / M; }
  double t(std::int64_t n) const { return n * dt; }
};

/// Largest grid point m/M that is <= y (the spatial rounding operator).
inline double grid_floor(double y, int M) {
  if (y < 0.0 || y > 1.0) throw ValidationError("grid_floor: y must lie in [0,1]");
  double cell = std::floor(M * y);
  if (cell > M) cell = M;
  return cell / M;
}

/// Index of the cell containing y, in 0..M (y = 1 maps to M).
inline int grid_floor_index(double y, int M) {
  if (y < 0.0 || y > 1.0) throw ValidationError("grid_floor_index: y must lie in [0,1]");
  int cell = static_cast<int>(std::floor(M * y));
  return cell > M ? M : cell;
}

/// Index of the largest discrete time t_n <= s.
inline std::int64_t time_floor_index(double s, const GridSpec& grid) {
  if (s < 0.0 || s > grid.T) throw ValidationError("time_floor_index: s must lie in [0,T]");
  auto n = static_cast<std::int64_t>(std::floor(grid.N * (s / grid.T)));
  return n > grid.N ? grid.N : n;
}

/// Largest discrete time t_n <= s (the temporal rounding operator).
inline double time_floor(double s, const GridSpec& grid) {
  return time_floor_index(s, grid) * grid.dt;
}

/// Piecewise-linear interpolation of grid values (length M+1, zero at both
/// boundaries) at a point x in [0,1].
inline double interpolate(std::span<const double> values, double x) {
  if (values.size() < 3) throw ValidationError("interpolate: need at least M+1 = 3 values");
  if (values.front() != 0.0 || values.back() != 0.0)
    throw ValidationError("interpolate: boundary values must be zero");
  if (x < 0.0 || x > 1.0) throw ValidationError("interpolate: x must lie in [0,1]");
  const int M = static_cast<int>(values.size()) - 1;
  int l = static_cast<int>(std::floor(M * x));
  if (l >= M) l = M - 1;
  const double theta = M * x - l;
  return values[l] + theta * (values[l + 1] - values[l]);
}

/// Pads an interior-state vector with the implicit boundary zeros.
inline std::vector<double> with_boundary(std::span<const double> interior) {
  std::vector<double> out(interior.size() + 2, 0.0);
  std::copy(interior.begin(), interior.end(), out.begin() + 1);
  return out;
}

}  // namespace sheq
