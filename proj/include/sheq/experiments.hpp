#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sheq/errors.hpp"
#include "sheq/grid.hpp"
#include "sheq/noise.hpp"
#include "sheq/parallel.hpp"
#include "sheq/problem.hpp"
#include "sheq/schemes.hpp"
#include "sheq/spectral.hpp"

namespace sheq {

namespace detail {

inline std::int64_t exact_ratio(double coarse, double fine, const std::string& what) {
  const double ratio = coarse / fine;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
    throw ValidationError(what + ": " + std::to_string(fine) + " does not divide " +
                          std::to_string(coarse));
  return static_cast<std::int64_t>(rounded);
}

inline double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace detail

/// Ordinary least squares of log2(error) against log2(dt).
/// Returns (slope, standard error of the slope).
inline std::pair<double, double> fit_order(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw ValidationError("fit_order: need at least 3 points");
  const auto n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [dt, err] : points) {
    if (!(dt > 0.0)) throw ValidationError("fit_order: step sizes must be positive");
    if (!(err > 0.0)) throw ValidationError("fit_order: error values must be positive");
    sx += std::log2(dt);
    sy += std::log2(err);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [dt, err] : points) {
    const double dx = std::log2(dt) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log2(err) - my);
  }
  if (sxx == 0.0) throw ValidationError("fit_order: step sizes must be distinct");
  const double slope = sxy / sxx;
  double ssr = 0.0;
  for (const auto& [dt, err] : points) {
    const double resid = (std::log2(err) - my) - slope * (std::log2(dt) - mx);
    ssr += resid * resid;
  }
  const double stderr_slope =
      points.size() == 2 ? 0.0 : std::sqrt(ssr / (n - 2.0) / sxx);
  return {slope, stderr_slope};
}

/// Which levels enter the slope fit: the coarsest few are pre-asymptotic and
/// levels too close to the reference carry coupling bias.
struct SlopeWindow {
  int skip_coarsest = 2;
  double ref_guard_factor = 4.0;  // exclude dt <= factor * dt_ref
};

struct StrongStudyConfig {
  std::string problem = "strong-test";
  SchemeKind scheme = SchemeKind::kSexp;
  int M = 64;
  std::vector<double> dt_levels;  // defaults to 2^-4 .. 2^-12
  double dt_ref = 0x1p-14;
  double T = 0.5;
  std::int64_t samples = 200;
  std::uint64_t seed = 1;
  std::vector<double> record_times;  // empty means every coarse step
  SlopeWindow window;
  int threads = 1;
  double nan_budget = 0.10;  // fatal aborted-sample fraction for Lipschitz problems

  StrongStudyConfig() {
    for (int k = 4; k <= 12; ++k) dt_levels.push_back(std::ldexp(1.0, -k));
  }

  std::int64_t n_ref() const { return detail::exact_ratio(T, dt_ref, "dt_ref vs T"); }

  void validate() const {
    if (M < 2) throw ValidationError("strong study: M must be >= 2");
    if (!(T > 0.0)) throw ValidationError("strong study: T must be positive");
    if (samples < 2) throw ValidationError("strong study: samples must be >= 2");
    if (dt_levels.empty()) throw ValidationError("strong study: no dt levels given");
    if (!(dt_ref > 0.0)) throw ValidationError("strong study: dt_ref must be positive");
    n_ref();
    for (double dt : dt_levels) {
      if (!(dt > 0.0) || dt > T)
        throw ValidationError("strong study: dt level " + std::to_string(dt) + " out of (0,T]");
      if (dt < dt_ref)
        throw ValidationError("strong study: dt level " + std::to_string(dt) +
                              " is finer than dt_ref");
      detail::exact_ratio(dt, dt_ref, "dt-ref divisibility");
      detail::exact_ratio(T, dt, "dt level vs T");
      for (double rt : record_times) {
        if (rt < 0.0 || rt > T)
          throw ValidationError("strong study: record time " + std::to_string(rt) +
                                " outside [0,T]");
        if (rt > 0.0) detail::exact_ratio(rt, dt, "record time vs dt level");
      }
    }
    if (window.skip_coarsest < 0)
      throw ValidationError("strong study: slope window skip must be nonnegative");
  }
};

struct LevelResult {
  double dt = 0.0;
  double sup_msq_error = 0.0;
  double rms_error = 0.0;
  double wall_time_s = 0.0;
  std::int64_t samples_used = 0;
  std::int64_t aborted_samples = 0;
  double sup_msq_stderr = 0.0;  // Monte Carlo standard error at the peak cell
  double peak_time = 0.0;
  double peak_x = 0.0;
};

struct ErrorReport {
  StrongStudyConfig config;
  std::vector<LevelResult> levels;  // coarsest first
  double fitted_slope = std::numeric_limits<double>::quiet_NaN();
  double slope_stderr = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> fit_levels;  // dt values that entered the fit
  std::string run_label;
};

/// Coupled strong-error study: every sample integrates the reference at
/// dt_ref (exponential scheme) plus each coarse level on the same noise path;
/// squared differences are averaged over samples at each recorded (t_n, x_m)
/// and the supremum over cells is reported per level. This overload takes the
/// problem directly, for instances defined in code.
inline ErrorReport strong_error_study(const StrongStudyConfig& cfg, const Problem& problem) {
  cfg.validate();
  const SpectralBasis basis(cfg.M);
  const std::int64_t n_ref = cfg.n_ref();
  const int width = cfg.M - 1;

  // Sort levels coarsest-first for reporting.
  std::vector<double> levels = cfg.dt_levels;
  std::sort(levels.begin(), levels.end(), std::greater<>());

  struct LevelPlan {
    double dt;
    std::int64_t steps;         // N at this level
    std::int64_t ratio;         // dt / dt_ref
    std::vector<std::int64_t> compare;  // coarse step indices to compare at
  };
  std::vector<LevelPlan> plans;
  std::vector<std::int64_t> ref_record;
  for (double dt : levels) {
    LevelPlan plan;
    plan.dt = dt;
    plan.steps = detail::exact_ratio(cfg.T, dt, "dt level vs T");
    plan.ratio = detail::exact_ratio(dt, cfg.dt_ref, "dt level vs dt_ref");
    if (cfg.record_times.empty()) {
      plan.compare.resize(plan.steps + 1);
      for (std::int64_t n = 0; n <= plan.steps; ++n) plan.compare[n] = n;
    } else {
      for (double rt : cfg.record_times)
        plan.compare.push_back(rt == 0.0 ? 0 : detail::exact_ratio(rt, dt, "record time"));
      std::sort(plan.compare.begin(), plan.compare.end());
      plan.compare.erase(std::unique(plan.compare.begin(), plan.compare.end()),
                         plan.compare.end());
    }
    for (std::int64_t n : plan.compare) ref_record.push_back(n * plan.ratio);
    plans.push_back(std::move(plan));
  }
  std::sort(ref_record.begin(), ref_record.end());
  ref_record.erase(std::unique(ref_record.begin(), ref_record.end()), ref_record.end());
  auto ref_slot = [&](std::int64_t ref_index) {
    return static_cast<std::size_t>(
        std::lower_bound(ref_record.begin(), ref_record.end(), ref_index) - ref_record.begin());
  };

  struct LevelAccumulator {
    std::vector<double> sum, sum_sq;
    std::int64_t used = 0, aborted = 0;
    double wall = 0.0;
  };
  std::vector<LevelAccumulator> acc(plans.size());
  for (std::size_t l = 0; l < plans.size(); ++l) {
    acc[l].sum.assign(plans[l].compare.size() * width, 0.0);
    acc[l].sum_sq.assign(plans[l].compare.size() * width, 0.0);
  }

  struct SampleResult {
    bool ref_aborted = false;
    std::vector<std::vector<double>> sq_diff;  // per level, empty when aborted
    std::vector<double> wall;
  };

  auto work = [&](std::int64_t sample, int) {
    SampleResult result;
    result.sq_diff.resize(plans.size());
    result.wall.assign(plans.size(), 0.0);
    const NoisePlan plan(cfg.seed, cfg.M, n_ref, cfg.T, static_cast<std::uint32_t>(sample));

    CoupledStream ref_stream(plan, n_ref);
    const GridSpec ref_grid(cfg.M, n_ref, cfg.T);
    const IntegrationRun ref_run =
        integrate(SchemeKind::kSexp, problem, ref_grid, basis, ref_stream, ref_record);
    if (ref_run.aborted) {
      result.ref_aborted = true;
      return result;
    }

    for (std::size_t l = 0; l < plans.size(); ++l) {
      const LevelPlan& lp = plans[l];
      CoupledStream stream(plan, lp.steps);
      const GridSpec grid(cfg.M, lp.steps, cfg.T);
      const double t0 = detail::now_seconds();
      const IntegrationRun run =
          integrate(cfg.scheme, problem, grid, basis, stream, lp.compare);
      result.wall[l] = detail::now_seconds() - t0;
      if (run.aborted) continue;
      auto& sq = result.sq_diff[l];
      sq.resize(lp.compare.size() * width);
      for (std::size_t k = 0; k < lp.compare.size(); ++k) {
        const auto& coarse = run.snapshots[k].u;
        const auto& fine = ref_run.snapshots[ref_slot(lp.compare[k] * lp.ratio)].u;
        for (int m = 0; m < width; ++m) {
          const double d = coarse[m] - fine[m];
          sq[k * width + m] = d * d;
        }
      }
    }
    return result;
  };

  auto fold = [&](std::int64_t, SampleResult& result) {
    for (std::size_t l = 0; l < plans.size(); ++l) {
      acc[l].wall += result.wall[l];
      if (result.ref_aborted || result.sq_diff[l].empty()) {
        acc[l].aborted += 1;
        continue;
      }
      acc[l].used += 1;
      const auto& sq = result.sq_diff[l];
      for (std::size_t i = 0; i < sq.size(); ++i) {
        acc[l].sum[i] += sq[i];
        acc[l].sum_sq[i] += sq[i] * sq[i];
      }
    }
  };

  ordered_parallel_reduce(cfg.samples, cfg.threads, work, fold);

  ErrorReport report;
  report.config = cfg;
  report.run_label = "strong-order:" + problem.label() + ":" +
                     std::string(scheme_label(cfg.scheme)) + ":seed" + std::to_string(cfg.seed);
  for (std::size_t l = 0; l < plans.size(); ++l) {
    LevelResult lr;
    lr.dt = plans[l].dt;
    lr.wall_time_s = acc[l].wall;
    lr.samples_used = acc[l].used;
    lr.aborted_samples = acc[l].aborted;
    if (problem.lipschitz() &&
        acc[l].aborted > static_cast<double>(cfg.samples) * cfg.nan_budget)
      throw NumericalAbort("strong study: " + std::to_string(acc[l].aborted) + " of " +
                           std::to_string(cfg.samples) + " samples aborted at dt = " +
                           std::to_string(plans[l].dt));
    if (acc[l].used > 0) {
      std::size_t peak = 0;
      double peak_mean = -1.0;
      for (std::size_t i = 0; i < acc[l].sum.size(); ++i) {
        const double mean = acc[l].sum[i] / acc[l].used;
        if (mean > peak_mean) {
          peak_mean = mean;
          peak = i;
        }
      }
      lr.sup_msq_error = peak_mean;
      lr.rms_error = std::sqrt(peak_mean);
      const double second = acc[l].sum_sq[peak] / acc[l].used;
      const double var = std::max(0.0, second - peak_mean * peak_mean);
      lr.sup_msq_stderr = std::sqrt(var / acc[l].used);
      lr.peak_time = plans[l].compare[peak / width] * plans[l].dt;
      lr.peak_x = static_cast<double>(peak % width + 1) / cfg.M;
    }
    report.levels.push_back(lr);
  }

  std::vector<std::pair<double, double>> fit_points;
  for (std::size_t l = 0; l < report.levels.size(); ++l) {
    if (static_cast<int>(l) < cfg.window.skip_coarsest) continue;
    const LevelResult& lr = report.levels[l];
    if (lr.dt <= cfg.window.ref_guard_factor * cfg.dt_ref) continue;
    if (!(lr.sup_msq_error > 0.0)) continue;
    fit_points.emplace_back(lr.dt, lr.sup_msq_error);
    report.fit_levels.push_back(lr.dt);
  }
  if (fit_points.size() >= 3) {
    auto [slope, se] = fit_order(fit_points);
    report.fitted_slope = slope;
    report.slope_stderr = se;
  }
  return report;
}

inline ErrorReport strong_error_study(const StrongStudyConfig& cfg) {
  return strong_error_study(cfg, problem_from_label(cfg.problem));
}

struct WorkPrecisionConfig {
  std::string problem = "strong-test";
  std::vector<SchemeKind> schemes = {SchemeKind::kSexp, SchemeKind::kSem, SchemeKind::kCnm};
  int M = 64;
  std::vector<double> dt_levels;  // defaults to 2^-3 .. 2^-8
  double dt_ref = 0x1p-12;
  double T = 1.0;
  std::int64_t samples = 100;
  std::uint64_t seed = 1;
  int threads = 1;

  WorkPrecisionConfig() {
    for (int k = 3; k <= 8; ++k) dt_levels.push_back(std::ldexp(1.0, -k));
  }

  void validate() const {
    problem_from_label(problem);
    if (M < 2) throw ValidationError("work-precision: M must be >= 2");
    if (!(T > 0.0)) throw ValidationError("work-precision: T must be positive");
    if (samples < 1) throw ValidationError("work-precision: samples must be >= 1");
    if (schemes.empty()) throw ValidationError("work-precision: no schemes selected");
    if (dt_levels.empty()) throw ValidationError("work-precision: no dt levels given");
    detail::exact_ratio(T, dt_ref, "dt_ref vs T");
    for (double dt : dt_levels) {
      if (dt < dt_ref)
        throw ValidationError("work-precision: dt level finer than dt_ref");
      detail::exact_ratio(dt, dt_ref, "dt-ref divisibility");
      detail::exact_ratio(T, dt, "dt level vs T");
    }
  }
};

struct WorkPrecisionRow {
  SchemeKind scheme;
  double dt = 0.0;
  double wall_time_total_s = 0.0;  // coarse-run time summed over samples
  double avg_final_error = 0.0;    // rms over samples of the sup-in-x error at T
};

/// Cost-versus-accuracy sweep. Each scheme is compared against its own
/// fine-step reference on the same sample path, following the convention that
/// the reference is produced by the same method.
inline std::vector<WorkPrecisionRow> work_precision_study(const WorkPrecisionConfig& cfg) {
  cfg.validate();
  const Problem problem = problem_from_label(cfg.problem);
  const SpectralBasis basis(cfg.M);
  const std::int64_t n_ref = detail::exact_ratio(cfg.T, cfg.dt_ref, "dt_ref vs T");
  const int width = cfg.M - 1;

  std::vector<double> levels = cfg.dt_levels;
  std::sort(levels.begin(), levels.end(), std::greater<>());

  std::vector<WorkPrecisionRow> rows;
  for (SchemeKind scheme : cfg.schemes) {
    std::vector<double> wall(levels.size(), 0.0);
    std::vector<double> err_sq(levels.size(), 0.0);
    std::vector<std::int64_t> used(levels.size(), 0);

    struct SampleResult {
      std::vector<double> wall, err_sq;
      std::vector<bool> ok;
    };
    auto work = [&](std::int64_t sample, int) {
      SampleResult result;
      result.wall.assign(levels.size(), 0.0);
      result.err_sq.assign(levels.size(), 0.0);
      result.ok.assign(levels.size(), false);
      const NoisePlan plan(cfg.seed, cfg.M, n_ref, cfg.T, static_cast<std::uint32_t>(sample));
      const std::int64_t final_ref[] = {n_ref};

      CoupledStream ref_stream(plan, n_ref);
      const GridSpec ref_grid(cfg.M, n_ref, cfg.T);
      const IntegrationRun ref_run =
          integrate(scheme, problem, ref_grid, basis, ref_stream, final_ref);
      if (ref_run.aborted) return result;

      for (std::size_t l = 0; l < levels.size(); ++l) {
        const std::int64_t steps = detail::exact_ratio(cfg.T, levels[l], "dt level vs T");
        const std::int64_t final_idx[] = {steps};
        CoupledStream stream(plan, steps);
        const GridSpec grid(cfg.M, steps, cfg.T);
        const double t0 = detail::now_seconds();
        const IntegrationRun run = integrate(scheme, problem, grid, basis, stream, final_idx);
        result.wall[l] = detail::now_seconds() - t0;
        if (run.aborted) continue;
        double sup = 0.0;
        for (int m = 0; m < width; ++m)
          sup = std::max(sup, std::abs(run.snapshots[0].u[m] - ref_run.snapshots[0].u[m]));
        result.err_sq[l] = sup * sup;
        result.ok[l] = true;
      }
      return result;
    };
    auto fold = [&](std::int64_t, SampleResult& result) {
      for (std::size_t l = 0; l < levels.size(); ++l) {
        wall[l] += result.wall[l];
        if (result.ok[l]) {
          err_sq[l] += result.err_sq[l];
          used[l] += 1;
        }
      }
    };
    ordered_parallel_reduce(cfg.samples, cfg.threads, work, fold);

    for (std::size_t l = 0; l < levels.size(); ++l) {
      WorkPrecisionRow row;
      row.scheme = scheme;
      row.dt = levels[l];
      row.wall_time_total_s = wall[l];
      row.avg_final_error = used[l] > 0 ? std::sqrt(err_sq[l] / used[l]) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

struct SchemeTiming {
  double dt = 0.0;
  int repetitions = 0;
  std::int64_t samples_per_rep = 0;
  double median_sexp_s = 0.0;
  double median_sem_s = 0.0;
  double median_cnm_s = 0.0;
};

/// Times full integrations of the three schemes at one step size, solo (no
/// concurrent samples), and reports per-scheme medians over the repetitions.
inline SchemeTiming scheme_timing_comparison(const std::string& problem_label, int M, double T,
                                             double dt, int repetitions = 5,
                                             std::int64_t samples_per_rep = 8,
                                             std::uint64_t seed = 1) {
  const Problem problem = problem_from_label(problem_label);
  const SpectralBasis basis(M);
  const std::int64_t steps = detail::exact_ratio(T, dt, "dt vs T");
  const GridSpec grid(M, steps, T);
  const std::int64_t final_idx[] = {steps};

  auto run_batch = [&](SchemeKind scheme) {
    const double t0 = detail::now_seconds();
    for (std::int64_t sample = 0; sample < samples_per_rep; ++sample) {
      const NoisePlan plan(seed, M, steps, T, static_cast<std::uint32_t>(sample));
      CoupledStream stream(plan, steps);
      integrate(scheme, problem, grid, basis, stream, final_idx);
    }
    return detail::now_seconds() - t0;
  };

  std::vector<double> sexp_times, sem_times, cnm_times;
  for (int rep = 0; rep < repetitions; ++rep) {
    // Alternate the visit order so slow clock drift cannot bias one scheme.
    if (rep % 2 == 0) {
      sexp_times.push_back(run_batch(SchemeKind::kSexp));
      sem_times.push_back(run_batch(SchemeKind::kSem));
      cnm_times.push_back(run_batch(SchemeKind::kCnm));
    } else {
      cnm_times.push_back(run_batch(SchemeKind::kCnm));
      sem_times.push_back(run_batch(SchemeKind::kSem));
      sexp_times.push_back(run_batch(SchemeKind::kSexp));
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  SchemeTiming timing;
  timing.dt = dt;
  timing.repetitions = repetitions;
  timing.samples_per_rep = samples_per_rep;
  timing.median_sexp_s = median(sexp_times);
  timing.median_sem_s = median(sem_times);
  timing.median_cnm_s = median(cnm_times);
  return timing;
}

struct AsConvergenceConfig {
  std::string problem = "as-test";
  int M = 64;
  std::vector<double> dt_levels;  // defaults to 2^-4, 2^-6, ..., 2^-12
  double dt_ref = 0x1p-14;
  double T = 0.5;
  std::uint64_t seed = 1;
  std::uint32_t sample_index = 0;

  AsConvergenceConfig() {
    for (int k = 4; k <= 12; k += 2) dt_levels.push_back(std::ldexp(1.0, -k));
  }

  void validate() const {
    problem_from_label(problem);
    if (M < 2) throw ValidationError("as-convergence: M must be >= 2");
    if (!(T > 0.0)) throw ValidationError("as-convergence: T must be positive");
    if (dt_levels.empty()) throw ValidationError("as-convergence: no dt levels given");
    detail::exact_ratio(T, dt_ref, "dt_ref vs T");
    for (double dt : dt_levels) {
      if (dt < dt_ref) throw ValidationError("as-convergence: dt level finer than dt_ref");
      detail::exact_ratio(dt, dt_ref, "dt-ref divisibility");
      detail::exact_ratio(T, dt, "dt level vs T");
    }
  }
};

struct AsLevelProfile {
  double dt = 0.0;
  std::vector<double> u_final;  // interior values at time T
  double sup_distance = 0.0;    // against the coupled reference profile
};

struct AsProfiles {
  AsConvergenceConfig config;
  std::vector<AsLevelProfile> levels;  // coarsest first
  std::vector<double> reference;
};

/// Final-time solution profiles of one sample path across step-size levels,
/// all driven by the same Brownian sheet, plus the coupled fine reference.
inline AsProfiles as_convergence_profiles(const AsConvergenceConfig& cfg) {
  cfg.validate();
  const Problem problem = problem_from_label(cfg.problem);
  const SpectralBasis basis(cfg.M);
  const std::int64_t n_ref = detail::exact_ratio(cfg.T, cfg.dt_ref, "dt_ref vs T");
  const NoisePlan plan(cfg.seed, cfg.M, n_ref, cfg.T, cfg.sample_index);

  AsProfiles out;
  out.config = cfg;

  const std::int64_t final_ref[] = {n_ref};
  CoupledStream ref_stream(plan, n_ref);
  const GridSpec ref_grid(cfg.M, n_ref, cfg.T);
  const IntegrationRun ref_run =
      integrate(SchemeKind::kSexp, problem, ref_grid, basis, ref_stream, final_ref);
  if (ref_run.aborted)
    throw NumericalAbort("as-convergence: reference integration aborted", cfg.sample_index,
                         ref_run.abort_step);
  out.reference = ref_run.snapshots[0].u;

  std::vector<double> levels = cfg.dt_levels;
  std::sort(levels.begin(), levels.end(), std::greater<>());
  for (double dt : levels) {
    const std::int64_t steps = detail::exact_ratio(cfg.T, dt, "dt level vs T");
    const std::int64_t final_idx[] = {steps};
    CoupledStream stream(plan, steps);
    const GridSpec grid(cfg.M, steps, cfg.T);
    const IntegrationRun run = integrate(SchemeKind::kSexp, problem, grid, basis, stream, final_idx);
    if (run.aborted)
      throw NumericalAbort("as-convergence: level integration aborted", cfg.sample_index,
                           run.abort_step);
    AsLevelProfile profile;
    profile.dt = dt;
    profile.u_final = run.snapshots[0].u;
    for (int m = 0; m < cfg.M - 1; ++m)
      profile.sup_distance =
          std::max(profile.sup_distance, std::abs(profile.u_final[m] - out.reference[m]));
    out.levels.push_back(std::move(profile));
  }
  return out;
}

struct MomentCheckConfig {
  std::string problem = "strong-test";
  std::vector<int> m_values = {16, 32, 64};
  double T = 0.5;
  double dt = 0x1p-9;
  std::int64_t samples = 256;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct MomentEstimate {
  int M = 0;
  double sup_second_moment = 0.0;
  double sup_fourth_moment = 0.0;
  std::int64_t samples_used = 0;
};

/// Monte Carlo estimates of sup over (t_n, x_m) of E|U|^2 and E|U|^4 across
/// spatial resolutions; boundedness across M is the point.
inline std::vector<MomentEstimate> moment_bound_check(const MomentCheckConfig& cfg) {
  const Problem problem = problem_from_label(cfg.problem);
  const std::int64_t steps = detail::exact_ratio(cfg.T, cfg.dt, "dt vs T");

  std::vector<MomentEstimate> out;
  for (int M : cfg.m_values) {
    const SpectralBasis basis(M);
    const GridSpec grid(M, steps, cfg.T);
    const int width = M - 1;
    std::vector<std::int64_t> record(steps + 1);
    for (std::int64_t n = 0; n <= steps; ++n) record[n] = n;

    std::vector<double> sum2(static_cast<std::size_t>(steps + 1) * width, 0.0);
    std::vector<double> sum4(sum2.size(), 0.0);
    std::int64_t used = 0;

    struct SampleResult {
      bool ok = false;
      std::vector<double> u2, u4;
    };
    auto work = [&](std::int64_t sample, int) {
      SampleResult result;
      const NoisePlan plan(cfg.seed, M, steps, cfg.T, static_cast<std::uint32_t>(sample));
      CoupledStream stream(plan, steps);
      const IntegrationRun run = integrate(SchemeKind::kSexp, problem, grid, basis, stream, record);
      if (run.aborted) return result;
      result.ok = true;
      result.u2.resize(sum2.size());
      result.u4.resize(sum2.size());
      for (std::size_t k = 0; k < run.snapshots.size(); ++k)
        for (int m = 0; m < width; ++m) {
          const double u = run.snapshots[k].u[m];
          result.u2[k * width + m] = u * u;
          result.u4[k * width + m] = u * u * u * u;
        }
      return result;
    };
    auto fold = [&](std::int64_t, SampleResult& result) {
      if (!result.ok) return;
      used += 1;
      for (std::size_t i = 0; i < sum2.size(); ++i) {
        sum2[i] += result.u2[i];
        sum4[i] += result.u4[i];
      }
    };
    ordered_parallel_reduce(cfg.samples, cfg.threads, work, fold);

    MomentEstimate estimate;
    estimate.M = M;
    estimate.samples_used = used;
    for (std::size_t i = 0; i < sum2.size() && used > 0; ++i) {
      estimate.sup_second_moment = std::max(estimate.sup_second_moment, sum2[i] / used);
      estimate.sup_fourth_moment = std::max(estimate.sup_fourth_moment, sum4[i] / used);
    }
    out.push_back(estimate);
  }
  return out;
}

struct HolderCheckConfig {
  std::string problem = "strong-test";
  int M = 64;
  double T = 0.5;
  // Fine enough that the per-step diffusion length sqrt(2 dt) sits well below
  // one cell; otherwise the smallest spatial lags are artificially smooth.
  double dt = 0x1p-16;
  std::int64_t samples = 256;
  std::uint64_t seed = 1;
  double base_time = 0.125;          // time increments start here (>= T/8)
  std::vector<double> time_lags;     // defaults to 2^-10 .. 2^-6
  double space_time = 0.25;          // spatial increments probed at this time
  std::vector<int> space_lag_cells = {1, 2, 4, 8};
  int threads = 1;

  HolderCheckConfig() {
    for (int k = 10; k >= 6; --k) time_lags.push_back(std::ldexp(1.0, -k));
  }
};

struct HolderRow {
  double lag = 0.0;      // |t-s| or |x-z|
  double mean_sq = 0.0;  // E |increment|^2 averaged over positions and samples
};

struct HolderResult {
  std::vector<HolderRow> time_rows, space_rows;
  double time_exponent = 0.0, time_stderr = 0.0;
  double space_exponent = 0.0, space_stderr = 0.0;
  bool passed = false;
};

/// Mean-square increment scaling of the solution field in time and space.
inline HolderResult holder_increment_check(const HolderCheckConfig& cfg) {
  const Problem problem = problem_from_label(cfg.problem);
  const SpectralBasis basis(cfg.M);
  const std::int64_t steps = detail::exact_ratio(cfg.T, cfg.dt, "dt vs T");
  const GridSpec grid(cfg.M, steps, cfg.T);
  const int width = cfg.M - 1;

  const std::int64_t base_idx = detail::exact_ratio(cfg.base_time, cfg.dt, "base time vs dt");
  const std::int64_t space_idx = detail::exact_ratio(cfg.space_time, cfg.dt, "space time vs dt");
  std::vector<std::int64_t> record = {base_idx, space_idx};
  std::vector<std::int64_t> lag_idx;
  for (double lag : cfg.time_lags) {
    lag_idx.push_back(detail::exact_ratio(lag, cfg.dt, "time lag vs dt"));
    record.push_back(base_idx + lag_idx.back());
  }
  std::sort(record.begin(), record.end());
  record.erase(std::unique(record.begin(), record.end()), record.end());
  auto slot = [&](std::int64_t idx) {
    return static_cast<std::size_t>(
        std::lower_bound(record.begin(), record.end(), idx) - record.begin());
  };

  std::vector<double> time_sum(cfg.time_lags.size(), 0.0);
  std::vector<double> space_sum(cfg.space_lag_cells.size(), 0.0);
  std::int64_t used = 0;

  struct SampleResult {
    bool ok = false;
    std::vector<double> time_msq, space_msq;
  };
  auto work = [&](std::int64_t sample, int) {
    SampleResult result;
    const NoisePlan plan(cfg.seed, cfg.M, steps, cfg.T, static_cast<std::uint32_t>(sample));
    CoupledStream stream(plan, steps);
    const IntegrationRun run = integrate(SchemeKind::kSexp, problem, grid, basis, stream, record);
    if (run.aborted) return result;
    result.ok = true;
    const auto& base = run.snapshots[slot(base_idx)].u;
    result.time_msq.assign(cfg.time_lags.size(), 0.0);
    for (std::size_t k = 0; k < cfg.time_lags.size(); ++k) {
      const auto& later = run.snapshots[slot(base_idx + lag_idx[k])].u;
      double acc = 0.0;
      for (int m = 0; m < width; ++m) {
        const double d = later[m] - base[m];
        acc += d * d;
      }
      result.time_msq[k] = acc / width;
    }
    const auto& field = run.snapshots[slot(space_idx)].u;
    result.space_msq.assign(cfg.space_lag_cells.size(), 0.0);
    for (std::size_t k = 0; k < cfg.space_lag_cells.size(); ++k) {
      const int lag = cfg.space_lag_cells[k];
      double acc = 0.0;
      int pairs = 0;
      for (int m = 0; m + lag < width; ++m, ++pairs) {
        const double d = field[m + lag] - field[m];
        acc += d * d;
      }
      result.space_msq[k] = acc / pairs;
    }
    return result;
  };
  auto fold = [&](std::int64_t, SampleResult& result) {
    if (!result.ok) return;
    used += 1;
    for (std::size_t k = 0; k < time_sum.size(); ++k) time_sum[k] += result.time_msq[k];
    for (std::size_t k = 0; k < space_sum.size(); ++k) space_sum[k] += result.space_msq[k];
  };
  ordered_parallel_reduce(cfg.samples, cfg.threads, work, fold);
  if (used == 0) throw NumericalAbort("holder check: every sample aborted");

  HolderResult result;
  std::vector<std::pair<double, double>> time_points, space_points;
  for (std::size_t k = 0; k < cfg.time_lags.size(); ++k) {
    result.time_rows.push_back({cfg.time_lags[k], time_sum[k] / used});
    time_points.emplace_back(cfg.time_lags[k], time_sum[k] / used);
  }
  for (std::size_t k = 0; k < cfg.space_lag_cells.size(); ++k) {
    const double lag = static_cast<double>(cfg.space_lag_cells[k]) / cfg.M;
    result.space_rows.push_back({lag, space_sum[k] / used});
    space_points.emplace_back(lag, space_sum[k] / used);
  }
  std::tie(result.time_exponent, result.time_stderr) = fit_order(time_points);
  std::tie(result.space_exponent, result.space_stderr) = fit_order(space_points);
  result.passed = result.time_exponent >= 0.35;
  return result;
}

}  // namespace sheq
