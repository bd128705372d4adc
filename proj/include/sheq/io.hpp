#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sheq/errors.hpp"
#include "sheq/experiments.hpp"
#include "sheq/green.hpp"
#include "sheq/parallel.hpp"
#include "sheq/version.hpp"

namespace sheq {

// ---------------------------------------------------------------------------
// Formatting and small parsers
// ---------------------------------------------------------------------------

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Accepts plain decimals and dyadic tokens like "2^-14".
inline double parse_dt_token(std::string_view token) {
  if (token.rfind("2^", 0) == 0) {
    int exponent = 0;
    const auto res = std::from_chars(token.data() + 2, token.data() + token.size(), exponent);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
      throw ValidationError("bad step-size token '" + std::string(token) + "'");
    return std::ldexp(1.0, exponent);
  }
  double value = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
    throw ValidationError("bad step-size token '" + std::string(token) + "'");
  return value;
}

inline std::vector<std::string> split_csv_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? text.size() : comma;
    std::string item(text.substr(start, end - start));
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<double> parse_dt_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& tok : split_csv_list(text)) out.push_back(parse_dt_token(tok));
  if (out.empty()) throw ValidationError("empty step-size list");
  return out;
}

// ---------------------------------------------------------------------------
// CSV emission (LF newlines, comma delimiter, round-trip floats)
// ---------------------------------------------------------------------------

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : path_(path.string()) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    stream_.open(path, std::ios::binary | std::ios::trunc);
    if (!stream_) throw IoError("cannot open CSV for writing", path_);
  }

  void header(std::initializer_list<std::string_view> names) { line(names); }

  CsvWriter& cell(double v) {
    sep();
    stream_ << format_double(v);
    return *this;
  }
  CsvWriter& cell(std::int64_t v) {
    sep();
    stream_ << v;
    return *this;
  }
  CsvWriter& cell(int v) { return cell(static_cast<std::int64_t>(v)); }
  CsvWriter& cell(std::string_view v) {
    sep();
    stream_ << v;
    return *this;
  }
  void end_row() {
    stream_ << '\n';
    first_ = true;
    if (!stream_) throw IoError("CSV write failure", path_);
  }

 private:
  void sep() {
    if (!first_) stream_ << ',';
    first_ = false;
  }
  void line(std::initializer_list<std::string_view> names) {
    for (auto n : names) cell(n);
    end_row();
  }

  std::string path_;
  std::ofstream stream_;
  bool first_ = true;
};

inline double log2_or_neg_inf(double v) {
  return v > 0.0 ? std::log2(v) : -std::numeric_limits<double>::infinity();
}

/// Per-level strong-error table. One row per step size, coarsest first.
inline void write_error_report_csv(const ErrorReport& report, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"dt", "sup_msq_error", "rms_error", "wall_time_s", "samples_used",
              "aborted_samples", "log2_dt", "log2_sup_msq_error"});
  for (const auto& level : report.levels) {
    csv.cell(level.dt)
        .cell(level.sup_msq_error)
        .cell(level.rms_error)
        .cell(level.wall_time_s)
        .cell(level.samples_used)
        .cell(level.aborted_samples)
        .cell(std::log2(level.dt))
        .cell(log2_or_neg_inf(level.sup_msq_error));
    csv.end_row();
  }
}

inline void write_work_precision_csv(const std::vector<WorkPrecisionRow>& rows,
                                     const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"scheme", "dt", "wall_time_total_s", "avg_final_error", "log2_dt",
              "log2_avg_final_error"});
  for (const auto& row : rows) {
    csv.cell(scheme_label(row.scheme))
        .cell(row.dt)
        .cell(row.wall_time_total_s)
        .cell(row.avg_final_error)
        .cell(std::log2(row.dt))
        .cell(log2_or_neg_inf(row.avg_final_error));
    csv.end_row();
  }
}

inline void write_as_profiles_csv(const AsProfiles& profiles, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"kind", "dt", "x", "u"});
  const int M = profiles.config.M;
  auto emit = [&](std::string_view kind, double dt, const std::vector<double>& interior) {
    csv.cell(kind).cell(dt).cell(0.0).cell(0.0);
    csv.end_row();
    for (int m = 1; m < M; ++m) {
      csv.cell(kind).cell(dt).cell(static_cast<double>(m) / M).cell(interior[m - 1]);
      csv.end_row();
    }
    csv.cell(kind).cell(dt).cell(1.0).cell(0.0);
    csv.end_row();
  };
  for (const auto& level : profiles.levels) emit("level", level.dt, level.u_final);
  emit("reference", profiles.config.dt_ref, profiles.reference);
}

inline void write_as_distances_csv(const AsProfiles& profiles,
                                   const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"dt", "sup_distance", "log2_dt", "log2_sup_distance"});
  for (const auto& level : profiles.levels) {
    csv.cell(level.dt)
        .cell(level.sup_distance)
        .cell(std::log2(level.dt))
        .cell(log2_or_neg_inf(level.sup_distance));
    csv.end_row();
  }
}

inline void write_kernel_bounds_csv(const std::vector<BoundFit>& fits,
                                    const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"bound", "M", "s", "t", "x", "alpha", "lhs", "envelope", "ratio"});
  for (const auto& fit : fits)
    for (const auto& p : fit.probes) {
      csv.cell(kernel_bound_label(fit.bound))
          .cell(p.M)
          .cell(p.s)
          .cell(p.t)
          .cell(p.x)
          .cell(p.alpha)
          .cell(p.lhs)
          .cell(p.envelope)
          .cell(p.ratio);
      csv.end_row();
    }
}

inline void write_moments_csv(const std::vector<MomentEstimate>& estimates,
                              const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"M", "p", "sup_moment", "samples_used"});
  for (const auto& e : estimates) {
    csv.cell(e.M).cell(1).cell(e.sup_second_moment).cell(e.samples_used);
    csv.end_row();
    csv.cell(e.M).cell(2).cell(e.sup_fourth_moment).cell(e.samples_used);
    csv.end_row();
  }
}

inline void write_holder_csv(const HolderResult& result, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"kind", "lag", "mean_sq_increment", "log2_lag", "log2_mean_sq"});
  for (const auto& row : result.time_rows) {
    csv.cell("time").cell(row.lag).cell(row.mean_sq).cell(std::log2(row.lag)).cell(
        log2_or_neg_inf(row.mean_sq));
    csv.end_row();
  }
  for (const auto& row : result.space_rows) {
    csv.cell("space").cell(row.lag).cell(row.mean_sq).cell(std::log2(row.lag)).cell(
        log2_or_neg_inf(row.mean_sq));
    csv.end_row();
  }
}

inline void write_trajectory_csv(const IntegrationRun& run, const GridSpec& grid,
                                 const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.header({"t", "x", "u"});
  for (const auto& snap : run.snapshots) {
    csv.cell(snap.t).cell(0.0).cell(0.0);
    csv.end_row();
    for (int m = 1; m < grid.M; ++m) {
      csv.cell(snap.t).cell(grid.x(m)).cell(snap.u[m - 1]);
      csv.end_row();
    }
    csv.cell(snap.t).cell(1.0).cell(0.0);
    csv.end_row();
  }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// JSON run record: tool version, the exact flag values of the run, and the
/// headline numbers. `sheq <subcommand> --from-manifest FILE` replays it.
inline void write_manifest(const std::string& subcommand,
                           const std::map<std::string, std::string>& config,
                           const nlohmann::json& outcome, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["tool"] = std::string(kToolName);
  doc["version"] = std::string(kVersion);
  doc["subcommand"] = subcommand;
  doc["config"] = config;
  doc["outcome"] = outcome;
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream stream(path, std::ios::binary | std::ios::trunc);
  if (!stream) throw IoError("cannot open manifest for writing", path.string());
  stream << doc.dump(2) << '\n';
  if (!stream) throw IoError("manifest write failure", path.string());
}

// ---------------------------------------------------------------------------
// CLI configuration
// ---------------------------------------------------------------------------

struct SingleRunConfig {
  std::string problem = "strong-test";
  SchemeKind scheme = SchemeKind::kSexp;
  int M = 64;
  double dt = 0x1p-10;
  double T = 0.5;
  std::uint64_t seed = 1;
  std::uint32_t sample_index = 0;
  std::string record = "auto";  // auto | all | comma-separated step indices
};

struct KernelChecksConfig {
  std::vector<int> m_values = {8, 16, 32, 64};
  ProbeGridSpec grid;
};

struct MomentChecksCliConfig {
  MomentCheckConfig moments;
  HolderCheckConfig holder;
};

struct WorkPrecisionCliConfig {
  WorkPrecisionConfig study;
  double timing_dt = 0x1p-6;
  int timing_reps = 5;
  std::int64_t timing_samples = 8;
};

/// Parsed and validated run description for one CLI invocation.
struct RunConfig {
  std::string subcommand;
  std::string output_dir = "out";
  int threads = 0;  // 0 = hardware default

  StrongStudyConfig strong;
  WorkPrecisionCliConfig work;
  AsConvergenceConfig as_convergence;
  KernelChecksConfig kernel;
  MomentChecksCliConfig moment;
  SingleRunConfig single;

  /// The exact flag tokens reproducing this configuration.
  std::map<std::string, std::string> tokens;
};

namespace detail {

// One instance per subcommand so that each keeps its own defaults.
struct RawOptions {
  std::string problem = "strong-test";
  std::string scheme = "sexp";
  std::string schemes = "sexp,sem,cnm";
  int M = 64;
  double T = 0.5;
  std::string dt_levels;
  std::string dt_ref = "2^-14";
  std::string dt = "2^-10";
  std::int64_t samples = 200;
  std::uint64_t seed = 1;
  std::uint32_t sample_index = 0;
  int slope_skip = 2;
  double slope_guard = 4.0;
  double nan_budget = 0.10;
  std::string record = "auto";
  std::string record_times;
  std::string m_values = "8,16,32,64";
  std::string timing_dt = "2^-6";
  int timing_reps = 5;
  std::int64_t timing_samples = 8;
  int probe_times = 6;
  int probe_gaps = 5;
  int probe_x = 9;
  int probe_alphas = 6;
  int time_panels = 128;
  double t_max = 0.5;
  std::string holder_dt = "2^-12";
  std::int64_t holder_samples = 256;
  double holder_base_time = 0.125;
  double holder_space_time = 0.25;
};

inline CLI::Option* tuned(CLI::Option* option) {
  return option->capture_default_str()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

/// Thrown when the user asked for --help; carries the rendered text.
struct HelpRequested {
  std::string text;
};

inline std::string trim_copy(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Reads a flat key=value file into CLI tokens. Blank lines and '#' comments
// are allowed; anything else must be key=value.
inline std::vector<std::string> tokens_from_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file", path);
  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config file " + path + " line " + std::to_string(lineno) +
                            ": expected key=value");
    const std::string key = trim_copy(line.substr(0, eq));
    std::string value = trim_copy(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config file " + path + " line " + std::to_string(lineno) +
                            ": empty key");
    if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                              (value.front() == '\'' && value.back() == '\'')))
      value = value.substr(1, value.size() - 2);
    tokens.push_back("--" + key);
    tokens.push_back(value);
  }
  return tokens;
}

// Reads the "config" object of a manifest and turns it back into CLI tokens.
inline std::vector<std::string> tokens_from_manifest(const std::string& path) {
  std::ifstream stream(path, std::ios::binary);
  if (!stream) throw IoError("cannot open manifest", path);
  nlohmann::json doc;
  try {
    stream >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("subcommand") || !doc.contains("config"))
    throw ValidationError("manifest " + path + " lacks subcommand/config entries");
  std::vector<std::string> tokens;
  tokens.push_back(doc["subcommand"].get<std::string>());
  for (const auto& [key, value] : doc["config"].items()) {
    tokens.push_back("--" + key);
    tokens.push_back(value.get<std::string>());
  }
  return tokens;
}

}  // namespace detail

/// Parses command line arguments (without the program name). Values from a
/// `--config key=value` file fill in anything not given on the command line;
/// `--from-manifest FILE` replays a recorded run, with explicit flags taking
/// precedence. Throws ValidationError for anything malformed and
/// detail::HelpRequested (carrying the rendered text) for --help.
inline RunConfig parse_config(std::vector<std::string> args) {
  // Extract --config and --from-manifest first so their values can be layered
  // beneath anything typed explicitly: flags > config file > manifest.
  std::string config_path, manifest_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto take_value = [&](const char* name) -> std::string {
      if (i + 1 >= args.size())
        throw ValidationError(std::string(name) + " needs a file path");
      return args[++i];
    };
    if (a == "--config") {
      config_path = take_value("--config");
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    } else if (a == "--from-manifest") {
      manifest_path = take_value("--from-manifest");
    } else if (a.rfind("--from-manifest=", 0) == 0) {
      manifest_path = a.substr(16);
    } else {
      rest.push_back(a);
    }
  }
  std::string subcommand_token;
  if (!rest.empty() && !rest[0].empty() && rest[0][0] != '-') {
    subcommand_token = rest[0];
    rest.erase(rest.begin());
  }
  std::vector<std::string> layered;
  if (!manifest_path.empty()) {
    const auto manifest_tokens = detail::tokens_from_manifest(manifest_path);
    if (subcommand_token.empty()) {
      subcommand_token = manifest_tokens[0];
    } else if (subcommand_token != manifest_tokens[0]) {
      throw ValidationError("manifest records subcommand '" + manifest_tokens[0] +
                            "' but '" + subcommand_token + "' was requested");
    }
    layered.insert(layered.end(), manifest_tokens.begin() + 1, manifest_tokens.end());
  }
  if (!config_path.empty()) {
    const auto file_tokens = detail::tokens_from_config_file(config_path);
    layered.insert(layered.end(), file_tokens.begin(), file_tokens.end());
  }
  layered.insert(layered.end(), rest.begin(), rest.end());
  if (!subcommand_token.empty()) layered.insert(layered.begin(), subcommand_token);
  args = std::move(layered);

  CLI::App app{"1D stochastic heat equation: finite differences in space, "
               "exponential/SEM/CNM integrators in time"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::map<std::string, detail::RawOptions> raws;

  auto add_common = [&](CLI::App* sub, detail::RawOptions& raw) {
    detail::tuned(sub->add_option("--problem", raw.problem,
                                  "problem label (strong-test, as-test, nonlip-demo)"));
    detail::tuned(sub->add_option("-M,--spatial-cells", raw.M, "number of spatial cells"));
    detail::tuned(sub->add_option("-T,--final-time", raw.T, "final time"));
    detail::tuned(sub->add_option("--seed", raw.seed, "base seed of the noise plan"));
    detail::tuned(sub->add_option("--out", cfg.output_dir, "output directory"))
        ->envname("SHEQ_OUTPUT_DIR");
    detail::tuned(sub->add_option("--threads", cfg.threads, "worker threads (0 = hardware)"));
    sub->add_option("--config", "flat key=value file; command-line flags override it")
        ->type_name("FILE");
    sub->add_option("--from-manifest", "replay the configuration recorded in a manifest")
        ->type_name("FILE");
  };

  auto* strong = app.add_subcommand("strong-order", "coupled strong temporal-order study");
  {
    detail::RawOptions& raw = raws["strong-order"];
    raw.dt_levels = "2^-4,2^-5,2^-6,2^-7,2^-8,2^-9,2^-10,2^-11,2^-12";
    add_common(strong, raw);
    detail::tuned(strong->add_option("--scheme", raw.scheme, "integrator (sexp, sem, cnm)"));
    detail::tuned(strong->add_option("--dt-levels", raw.dt_levels,
                                     "comma-separated step sizes (decimal or 2^-k)"));
    detail::tuned(strong->add_option("--dt-ref", raw.dt_ref, "reference step size"));
    detail::tuned(strong->add_option("--samples", raw.samples, "Monte Carlo samples"));
    detail::tuned(strong->add_option(
        "--record-times", raw.record_times,
        "comma-separated comparison times (default: all coarse steps)"));
    detail::tuned(strong->add_option("--slope-skip-coarse", raw.slope_skip,
                                     "coarsest levels excluded from the slope fit"));
    detail::tuned(strong->add_option("--slope-guard-factor", raw.slope_guard,
                                     "exclude levels with dt <= factor * dt_ref from the fit"));
    detail::tuned(strong->add_option("--nan-budget", raw.nan_budget,
                                     "fatal aborted-sample fraction for Lipschitz problems"));
  }

  auto* work = app.add_subcommand("work-precision", "cost versus accuracy across integrators");
  {
    detail::RawOptions& raw = raws["work-precision"];
    raw.T = 1.0;
    raw.dt_levels = "2^-3,2^-4,2^-5,2^-6,2^-7,2^-8";
    raw.dt_ref = "2^-12";
    raw.samples = 100;
    add_common(work, raw);
    detail::tuned(work->add_option("--schemes", raw.schemes, "comma-separated integrator list"));
    detail::tuned(work->add_option("--dt-levels", raw.dt_levels, "comma-separated step sizes"));
    detail::tuned(work->add_option("--dt-ref", raw.dt_ref, "per-scheme reference step size"));
    detail::tuned(work->add_option("--samples", raw.samples, "Monte Carlo samples"));
    detail::tuned(work->add_option("--timing-dt", raw.timing_dt,
                                   "step size of the solo timing comparison"));
    detail::tuned(work->add_option("--timing-reps", raw.timing_reps, "timing repetitions"));
    detail::tuned(
        work->add_option("--timing-samples", raw.timing_samples, "integrations per timing rep"));
  }

  auto* asc = app.add_subcommand("as-convergence", "pathwise convergence profiles of one sample");
  {
    detail::RawOptions& raw = raws["as-convergence"];
    raw.problem = "as-test";
    raw.dt_levels = "2^-4,2^-6,2^-8,2^-10,2^-12";
    add_common(asc, raw);
    detail::tuned(asc->add_option("--dt-levels", raw.dt_levels, "comma-separated step sizes"));
    detail::tuned(asc->add_option("--dt-ref", raw.dt_ref, "reference step size"));
    detail::tuned(
        asc->add_option("--sample-index", raw.sample_index, "which sample path to draw"));
  }

  auto* kernel = app.add_subcommand("kernel-checks", "discrete kernel estimate sweeps");
  {
    detail::RawOptions& raw = raws["kernel-checks"];
    add_common(kernel, raw);
    detail::tuned(kernel->add_option("--m-values", raw.m_values, "grid sizes to sweep"));
    detail::tuned(kernel->add_option("--t-max", raw.t_max, "largest probed time"));
    detail::tuned(kernel->add_option("--probe-times", raw.probe_times, "time probes per sweep"));
    detail::tuned(kernel->add_option("--probe-gaps", raw.probe_gaps, "time-gap probes per sweep"));
    detail::tuned(kernel->add_option("--probe-x", raw.probe_x, "spatial probes per sweep"));
    detail::tuned(
        kernel->add_option("--probe-alphas", raw.probe_alphas, "alpha probes per sweep"));
    detail::tuned(
        kernel->add_option("--time-panels", raw.time_panels, "Simpson panels for the r-integral"));
  }

  auto* moment = app.add_subcommand("moment-checks",
                                    "moment boundedness and increment-scaling estimates");
  {
    detail::RawOptions& raw = raws["moment-checks"];
    raw.m_values = "16,32,64";
    raw.dt = "2^-9";
    raw.samples = 256;
    add_common(moment, raw);
    detail::tuned(
        moment->add_option("--m-values", raw.m_values, "grid sizes for the moment sweep"));
    detail::tuned(moment->add_option("--dt", raw.dt, "step size of the moment sweep"));
    detail::tuned(moment->add_option("--samples", raw.samples, "Monte Carlo samples"));
    detail::tuned(moment->add_option("--holder-dt", raw.holder_dt,
                                     "step size of the increment-scaling sweep"));
    detail::tuned(moment->add_option("--holder-samples", raw.holder_samples,
                                     "samples for increment scaling"));
    detail::tuned(moment->add_option("--holder-base-time", raw.holder_base_time,
                                     "time increments start here"));
    detail::tuned(moment->add_option("--holder-space-time", raw.holder_space_time,
                                     "spatial increments probed at this time"));
  }

  auto* single = app.add_subcommand("single-run", "one trajectory, snapshots to CSV");
  {
    detail::RawOptions& raw = raws["single-run"];
    add_common(single, raw);
    detail::tuned(single->add_option("--scheme", raw.scheme, "integrator (sexp, sem, cnm)"));
    detail::tuned(single->add_option("--dt", raw.dt, "step size"));
    detail::tuned(single->add_option("--sample-index", raw.sample_index, "which sample path"));
    detail::tuned(single->add_option("--record", raw.record,
                                     "auto | all | comma-separated step indices"));
  }

  std::vector<const char*> argv;
  argv.push_back("sheq");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    CLI::App* scope = app.get_subcommands().empty() ? &app : app.get_subcommands().at(0);
    throw detail::HelpRequested{scope->help()};
  } catch (const CLI::ParseError& e) {
    throw ValidationError(e.what());
  }

  CLI::App* chosen = app.get_subcommands().at(0);
  cfg.subcommand = chosen->get_name();
  const detail::RawOptions& raw = raws.at(cfg.subcommand);
  problem_from_label(raw.problem);
  if (cfg.threads < 0) throw ValidationError("--threads must be nonnegative");
  if (cfg.threads == 0) cfg.threads = default_threads();

  auto token = [&](const std::string& key, const std::string& value) { cfg.tokens[key] = value; };
  token("problem", raw.problem);
  token("spatial-cells", std::to_string(raw.M));
  token("final-time", format_double(raw.T));
  token("seed", std::to_string(raw.seed));

  if (cfg.subcommand == "strong-order") {
    StrongStudyConfig& s = cfg.strong;
    s.problem = raw.problem;
    s.scheme = scheme_from_label(raw.scheme);
    s.M = raw.M;
    s.T = raw.T;
    s.dt_levels = parse_dt_list(raw.dt_levels);
    s.dt_ref = parse_dt_token(raw.dt_ref);
    s.samples = raw.samples;
    s.seed = raw.seed;
    s.window.skip_coarsest = raw.slope_skip;
    s.window.ref_guard_factor = raw.slope_guard;
    s.nan_budget = raw.nan_budget;
    s.threads = cfg.threads;
    if (!raw.record_times.empty())
      for (const auto& tok : split_csv_list(raw.record_times))
        s.record_times.push_back(parse_dt_token(tok));
    s.validate();
    token("scheme", raw.scheme);
    token("dt-levels", raw.dt_levels);
    token("dt-ref", raw.dt_ref);
    token("samples", std::to_string(raw.samples));
    if (!raw.record_times.empty()) token("record-times", raw.record_times);
    token("slope-skip-coarse", std::to_string(raw.slope_skip));
    token("slope-guard-factor", format_double(raw.slope_guard));
    token("nan-budget", format_double(raw.nan_budget));
  } else if (cfg.subcommand == "work-precision") {
    WorkPrecisionConfig& w = cfg.work.study;
    w.problem = raw.problem;
    w.M = raw.M;
    w.T = raw.T;
    w.schemes.clear();
    for (const auto& tok : split_csv_list(raw.schemes)) w.schemes.push_back(scheme_from_label(tok));
    w.dt_levels = parse_dt_list(raw.dt_levels);
    w.dt_ref = parse_dt_token(raw.dt_ref);
    w.samples = raw.samples;
    w.seed = raw.seed;
    w.threads = cfg.threads;
    w.validate();
    cfg.work.timing_dt = parse_dt_token(raw.timing_dt);
    cfg.work.timing_reps = raw.timing_reps;
    cfg.work.timing_samples = raw.timing_samples;
    if (cfg.work.timing_reps < 1) throw ValidationError("--timing-reps must be >= 1");
    if (cfg.work.timing_samples < 1) throw ValidationError("--timing-samples must be >= 1");
    token("schemes", raw.schemes);
    token("dt-levels", raw.dt_levels);
    token("dt-ref", raw.dt_ref);
    token("samples", std::to_string(raw.samples));
    token("timing-dt", raw.timing_dt);
    token("timing-reps", std::to_string(raw.timing_reps));
    token("timing-samples", std::to_string(raw.timing_samples));
  } else if (cfg.subcommand == "as-convergence") {
    AsConvergenceConfig& a = cfg.as_convergence;
    a.problem = raw.problem;
    a.M = raw.M;
    a.T = raw.T;
    a.dt_levels = parse_dt_list(raw.dt_levels);
    a.dt_ref = parse_dt_token(raw.dt_ref);
    a.seed = raw.seed;
    a.sample_index = raw.sample_index;
    a.validate();
    token("dt-levels", raw.dt_levels);
    token("dt-ref", raw.dt_ref);
    token("sample-index", std::to_string(raw.sample_index));
  } else if (cfg.subcommand == "kernel-checks") {
    KernelChecksConfig& k = cfg.kernel;
    k.m_values.clear();
    for (const auto& tok : split_csv_list(raw.m_values)) {
      int v = 0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{} || v < 2)
        throw ValidationError("bad --m-values entry '" + tok + "'");
      k.m_values.push_back(v);
    }
    if (k.m_values.empty()) throw ValidationError("--m-values must not be empty");
    k.grid.time_count = raw.probe_times;
    k.grid.gap_count = raw.probe_gaps;
    k.grid.x_count = raw.probe_x;
    k.grid.alpha_count = raw.probe_alphas;
    k.grid.time_panels = raw.time_panels;
    k.grid.t_max = raw.t_max;
    if (raw.probe_times < 1 || raw.probe_gaps < 1 || raw.probe_x < 1 || raw.probe_alphas < 1)
      throw ValidationError("probe counts must be positive");
    if (!(raw.t_max > 0.0)) throw ValidationError("--t-max must be positive");
    token("m-values", raw.m_values);
    token("t-max", format_double(raw.t_max));
    token("probe-times", std::to_string(raw.probe_times));
    token("probe-gaps", std::to_string(raw.probe_gaps));
    token("probe-x", std::to_string(raw.probe_x));
    token("probe-alphas", std::to_string(raw.probe_alphas));
    token("time-panels", std::to_string(raw.time_panels));
  } else if (cfg.subcommand == "moment-checks") {
    MomentCheckConfig& m = cfg.moment.moments;
    m.problem = raw.problem;
    m.T = raw.T;
    m.dt = parse_dt_token(raw.dt);
    m.samples = raw.samples;
    m.seed = raw.seed;
    m.threads = cfg.threads;
    m.m_values.clear();
    for (const auto& tok : split_csv_list(raw.m_values)) {
      int v = 0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{} || v < 2)
        throw ValidationError("bad --m-values entry '" + tok + "'");
      m.m_values.push_back(v);
    }
    HolderCheckConfig& h = cfg.moment.holder;
    h.problem = raw.problem;
    h.M = raw.M;
    h.T = raw.T;
    h.dt = parse_dt_token(raw.holder_dt);
    h.samples = raw.holder_samples;
    h.seed = raw.seed;
    h.base_time = raw.holder_base_time;
    h.space_time = raw.holder_space_time;
    h.threads = cfg.threads;
    token("m-values", raw.m_values);
    token("dt", raw.dt);
    token("samples", std::to_string(raw.samples));
    token("holder-dt", raw.holder_dt);
    token("holder-samples", std::to_string(raw.holder_samples));
    token("holder-base-time", format_double(raw.holder_base_time));
    token("holder-space-time", format_double(raw.holder_space_time));
  } else if (cfg.subcommand == "single-run") {
    SingleRunConfig& s = cfg.single;
    s.problem = raw.problem;
    s.scheme = scheme_from_label(raw.scheme);
    s.M = raw.M;
    s.T = raw.T;
    s.dt = parse_dt_token(raw.dt);
    s.seed = raw.seed;
    s.sample_index = raw.sample_index;
    s.record = raw.record;
    token("scheme", raw.scheme);
    token("dt", raw.dt);
    token("sample-index", std::to_string(raw.sample_index));
    token("record", raw.record);
  }
  token("threads", std::to_string(cfg.threads));
  token("out", cfg.output_dir);
  return cfg;
}

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json level_outcome(const ErrorReport& report) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& lr : report.levels) {
    levels.push_back({{"dt", lr.dt},
                      {"sup_msq_error", lr.sup_msq_error},
                      {"sup_msq_stderr", lr.sup_msq_stderr},
                      {"samples_used", lr.samples_used},
                      {"aborted_samples", lr.aborted_samples},
                      {"peak_time", lr.peak_time},
                      {"peak_x", lr.peak_x}});
  }
  return levels;
}

}  // namespace detail

/// Executes one parsed configuration, writing CSVs and a manifest under the
/// output directory. Returns the data paths that were written.
inline std::vector<std::filesystem::path> run_subcommand(const RunConfig& cfg,
                                                         std::ostream& log = std::cout) {
  const std::filesystem::path out(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (!std::filesystem::exists(out)) throw IoError("cannot create output directory", out.string());

  std::vector<std::filesystem::path> written;
  nlohmann::json outcome;

  if (cfg.subcommand == "strong-order") {
    const ErrorReport report = strong_error_study(cfg.strong);
    const auto csv = out / "strong_order.csv";
    write_error_report_csv(report, csv);
    written.push_back(csv);
    outcome["fitted_slope"] = report.fitted_slope;
    outcome["slope_stderr"] = report.slope_stderr;
    outcome["fit_levels"] = report.fit_levels;
    outcome["levels"] = detail::level_outcome(report);
    outcome["run_label"] = report.run_label;
    log << "strong-order: fitted mean-square slope " << format_double(report.fitted_slope)
        << " (stderr " << format_double(report.slope_stderr) << ") over "
        << report.fit_levels.size() << " levels\n";
  } else if (cfg.subcommand == "work-precision") {
    const auto rows = work_precision_study(cfg.work.study);
    const auto csv = out / "work_precision.csv";
    write_work_precision_csv(rows, csv);
    written.push_back(csv);
    const SchemeTiming timing = scheme_timing_comparison(
        cfg.work.study.problem, cfg.work.study.M, cfg.work.study.T, cfg.work.timing_dt,
        cfg.work.timing_reps, cfg.work.timing_samples, cfg.work.study.seed);
    outcome["timing"] = {{"dt", timing.dt},
                         {"repetitions", timing.repetitions},
                         {"samples_per_rep", timing.samples_per_rep},
                         {"median_sexp_s", timing.median_sexp_s},
                         {"median_sem_s", timing.median_sem_s},
                         {"median_cnm_s", timing.median_cnm_s}};
    log << "work-precision: timing medians at dt = " << format_double(timing.dt) << " are sexp "
        << format_double(timing.median_sexp_s) << " s, sem " << format_double(timing.median_sem_s)
        << " s, cnm " << format_double(timing.median_cnm_s) << " s\n";
  } else if (cfg.subcommand == "as-convergence") {
    const AsProfiles profiles = as_convergence_profiles(cfg.as_convergence);
    const auto profile_csv = out / "as_profiles.csv";
    const auto distance_csv = out / "as_distances.csv";
    write_as_profiles_csv(profiles, profile_csv);
    write_as_distances_csv(profiles, distance_csv);
    written.push_back(profile_csv);
    written.push_back(distance_csv);
    nlohmann::json distances = nlohmann::json::array();
    for (const auto& level : profiles.levels)
      distances.push_back({{"dt", level.dt}, {"sup_distance", level.sup_distance}});
    outcome["distances"] = distances;
    log << "as-convergence: wrote " << profiles.levels.size() << " level profiles\n";
  } else if (cfg.subcommand == "kernel-checks") {
    std::vector<BoundFit> fits;
    nlohmann::json fits_json = nlohmann::json::array();
    for (KernelBound bound : {KernelBound::kIntegratedIncrement, KernelBound::kSquareIntegral,
                              KernelBound::kIncrement}) {
      fits.push_back(check_bound(bound, cfg.kernel.m_values, cfg.kernel.grid));
      const BoundFit& fit = fits.back();
      fits_json.push_back({{"bound", std::string(kernel_bound_label(bound))},
                           {"fitted_constant", fit.fitted_constant},
                           {"refined_constant", fit.refined_constant},
                           {"passed", fit.passed}});
      log << "kernel-checks: " << kernel_bound_label(bound) << " fitted constant "
          << format_double(fit.fitted_constant) << (fit.passed ? " (stable)" : " (UNSTABLE)")
          << "\n";
    }
    const auto csv = out / "kernel_bounds.csv";
    write_kernel_bounds_csv(fits, csv);
    written.push_back(csv);
    outcome["fits"] = fits_json;
  } else if (cfg.subcommand == "moment-checks") {
    const auto estimates = moment_bound_check(cfg.moment.moments);
    const auto moments_csv = out / "moments.csv";
    write_moments_csv(estimates, moments_csv);
    written.push_back(moments_csv);
    nlohmann::json moments = nlohmann::json::array();
    for (const auto& e : estimates)
      moments.push_back({{"M", e.M},
                         {"sup_second_moment", e.sup_second_moment},
                         {"sup_fourth_moment", e.sup_fourth_moment},
                         {"samples_used", e.samples_used}});
    outcome["moments"] = moments;
    const HolderResult holder = holder_increment_check(cfg.moment.holder);
    const auto holder_csv = out / "holder.csv";
    write_holder_csv(holder, holder_csv);
    written.push_back(holder_csv);
    outcome["holder"] = {{"time_exponent", holder.time_exponent},
                         {"time_stderr", holder.time_stderr},
                         {"space_exponent", holder.space_exponent},
                         {"space_stderr", holder.space_stderr},
                         {"passed", holder.passed}};
    log << "moment-checks: increment exponents time " << format_double(holder.time_exponent)
        << ", space " << format_double(holder.space_exponent) << "\n";
  } else if (cfg.subcommand == "single-run") {
    const SingleRunConfig& s = cfg.single;
    const Problem problem = problem_from_label(s.problem);
    const std::int64_t steps = detail::exact_ratio(s.T, s.dt, "dt vs T");
    const GridSpec grid(s.M, steps, s.T);
    const SpectralBasis basis(s.M);
    std::vector<std::int64_t> record;
    if (s.record == "all") {
      for (std::int64_t n = 0; n <= steps; ++n) record.push_back(n);
    } else if (s.record == "auto") {
      const std::int64_t slices = std::min<std::int64_t>(8, steps);
      for (std::int64_t k = 0; k <= slices; ++k) record.push_back(k * steps / slices);
    } else {
      for (const auto& tok : split_csv_list(s.record)) {
        std::int64_t idx = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
        if (res.ec != std::errc{}) throw ValidationError("bad --record entry '" + tok + "'");
        record.push_back(idx);
      }
    }
    const NoisePlan plan(s.seed, s.M, steps, s.T, s.sample_index);
    CoupledStream stream(plan, steps);
    const IntegrationRun run = integrate(s.scheme, problem, grid, basis, stream, record);
    if (run.aborted)
      throw NumericalAbort("single-run: integration aborted", s.sample_index, run.abort_step);
    const auto csv = out / "trajectory.csv";
    write_trajectory_csv(run, grid, csv);
    written.push_back(csv);
    outcome["snapshots"] = run.snapshots.size();
    log << "single-run: wrote " << run.snapshots.size() << " snapshots\n";
  } else {
    throw ValidationError("unknown subcommand '" + cfg.subcommand + "'");
  }

  const auto manifest = out / "manifest.json";
  write_manifest(cfg.subcommand, cfg.tokens, outcome, manifest);
  written.push_back(manifest);
  return written;
}

/// Full CLI entry: parse, run, map failures to the documented exit codes.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  try {
    RunConfig cfg = parse_config(args);
    run_subcommand(cfg, out);
    return kExitOk;
  } catch (const detail::HelpRequested& help) {
    out << help.text;
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumericalAbort;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace sheq
