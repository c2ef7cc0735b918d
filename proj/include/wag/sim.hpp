#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "wag/db_io.hpp"
#include "wag/embeddings.hpp"
#include "wag/errors.hpp"
#include "wag/filter.hpp"
#include "wag/grid.hpp"
#include "wag/parallel.hpp"
#include "wag/rng.hpp"

namespace wag {

/// Ground-truth positions, one per measurement step.
struct Path {
  std::vector<GeoPoint> waypoints;

  std::size_t steps() const noexcept { return waypoints.size(); }
  double length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) len += distance(waypoints[i - 1], waypoints[i]);
    return len;
  }
};

/// Correlated random walk that turns back one tile short of the grid edges.
/// Each step keeps its full length unless the grid is too small to fit it.
inline Path generate_path(const TileGrid& grid, std::size_t num_steps, double step_length_m,
                          std::uint64_t seed, double turn_sigma_rad = 0.35) {
  if (num_steps < 2) throw InvalidArgument("a path needs at least 2 steps");
  if (!(step_length_m > 0.0)) throw InvalidArgument("step_length_m must be positive");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01;

  const double eps = std::min(grid.tile_size(), 0.25 * std::min(grid.width(), grid.height()));
  const double x_lo = grid.origin().x + eps, x_hi = grid.origin().x + grid.width() - eps;
  const double y_lo = grid.origin().y + eps, y_hi = grid.origin().y + grid.height() - eps;
  const double mx = std::min(step_length_m, 0.25 * grid.width());
  const double my = std::min(step_length_m, 0.25 * grid.height());

  Path path;
  GeoPoint p{x_lo + mx + u01(gen) * (x_hi - x_lo - 2 * mx), y_lo + my + u01(gen) * (y_hi - y_lo - 2 * my)};
  double heading = 2.0 * std::numbers::pi * u01(gen);
  path.waypoints.push_back(p);
  auto inside_x = [&](double x) { return x >= x_lo && x <= x_hi; };
  auto inside_y = [&](double y) { return y >= y_lo && y <= y_hi; };
  for (std::size_t t = 1; t < num_steps; ++t) {
    if (t > 1) heading += turn_sigma_rad * n01(gen);
    GeoPoint next{p.x + step_length_m * std::cos(heading), p.y + step_length_m * std::sin(heading)};
    if (!inside_x(next.x)) heading = std::numbers::pi - heading;
    if (!inside_y(next.y)) heading = -heading;
    next = {p.x + step_length_m * std::cos(heading), p.y + step_length_m * std::sin(heading)};
    next.x = std::clamp(next.x, x_lo, x_hi);
    next.y = std::clamp(next.y, y_lo, y_hi);
    path.waypoints.push_back(next);
    p = next;
  }
  return path;
}

/// True displacements plus per-axis Gaussian noise of scale
/// noise_frac * |displacement|. One vector per consecutive waypoint pair.
inline std::vector<GeoPoint> synth_odometry(const Path& path, double noise_frac, std::uint64_t seed) {
  if (!(noise_frac >= 0.0)) throw InvalidArgument("noise_frac must be >= 0");
  std::vector<GeoPoint> odom;
  for (std::size_t t = 1; t < path.waypoints.size(); ++t) {
    const GeoPoint d = path.waypoints[t] - path.waypoints[t - 1];
    const double sd = noise_frac * norm(d);
    SplitMix64 gen(derive_seed(seed, t));
    std::normal_distribution<double> n01;
    const double nx = n01(gen);
    const double ny = n01(gen);
    odom.push_back({d.x + sd * nx, d.y + sd * ny});
  }
  return odom;
}

// ---------------------------------------------------------------------------
// Scenario configuration

struct CalibrationSpec {
  double target_sigma = 0.1;
  std::size_t samples = 2000;
  std::uint64_t seed = 7;
};

/// Where tile embeddings come from. The oracle always produces the ground
/// embeddings; for file-backed databases it draws them around the imported
/// tile vectors.
struct EmbeddingSource {
  enum class Kind { Synthetic, File };
  Kind kind = Kind::Synthetic;
  std::size_t dim = 64;
  std::string path;  // Kind::File
  OracleParams oracle;
  std::optional<CalibrationSpec> calibration;
};

struct FilterConfig {
  std::size_t particles = 100000;
  MeasurementModel model = GaussianModel{0.1};
  ResamplePolicy resample;
};

struct InitConfig {
  enum class Mode { Gaussian, Exact };
  Mode mode = Mode::Gaussian;
  double offset_m = 1300.0;  // Gaussian: distance of the initial mean from truth
  double sigma_m = 2970.0;
  double jitter_m = 0.0;  // Exact
};

struct PathSpec {
  std::size_t num_steps = 40;
  double step_length_m = 250.0;
  double turn_sigma_rad = 0.35;
  std::vector<GeoPoint> waypoints;  // when non-empty, replayed instead of generated
};

struct ScenarioConfig {
  std::string name = "scenario";
  TileGrid grid{{0, 0}, 64.0, 64, 64};
  EmbeddingSource embeddings;
  FilterConfig filter;
  InitConfig init;
  double odometry_noise_frac = 0.02;
  PathSpec path;
  std::optional<double> threshold_m;  // defaults to the tile size
  bool sustained_convergence = false;
  std::uint64_t seed = 1;

  double convergence_threshold() const { return threshold_m.value_or(grid.tile_size()); }

  void validate() const {
    if (embeddings.dim < 2) throw ConfigError("embedding dim must be >= 2");
    if (embeddings.kind == EmbeddingSource::Kind::File && embeddings.path.empty())
      throw ConfigError("file embedding source needs a path");
    try {
      embeddings.oracle.validate();
      validate_model(filter.model);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    if (filter.particles == 0) throw ConfigError("filter.particles must be >= 1");
    if (init.mode == InitConfig::Mode::Gaussian && !(init.sigma_m > 0.0))
      throw ConfigError("init.sigma_m must be positive");
    if (!(init.offset_m >= 0.0) || !(init.jitter_m >= 0.0)) throw ConfigError("init offsets must be >= 0");
    if (!(odometry_noise_frac >= 0.0)) throw ConfigError("odometry noise_frac must be >= 0");
    if (path.waypoints.empty()) {
      if (path.num_steps < 2) throw ConfigError("path.num_steps must be >= 2");
      if (!(path.step_length_m > 0.0)) throw ConfigError("path.step_length_m must be positive");
    } else {
      if (path.waypoints.size() < 2) throw ConfigError("a path needs at least 2 waypoints");
      for (const auto& p : path.waypoints)
        if (!grid.contains(p))
          throw ConfigError("waypoint (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                            ") lies outside the grid");
    }
    if (threshold_m && !(*threshold_m > 0.0)) throw ConfigError("threshold_m must be positive");
  }

 private:
  static void validate_model(const MeasurementModel& m) { wag::validate(m); }
};

/// Independent named sub-streams of the master seed.
struct SeedStreams {
  std::uint64_t path, odometry, oracle, filter;

  static SeedStreams from(std::uint64_t master) {
    return {derive_seed(master, "path"), derive_seed(master, "odometry"), derive_seed(master, "oracle"),
            derive_seed(master, "filter")};
  }
};

// ---------------------------------------------------------------------------
// Traces and summaries

struct TraceEntry {
  std::size_t step = 0;  // 1-based measurement-update index
  GeoPoint truth;
  GeoPoint estimate;
  double error_m = 0.0;
  double dispersion_rms_m = 0.0;
  double max_similarity = 0.0;
  TileIndex argmax;
  double ms = 0.0;  // wall clock, not part of deterministic output
};

using RunTrace = std::vector<TraceEntry>;

struct RunSummary {
  double average_error_m = 0.0;
  double final_error_m = 0.0;
  std::optional<std::size_t> convergence_step;
  double threshold_m = 0.0;
  bool sustained = false;
  std::size_t steps = 0;
};

inline RunSummary summarize(const RunTrace& trace, double threshold_m, bool sustained = false) {
  if (trace.empty()) throw InvalidArgument("cannot summarize an empty trace");
  RunSummary s;
  s.threshold_m = threshold_m;
  s.sustained = sustained;
  s.steps = trace.size();
  double total = 0.0;
  for (const auto& e : trace) total += e.error_m;
  s.average_error_m = total / static_cast<double>(trace.size());
  s.final_error_m = trace.back().error_m;
  if (!sustained) {
    for (const auto& e : trace)
      if (e.dispersion_rms_m < threshold_m) {
        s.convergence_step = e.step;
        break;
      }
  } else {
    // First step from which the dispersion stays below threshold.
    for (std::size_t i = trace.size(); i-- > 0;) {
      if (!(trace[i].dispersion_rms_m < threshold_m)) break;
      s.convergence_step = trace[i].step;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Running

/// Everything a run needs that does not depend on the master seed.
struct Environment {
  EmbeddingDB db;
  OracleParams oracle;
};

/// Builds or loads the tile database and calibrates the oracle if requested.
inline Environment prepare_environment(const ScenarioConfig& cfg, Parallelism par = {}) {
  Environment env;
  if (cfg.embeddings.kind == EmbeddingSource::Kind::File) {
    env.db = load_db(cfg.embeddings.path);
    if (!(env.db.grid() == cfg.grid))
      throw ConfigError("embedding database grid does not match the scenario grid");
  } else {
    env.db = synth_tile_db(cfg.grid, cfg.embeddings.dim, cfg.embeddings.oracle.clutter_seed);
  }
  env.oracle = cfg.embeddings.oracle;
  if (cfg.embeddings.calibration) {
    const auto& c = *cfg.embeddings.calibration;
    env.oracle = calibrate(env.db, env.oracle, c.target_sigma, c.samples, c.seed, par);
  }
  return env;
}

/// Thrown when the filter degenerates mid-run; carries the steps completed.
class ScenarioDiverged : public Degenerate {
 public:
  ScenarioDiverged(const std::string& what, RunTrace partial)
      : Degenerate(what), partial_(std::move(partial)) {}
  const RunTrace& partial_trace() const noexcept { return partial_; }

 private:
  RunTrace partial_;
};

struct ScenarioResult {
  RunTrace trace;
  RunSummary summary;
  Path path;
};

inline Path scenario_path(const ScenarioConfig& cfg, const SeedStreams& seeds) {
  if (!cfg.path.waypoints.empty()) return Path{cfg.path.waypoints};
  return generate_path(cfg.grid, cfg.path.num_steps, cfg.path.step_length_m, seeds.path, cfg.path.turn_sigma_rad);
}

inline ParticleFilter initial_filter(const ScenarioConfig& cfg, const GeoPoint& start, const SeedStreams& seeds,
                                     Parallelism par) {
  if (cfg.init.mode == InitConfig::Mode::Exact)
    return ParticleFilter::init_exact(cfg.grid, cfg.filter.particles, start, cfg.init.jitter_m, seeds.filter,
                                      cfg.filter.model, cfg.filter.resample, par);
  std::mt19937_64 gen(derive_seed(seeds.filter, "init-offset"));
  const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(gen);
  const GeoPoint mean{start.x + cfg.init.offset_m * std::cos(angle), start.y + cfg.init.offset_m * std::sin(angle)};
  return ParticleFilter::init_gaussian(cfg.grid, cfg.filter.particles, mean, cfg.init.sigma_m, seeds.filter,
                                       cfg.filter.model, cfg.filter.resample, par);
}

/// predict -> oracle ground embedding -> similarity row -> update, once per
/// waypoint. The first waypoint is measured without a motion step.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, const Environment& env, Parallelism par = {}) {
  cfg.validate();
  if (!(env.db.grid() == cfg.grid)) throw ConfigError("environment grid does not match the scenario grid");
  const SeedStreams seeds = SeedStreams::from(cfg.seed);
  ScenarioResult result;
  result.path = scenario_path(cfg, seeds);
  const auto odom = synth_odometry(result.path, cfg.odometry_noise_frac, seeds.odometry);
  ParticleFilter pf = initial_filter(cfg, result.path.waypoints.front(), seeds, par);

  for (std::size_t t = 0; t < result.path.steps(); ++t) {
    const auto started = std::chrono::steady_clock::now();
    const GeoPoint truth = result.path.waypoints[t];
    if (t > 0) pf.predict(odom[t - 1], cfg.odometry_noise_frac);
    const Embedding g = synth_ground_embedding(env.db, truth, env.oracle, seeds.oracle, t);
    const SimilarityRow row = similarity_row(env.db, g, par);
    try {
      pf.update(measurement_for(cfg.filter.model, row));
    } catch (const Degenerate& e) {
      throw ScenarioDiverged(std::string(e.what()) + " at step " + std::to_string(t + 1), result.trace);
    }
    TraceEntry entry;
    entry.step = t + 1;
    entry.truth = truth;
    entry.estimate = pf.estimate();
    entry.error_m = distance(entry.estimate, truth);
    entry.dispersion_rms_m = pf.dispersion();
    entry.max_similarity = row.max_value;
    entry.argmax = env.db.grid().from_linear(row.argmax);
    entry.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.trace.push_back(entry);
  }
  result.summary = summarize(result.trace, cfg.convergence_threshold(), cfg.sustained_convergence);
  return result;
}

// ---------------------------------------------------------------------------
// Comparisons

/// Median; +inf entries (never converged) sort last. Empty input gives NaN.
inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::max(a, b);
  return 0.5 * (a + b);
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<RunSummary> summary;  // empty when the run diverged
  std::string failure;
};

struct ConfigComparison {
  std::string name;
  std::vector<SeedOutcome> runs;
  double median_average_error_m = 0.0;
  double median_final_error_m = 0.0;
  double median_convergence_step = 0.0;  // +inf when the median run never converged
};

struct ComparisonReport {
  std::vector<ConfigComparison> configs;
  std::vector<std::uint64_t> seeds;
  bool sustained = false;
};

/// Runs every config over every seed. Runs are independent and may execute
/// in parallel; each uses a single thread internally. Diverged runs count as
/// never converged with infinite error.
template <typename EnvFor>
ComparisonReport compare_runs(const std::vector<ScenarioConfig>& cfgs, const std::vector<std::uint64_t>& seeds,
                              EnvFor&& env_for, Parallelism par = {}) {
  if (cfgs.empty()) throw InvalidArgument("compare_runs needs at least one config");
  if (seeds.empty()) throw InvalidArgument("compare_runs needs at least one seed");
  std::vector<const Environment*> envs;
  for (const auto& c : cfgs) envs.push_back(&env_for(c));

  ComparisonReport report;
  report.seeds = seeds;
  report.sustained = cfgs.front().sustained_convergence;
  const std::size_t total = cfgs.size() * seeds.size();
  std::vector<SeedOutcome> outcomes(total);
  parallel_for(
      total, par,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
          ScenarioConfig c = cfgs[r / seeds.size()];
          c.seed = seeds[r % seeds.size()];
          SeedOutcome& out = outcomes[r];
          out.seed = c.seed;
          try {
            out.summary = run_scenario(c, *envs[r / seeds.size()], Parallelism{1}).summary;
          } catch (const Degenerate& e) {
            out.failure = e.what();
          }
        }
      },
      /*grain=*/1);

  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    ConfigComparison cc;
    cc.name = cfgs[i].name;
    std::vector<double> avg, fin, conv;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const SeedOutcome& o = outcomes[i * seeds.size() + s];
      cc.runs.push_back(o);
      const double inf = std::numeric_limits<double>::infinity();
      avg.push_back(o.summary ? o.summary->average_error_m : inf);
      fin.push_back(o.summary ? o.summary->final_error_m : inf);
      conv.push_back(o.summary && o.summary->convergence_step ? static_cast<double>(*o.summary->convergence_step)
                                                              : inf);
    }
    cc.median_average_error_m = median(avg);
    cc.median_final_error_m = median(fin);
    cc.median_convergence_step = median(conv);
    report.configs.push_back(std::move(cc));
  }
  return report;
}

/// compare_runs with environments built once per distinct embedding setup.
inline ComparisonReport compare_runs(const std::vector<ScenarioConfig>& cfgs, const std::vector<std::uint64_t>& seeds,
                                     Parallelism par = {}) {
  std::vector<std::pair<const ScenarioConfig*, Environment>> cache;
  auto same_setup = [](const ScenarioConfig& a, const ScenarioConfig& b) {
    const auto& x = a.embeddings;
    const auto& y = b.embeddings;
    const bool same_cal = x.calibration.has_value() == y.calibration.has_value() &&
                          (!x.calibration || (x.calibration->target_sigma == y.calibration->target_sigma &&
                                              x.calibration->samples == y.calibration->samples &&
                                              x.calibration->seed == y.calibration->seed));
    return a.grid == b.grid && x.kind == y.kind && x.dim == y.dim && x.path == y.path && x.oracle == y.oracle &&
           same_cal;
  };
  cache.reserve(cfgs.size());
  for (const auto& c : cfgs) {
    bool found = false;
    for (const auto& [k, env] : cache) found = found || same_setup(*k, c);
    if (!found) cache.emplace_back(&c, prepare_environment(c, par));
  }
  return compare_runs(
      cfgs, seeds,
      [&](const ScenarioConfig& c) -> const Environment& {
        for (const auto& [k, env] : cache)
          if (same_setup(*k, c)) return env;
        throw std::logic_error("environment missing from cache");
      },
      par);
}

}  // namespace wag
