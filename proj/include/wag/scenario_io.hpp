#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wag/bench.hpp"
#include "wag/db_io.hpp"
#include "wag/geo.hpp"
#include "wag/io.hpp"
#include "wag/loss.hpp"
#include "wag/sim.hpp"
#include "wag/toy_trainer.hpp"

namespace wag {

inline constexpr int kScenarioFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

using nlohmann::json;

/// Training section of a config file.
struct TrainingConfig {
  ToyDatasetSpec dataset;
  TrainOptions options;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  enum class Which { Both, Binomial, Trinomial } which = Which::Both;
};

/// Everything a config file can hold. `scenario` is always populated; the
/// other sections fall back to defaults when absent.
struct ConfigFile {
  ScenarioConfig scenario;
  LossParams loss;
  TrainingConfig training;
  std::optional<LatLon> origin_latlon;
  std::filesystem::path base_dir;
  json source;  // as read, for hashing and echoing
};

// ---------------------------------------------------------------------------
// Waypoint files

/// CSV with a header of either `x,y` (local meters) or `lat,lon`.
inline std::vector<GeoPoint> parse_waypoints_csv(const std::string& text, const std::optional<LocalProjection>& proj) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("waypoint file is empty");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  bool latlon = false;
  if (header == "lat,lon")
    latlon = true;
  else if (header != "x,y")
    throw ConfigError("waypoint header must be 'x,y' or 'lat,lon', got '" + header + "'");
  if (latlon && !proj) throw ConfigError("lat,lon waypoints need grid.origin_latlon in the config");
  std::vector<GeoPoint> out;
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("waypoint line " + std::to_string(line_no) + " lacks a comma");
    double a = 0, b = 0;
    try {
      a = std::stod(line.substr(0, comma));
      b = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ConfigError("waypoint line " + std::to_string(line_no) + " is not numeric");
    }
    out.push_back(latlon ? proj->to_local({a, b}) : GeoPoint{a, b});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON <-> config

inline json to_json(const MeasurementModel& m) {
  if (const auto* e = std::get_if<ExponentialModel>(&m)) return {{"type", "exponential"}, {"beta", e->beta}};
  return {{"type", "gaussian"}, {"sigma", std::get<GaussianModel>(m).sigma}};
}

inline json to_json(const OracleParams& o) {
  return {{"sigma_pos", o.sigma_pos},
          {"sigma_semi", o.sigma_semi},
          {"base_overlap", o.base_overlap},
          {"noise_scale", o.noise_scale},
          {"clutter_seed", o.clutter_seed}};
}

inline json to_json(const LossParams& p) {
  return {{"alpha_p", p.alpha_p}, {"alpha_s", p.alpha_s}, {"alpha_n", p.alpha_n},
          {"m_p", p.m_p},         {"m_s", p.m_s},         {"m_n", p.m_n}};
}

/// Canonical form of a scenario: every field, defaults filled in.
inline json to_json(const ScenarioConfig& c) {
  json emb = {{"source", c.embeddings.kind == EmbeddingSource::Kind::File ? "file" : "synthetic"},
              {"dim", c.embeddings.dim},
              {"oracle", to_json(c.embeddings.oracle)}};
  if (c.embeddings.kind == EmbeddingSource::Kind::File) emb["path"] = c.embeddings.path;
  if (c.embeddings.calibration)
    emb["calibration"] = {{"target_sigma", c.embeddings.calibration->target_sigma},
                          {"samples", c.embeddings.calibration->samples},
                          {"seed", c.embeddings.calibration->seed}};
  else
    emb["calibration"] = nullptr;

  json resample = c.filter.resample.kind == ResamplePolicy::Kind::EveryUpdate
                      ? json{{"policy", "every_update"}}
                      : json{{"policy", "ess_below"}, {"fraction", c.filter.resample.fraction}};
  json init = c.init.mode == InitConfig::Mode::Exact
                  ? json{{"mode", "exact"}, {"jitter_m", c.init.jitter_m}}
                  : json{{"mode", "gaussian"}, {"offset_m", c.init.offset_m}, {"sigma_m", c.init.sigma_m}};
  json path;
  if (!c.path.waypoints.empty()) {
    path["waypoints"] = json::array();
    for (const auto& p : c.path.waypoints) path["waypoints"].push_back({p.x, p.y});
  } else {
    path = {{"num_steps", c.path.num_steps},
            {"step_length_m", c.path.step_length_m},
            {"turn_sigma_rad", c.path.turn_sigma_rad}};
  }
  return {{"format_version", kScenarioFormatVersion},
          {"name", c.name},
          {"seed", c.seed},
          {"grid", grid_to_json(c.grid)},
          {"embeddings", emb},
          {"filter", {{"particles", c.filter.particles}, {"model", to_json(c.filter.model)}, {"resample", resample}}},
          {"init", init},
          {"odometry", {{"noise_frac", c.odometry_noise_frac}}},
          {"path", path},
          {"convergence",
           {{"threshold_m", c.convergence_threshold()}, {"sustained", c.sustained_convergence}}}};
}

inline std::string config_hash(const ScenarioConfig& c) { return "crc32:" + hex32(crc32_of(to_json(c).dump())); }

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

inline MeasurementModel model_from_json(const json& j) {
  const auto type = get_or<std::string>(j, "type", "gaussian");
  if (type == "gaussian") return GaussianModel{get_or(j, "sigma", 0.1)};
  if (type == "exponential") return ExponentialModel{get_or(j, "beta", 5.0)};
  throw ConfigError("unknown measurement model '" + type + "'");
}

inline OracleParams oracle_from_json(const json& j) {
  OracleParams o;
  o.sigma_pos = get_or(j, "sigma_pos", o.sigma_pos);
  o.sigma_semi = get_or(j, "sigma_semi", o.sigma_semi);
  o.base_overlap = get_or(j, "base_overlap", o.base_overlap);
  o.noise_scale = get_or(j, "noise_scale", o.noise_scale);
  o.clutter_seed = get_or(j, "clutter_seed", o.clutter_seed);
  return o;
}

}  // namespace detail

inline LossParams loss_from_json(const json& j) {
  LossParams p;
  p.alpha_p = detail::get_or(j, "alpha_p", p.alpha_p);
  p.alpha_s = detail::get_or(j, "alpha_s", p.alpha_s);
  p.alpha_n = detail::get_or(j, "alpha_n", p.alpha_n);
  p.m_p = detail::get_or(j, "m_p", p.m_p);
  p.m_s = detail::get_or(j, "m_s", p.m_s);
  p.m_n = detail::get_or(j, "m_n", p.m_n);
  return p;
}

/// Parses a config document. Relative paths resolve against base_dir.
inline ConfigFile parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_or;
  ConfigFile cf;
  cf.source = j;
  cf.base_dir = base_dir;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const int version = get_or(j, "format_version", kScenarioFormatVersion);
    if (version != kScenarioFormatVersion)
      throw ConfigError("unsupported config format_version " + std::to_string(version));
    ScenarioConfig& c = cf.scenario;
    c.name = get_or<std::string>(j, "name", c.name);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);

    if (j.contains("grid")) {
      const json& g = j.at("grid");
      GeoPoint origin{};
      if (g.contains("origin")) origin = {get_or(g.at("origin"), "x", 0.0), get_or(g.at("origin"), "y", 0.0)};
      if (g.contains("origin_latlon"))
        cf.origin_latlon = LatLon{g.at("origin_latlon").at("lat").get<double>(),
                                  g.at("origin_latlon").at("lon").get<double>()};
      c.grid = TileGrid(origin, get_or(g, "tile_size_m", 64.0), get_or<std::size_t>(g, "rows", 64),
                        get_or<std::size_t>(g, "cols", 64));
    }

    if (j.contains("embeddings")) {
      const json& e = j.at("embeddings");
      const auto source = get_or<std::string>(e, "source", "synthetic");
      if (source == "file") {
        c.embeddings.kind = EmbeddingSource::Kind::File;
        std::filesystem::path p = e.at("path").get<std::string>();
        c.embeddings.path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
      } else if (source != "synthetic") {
        throw ConfigError("unknown embeddings.source '" + source + "'");
      }
      c.embeddings.dim = get_or<std::size_t>(e, "dim", c.embeddings.dim);
      if (e.contains("oracle")) c.embeddings.oracle = detail::oracle_from_json(e.at("oracle"));
      if (e.contains("calibration") && !e.at("calibration").is_null()) {
        const json& k = e.at("calibration");
        CalibrationSpec spec;
        spec.target_sigma = get_or(k, "target_sigma", spec.target_sigma);
        spec.samples = get_or<std::size_t>(k, "samples", spec.samples);
        spec.seed = get_or<std::uint64_t>(k, "seed", spec.seed);
        c.embeddings.calibration = spec;
      }
    }

    if (j.contains("filter")) {
      const json& f = j.at("filter");
      c.filter.particles = get_or<std::size_t>(f, "particles", c.filter.particles);
      if (f.contains("model")) c.filter.model = detail::model_from_json(f.at("model"));
      if (f.contains("resample")) {
        const auto policy = get_or<std::string>(f.at("resample"), "policy", "every_update");
        if (policy == "every_update")
          c.filter.resample = ResamplePolicy::every_update();
        else if (policy == "ess_below")
          c.filter.resample = ResamplePolicy::ess_below(get_or(f.at("resample"), "fraction", 0.5));
        else
          throw ConfigError("unknown resample policy '" + policy + "'");
      }
    }

    if (j.contains("init")) {
      const json& i = j.at("init");
      const auto mode = get_or<std::string>(i, "mode", "gaussian");
      if (mode == "gaussian") {
        c.init.mode = InitConfig::Mode::Gaussian;
        c.init.offset_m = get_or(i, "offset_m", c.init.offset_m);
        c.init.sigma_m = get_or(i, "sigma_m", c.init.sigma_m);
      } else if (mode == "exact") {
        c.init.mode = InitConfig::Mode::Exact;
        c.init.jitter_m = get_or(i, "jitter_m", 0.0);
      } else {
        throw ConfigError("unknown init.mode '" + mode + "'");
      }
    }

    if (j.contains("odometry")) c.odometry_noise_frac = get_or(j.at("odometry"), "noise_frac", c.odometry_noise_frac);

    if (j.contains("path")) {
      const json& p = j.at("path");
      std::optional<LocalProjection> proj;
      if (cf.origin_latlon) proj = LocalProjection::for_grid(*cf.origin_latlon, c.grid.height());
      if (p.contains("waypoints")) {
        for (const auto& w : p.at("waypoints")) c.path.waypoints.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
      } else if (p.contains("file")) {
        std::filesystem::path f = p.at("file").get<std::string>();
        if (f.is_relative() && !base_dir.empty()) f = base_dir / f;
        c.path.waypoints = parse_waypoints_csv(read_file(f), proj);
      } else {
        c.path.num_steps = get_or<std::size_t>(p, "num_steps", c.path.num_steps);
        c.path.step_length_m = get_or(p, "step_length_m", c.path.step_length_m);
        c.path.turn_sigma_rad = get_or(p, "turn_sigma_rad", c.path.turn_sigma_rad);
      }
    }

    if (j.contains("convergence")) {
      const json& k = j.at("convergence");
      if (k.contains("threshold_m") && !k.at("threshold_m").is_null()) c.threshold_m = k.at("threshold_m").get<double>();
      c.sustained_convergence = get_or(k, "sustained", false);
    }

    if (j.contains("loss")) cf.loss = loss_from_json(j.at("loss"));

    if (j.contains("training")) {
      const json& t = j.at("training");
      TrainingConfig& tc = cf.training;
      tc.dataset.tiles = get_or<std::size_t>(t, "tiles", tc.dataset.tiles);
      tc.dataset.latent_dim = get_or<std::size_t>(t, "latent_dim", tc.dataset.latent_dim);
      tc.dataset.feature_dim = get_or<std::size_t>(t, "feature_dim", tc.dataset.feature_dim);
      tc.dataset.feature_noise = get_or(t, "feature_noise", tc.dataset.feature_noise);
      tc.dataset.semi_center_share = get_or(t, "semi_center_share", tc.dataset.semi_center_share);
      tc.options.epochs = get_or(t, "epochs", tc.options.epochs);
      tc.options.warmup_epochs = get_or(t, "warmup_epochs", tc.options.warmup_epochs);
      tc.options.lr = get_or(t, "lr", tc.options.lr);
      tc.options.embedding_dim = get_or<std::size_t>(t, "embedding_dim", tc.options.embedding_dim);
      tc.options.negatives = get_or<std::size_t>(t, "negatives", tc.options.negatives);
      if (t.contains("seeds")) tc.seeds = t.at("seeds").get<std::vector<std::uint64_t>>();
      const auto which = get_or<std::string>(t, "loss", "both");
      if (which == "both")
        tc.which = TrainingConfig::Which::Both;
      else if (which == "binomial")
        tc.which = TrainingConfig::Which::Binomial;
      else if (which == "trinomial")
        tc.which = TrainingConfig::Which::Trinomial;
      else
        throw ConfigError("unknown training.loss '" + which + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cf;
}

inline ConfigFile load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Trace CSV

inline constexpr const char* kTraceHeader =
    "step,true_x,true_y,est_x,est_y,error_m,dispersion_rms_m,max_sim,argmax_row,argmax_col,ms";

/// Doubles are printed round-trip exact. Wall-clock ms is written only when
/// include_timing is set, so traces are byte-identical across runs.
inline std::string trace_to_csv(const RunTrace& trace, bool include_timing = false) {
  std::string out = std::string(kTraceHeader) + "\n";
  char buf[512];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.9g,%zu,%zu,%.17g\n", e.step,
                  e.truth.x, e.truth.y, e.estimate.x, e.estimate.y, e.error_m, e.dispersion_rms_m, e.max_similarity,
                  e.argmax.row, e.argmax.col, include_timing ? e.ms : 0.0);
    out += buf;
  }
  return out;
}

inline RunTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("trace is empty");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != kTraceHeader) throw FormatError("unexpected trace header: " + header);
  RunTrace trace;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != 11) throw FormatError("trace row has " + std::to_string(cells.size()) + " columns");
    try {
      TraceEntry e;
      e.step = std::stoul(cells[0]);
      e.truth = {std::stod(cells[1]), std::stod(cells[2])};
      e.estimate = {std::stod(cells[3]), std::stod(cells[4])};
      e.error_m = std::stod(cells[5]);
      e.dispersion_rms_m = std::stod(cells[6]);
      e.max_similarity = std::stod(cells[7]);
      e.argmax = {std::stoul(cells[8]), std::stoul(cells[9])};
      e.ms = std::stod(cells[10]);
      trace.push_back(e);
    } catch (const std::exception&) {
      throw FormatError("trace row is not numeric: " + line);
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Reports

inline json optional_step(const std::optional<std::size_t>& s) { return s ? json(*s) : json(nullptr); }

inline json summary_to_json(const RunSummary& s) {
  return {{"average_error_m", s.average_error_m},
          {"final_error_m", s.final_error_m},
          {"convergence_step", optional_step(s.convergence_step)},
          {"convergence_mode", s.sustained ? "sustained" : "first_crossing"},
          {"threshold_m", s.threshold_m},
          {"steps", s.steps}};
}

inline json run_summary_report(const ScenarioConfig& cfg, const RunSummary& s) {
  json j = summary_to_json(s);
  j["format_version"] = kReportFormatVersion;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  j["tool_version"] = kToolVersion;
  return j;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json comparison_to_json(const ComparisonReport& r, const std::vector<ScenarioConfig>& cfgs) {
  json configs = json::array();
  for (std::size_t i = 0; i < r.configs.size(); ++i) {
    const auto& c = r.configs[i];
    json runs = json::array();
    for (const auto& o : c.runs) {
      json run = {{"seed", o.seed}, {"diverged", !o.summary.has_value()}};
      if (o.summary) {
        run["average_error_m"] = o.summary->average_error_m;
        run["final_error_m"] = o.summary->final_error_m;
        run["convergence_step"] = optional_step(o.summary->convergence_step);
      } else {
        run["failure"] = o.failure;
      }
      runs.push_back(run);
    }
    configs.push_back({{"name", c.name},
                       {"config_hash", config_hash(cfgs[i])},
                       {"model", to_json(cfgs[i].filter.model)},
                       {"median_average_error_m", finite_or_null(c.median_average_error_m)},
                       {"median_final_error_m", finite_or_null(c.median_final_error_m)},
                       {"median_convergence_step", finite_or_null(c.median_convergence_step)},
                       {"runs", runs}});
  }
  return {{"format_version", kReportFormatVersion},
          {"tool_version", kToolVersion},
          {"seeds", r.seeds},
          {"convergence_mode", r.sustained ? "sustained" : "first_crossing"},
          {"configs", configs}};
}

inline json train_report_to_json(const TrainReport& r) {
  return {{"loss", to_string(r.loss)},
          {"seed", r.seed},
          {"loss_curve", r.loss_curve},
          {"recall_pos@1", r.final.recall_pos_at_1},
          {"recall_semi@1", r.final.recall_semi_at_1},
          {"initial_recall_pos@1", r.initial.recall_pos_at_1},
          {"initial_recall_semi@1", r.initial.recall_semi_at_1}};
}

inline json kernel_measurement_to_json(const KernelMeasurement& m) {
  json cfg = {{"dim", m.dim}, {"num_images", m.num_images}, {"repetitions", m.repetitions},
              {"threads", m.threads}, {"seed", m.seed}};
  return {{"config", cfg},
          {"config_hash", "crc32:" + hex32(crc32_of(cfg.dump()))},
          {"seconds", m.seconds},
          {"median_seconds", m.median_seconds},
          {"median_per_similarity_s", m.median_per_similarity_s},
          {"mad_fraction", m.mad_fraction},
          {"similarities_per_second", m.similarities_per_second},
          {"hardware", m.hardware}};
}

}  // namespace wag
