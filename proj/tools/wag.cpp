// wag: build databases, run scenarios, compare measurement models, train the
// toy embedding, and emit benchmark and plot data.
//
// Exit codes: 0 success, 1 config/validation error, 2 filter degenerate,
// 3 I/O error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wag/wag.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 1, kDegenerate = 2, kIo = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned threads = 0;
  bool verbose = false;

  void attach(CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config, "Scenario config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--seed", seed, "Master seed, overrides the config");
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--threads", threads, "Worker threads (default: WAG_THREADS or 1)");
    sub->add_flag("--verbose,-v", verbose, "Progress on stderr");
  }

  wag::Parallelism parallelism() const {
    return threads > 0 ? wag::Parallelism{threads} : wag::Parallelism::from_env();
  }

  wag::ConfigFile load() const {
    wag::ConfigFile cf = config.empty() ? wag::parse_config(json::object()) : wag::load_config(config);
    if (seed) cf.scenario.seed = *seed;
    return cf;
  }
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_json(const fs::path& p, const json& j) { wag::write_file_atomic(p, j.dump(2) + "\n"); }

// Timestamps and wall-clock figures live only here.
void write_meta(const fs::path& dir, const std::string& command, const std::string& hash, json extra = json::object()) {
  extra["command"] = command;
  extra["config_hash"] = hash;
  extra["tool_version"] = wag::kToolVersion;
  extra["created_utc"] = utc_now();
  write_json(dir / "meta.json", extra);
}

template <typename F>
int guarded(bool verbose, F&& body) {
  try {
    body();
    return kOk;
  } catch (const wag::IoError& e) {
    std::cerr << "wag: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const wag::Degenerate& e) {
    std::cerr << "wag: filter degenerate: " << e.what() << "\n";
    return kDegenerate;
  } catch (const wag::Divergence& e) {
    std::cerr << "wag: training diverged at epoch " << e.epoch() << ": " << e.what() << "\n";
    return kDegenerate;
  } catch (const wag::Error& e) {
    std::cerr << "wag: " << e.what() << "\n";
    return kConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "wag: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    if (verbose) std::cerr << "wag: unexpected error: " << e.what() << "\n";
    else std::cerr << "wag: " << e.what() << "\n";
    return kConfig;
  }
}

// ---------------------------------------------------------------------------

wag::EmbeddingDB import_db(const fs::path& src, const wag::TileGrid& grid, std::size_t dim) {
  wag::Provenance prov{wag::Provenance::Kind::Imported, 0, src.filename().string()};
  if (src.extension() == ".f32") {
    const std::string bytes = wag::read_file(src);
    const std::size_t expected = grid.tile_count() * dim * 4;
    if (bytes.size() != expected)
      throw wag::ConfigError("import " + src.string() + " holds " + std::to_string(bytes.size()) +
                             " bytes, the config grid needs " + std::to_string(expected));
    auto values = wag::detail::decode_f32_le(bytes);
    for (std::size_t k = 0; k < grid.tile_count(); ++k) {
      std::span<float> row(values.data() + k * dim, dim);
      const auto unit = wag::normalize(std::span<const float>(row));
      std::copy(unit.values().begin(), unit.values().end(), row.begin());
    }
    return wag::EmbeddingDB(grid, dim, std::move(values), prov);
  }
  const wag::EmbeddingDB in = wag::load_db(src, true);
  if (!(in.grid() == grid))
    throw wag::ConfigError("imported database grid " + wag::grid_to_json(in.grid()).dump() +
                           " does not match the config grid " + wag::grid_to_json(grid).dump());
  if (in.dim() != dim)
    throw wag::ConfigError("imported database has dim " + std::to_string(in.dim()) + ", config says " +
                           std::to_string(dim));
  const auto d = in.data();
  return wag::EmbeddingDB(grid, dim, {d.begin(), d.end()}, prov);
}

void cmd_build_db(const Common& c, const std::string& import_path, const std::string& db_path) {
  const wag::ConfigFile cf = c.load();
  const auto& s = cf.scenario;
  s.validate();
  fs::path target = db_path.empty() ? fs::path(c.out) / "db.json" : fs::path(db_path);
  wag::EmbeddingDB db = import_path.empty()
                            ? wag::synth_tile_db(s.grid, s.embeddings.dim, s.embeddings.oracle.clutter_seed)
                            : import_db(import_path, s.grid, s.embeddings.dim);
  wag::save_db(db, target);
  const auto payload = fs::file_size(wag::detail::payload_path_for(target));
  std::cout << "tiles " << db.size() << "\n"
            << "dim " << db.dim() << "\n"
            << "payload_bytes " << payload << "\n"
            << "manifest_bytes " << fs::file_size(target) << "\n"
            << "checksum " << wag::db_checksum(db) << "\n"
            << "path " << target.string() << "\n";
}

void cmd_calibrate(const Common& c) {
  wag::ConfigFile cf = c.load();
  auto& s = cf.scenario;
  s.validate();
  const wag::CalibrationSpec spec = s.embeddings.calibration.value_or(wag::CalibrationSpec{});
  wag::ScenarioConfig raw = s;
  raw.embeddings.calibration.reset();
  const auto par = c.parallelism();
  const wag::Environment env = wag::prepare_environment(raw, par);
  const auto tuned = wag::calibrate(env.db, env.oracle, spec.target_sigma, spec.samples, spec.seed, par);
  const double spread = wag::sample_gap_spread(env.db, tuned, spec.samples, spec.seed, par);
  json j = {{"format_version", wag::kReportFormatVersion},
            {"tool_version", wag::kToolVersion},
            {"config_hash", wag::config_hash(s)},
            {"target_sigma", spec.target_sigma},
            {"samples", spec.samples},
            {"seed", spec.seed},
            {"measured_sigma", spread},
            {"oracle", wag::to_json(tuned)}};
  write_json(fs::path(c.out) / "calibration.json", j);
  std::cout << "base_overlap " << tuned.base_overlap << "\nmeasured_sigma " << spread << "\n";
}

void cmd_run(const Common& c, bool timing) {
  const wag::ConfigFile cf = c.load();
  const auto& s = cf.scenario;
  s.validate();
  const auto par = c.parallelism();
  const fs::path dir(c.out);
  const std::string hash = wag::config_hash(s);
  const auto t0 = std::chrono::steady_clock::now();
  const wag::Environment env = wag::prepare_environment(s, par);
  if (c.verbose) std::cerr << "environment ready, oracle base_overlap " << env.oracle.base_overlap << "\n";
  wag::ScenarioResult res;
  try {
    res = wag::run_scenario(s, env, par);
  } catch (const wag::ScenarioDiverged& e) {
    wag::write_file_atomic(dir / "trace.csv", wag::trace_to_csv(e.partial_trace(), timing));
    write_meta(dir, "run", hash, {{"diverged", true}, {"steps_completed", e.partial_trace().size()}});
    throw;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  wag::write_file_atomic(dir / "trace.csv", wag::trace_to_csv(res.trace, timing));
  json summary = wag::run_summary_report(s, res.summary);
  summary["calibrated_base_overlap"] = env.oracle.base_overlap;
  write_json(dir / "summary.json", summary);
  write_json(dir / "config.resolved.json", wag::to_json(s));
  write_meta(dir, "run", hash, {{"wall_seconds", secs}, {"threads", par.resolved()}});
  std::cout << "average_error_m " << res.summary.average_error_m << "\n"
            << "final_error_m " << res.summary.final_error_m << "\n"
            << "convergence_step "
            << (res.summary.convergence_step ? std::to_string(*res.summary.convergence_step) : "none") << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ',');) {
    const auto dots = part.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto lo = std::stoull(part.substr(0, dots));
        const auto hi = std::stoull(part.substr(dots + 2));
        if (hi < lo) throw wag::ConfigError("seed range " + part + " is empty");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw wag::ConfigError("cannot parse seeds '" + spec + "'");
    }
  }
  if (out.empty()) throw wag::ConfigError("no seeds given");
  return out;
}

void cmd_compare(const Common& c, const std::vector<std::string>& configs, const std::string& seeds) {
  std::vector<wag::ScenarioConfig> cfgs;
  for (const auto& p : configs) {
    auto cf = wag::load_config(p);
    cf.scenario.validate();
    cfgs.push_back(cf.scenario);
  }
  const auto seed_list = parse_seeds(seeds);
  const auto report = wag::compare_runs(cfgs, seed_list, c.parallelism());
  const json j = wag::comparison_to_json(report, cfgs);
  const fs::path dir(c.out);
  write_json(dir / "comparison.json", j);
  std::string hashes;
  for (const auto& cfg : cfgs) hashes += wag::config_hash(cfg);
  write_meta(dir, "compare", "crc32:" + wag::hex32(wag::crc32_of(hashes)));
  for (const auto& cc : report.configs)
    std::cout << cc.name << ": median_final_error_m " << cc.median_final_error_m << ", median_convergence_step "
              << cc.median_convergence_step << "\n";
}

void cmd_train(const Common& c, std::optional<double> lr) {
  wag::ConfigFile cf = c.load();
  wag::TrainingConfig tc = cf.training;
  if (lr) tc.options.lr = *lr;
  if (c.seed) tc.seeds = {*c.seed};
  std::vector<wag::LossKind> kinds;
  if (tc.which != wag::TrainingConfig::Which::Trinomial) kinds.push_back(wag::LossKind::Binomial);
  if (tc.which != wag::TrainingConfig::Which::Binomial) kinds.push_back(wag::LossKind::Trinomial);

  const json params = {{"loss", wag::to_json(cf.loss)},
                       {"dataset",
                        {{"tiles", tc.dataset.tiles},
                         {"latent_dim", tc.dataset.latent_dim},
                         {"feature_dim", tc.dataset.feature_dim},
                         {"feature_noise", tc.dataset.feature_noise},
                         {"semi_center_share", tc.dataset.semi_center_share}}},
                       {"options",
                        {{"warmup_epochs", tc.options.warmup_epochs},
                         {"epochs", tc.options.epochs},
                         {"lr", tc.options.lr},
                         {"embedding_dim", tc.options.embedding_dim},
                         {"negatives", tc.options.negatives}}}};
  const std::string hash = "crc32:" + wag::hex32(wag::crc32_of(params.dump()));
  json runs = json::array();
  json medians = json::object();
  for (auto kind : kinds) {
    std::vector<double> pos, semi;
    for (auto seed : tc.seeds) {
      wag::ToyDatasetSpec ds = tc.dataset;
      ds.seed = seed;
      wag::TrainOptions opt = tc.options;
      opt.seed = seed;
      const auto data = wag::make_toy_dataset(ds);
      const auto rep = wag::train_toy_embedding(data, kind, cf.loss, opt);
      pos.push_back(rep.final.recall_pos_at_1);
      semi.push_back(rep.final.recall_semi_at_1);
      runs.push_back(wag::train_report_to_json(rep));
      if (c.verbose)
        std::cerr << wag::to_string(kind) << " seed " << seed << ": pos " << rep.final.recall_pos_at_1 << " semi "
                  << rep.final.recall_semi_at_1 << "\n";
    }
    medians[wag::to_string(kind)] = {{"recall_pos@1", wag::median(pos)}, {"recall_semi@1", wag::median(semi)}};
    std::cout << wag::to_string(kind) << ": median recall_pos@1 " << wag::median(pos) << ", recall_semi@1 "
              << wag::median(semi) << "\n";
  }
  const json j = {{"format_version", wag::kReportFormatVersion},
                  {"tool_version", wag::kToolVersion},
                  {"config_hash", hash},
                  {"params", params},
                  {"seeds", tc.seeds},
                  {"medians", medians},
                  {"runs", runs}};
  const fs::path dir(c.out);
  write_json(dir / "train_report.json", j);
  write_meta(dir, "train-loss", hash);
}

struct BenchFlags {
  std::vector<double> areas{10.0, 100.0, 268.435456, 300.0};
  std::size_t dim = 64;
  double per_sim_time = 1.9552e-5;
  double interval = 66.0;
  double dense_interval = 5.0;
  bool measure = false;
  std::size_t images = 65536;
  std::size_t reps = 5;
};

void cmd_bench(const Common& c, const BenchFlags& f) {
  wag::CostModel model;
  model.dim = f.dim;
  model.per_similarity_s = f.per_sim_time;
  model.sampling_interval_m = f.interval;
  const auto rows = wag::emit_scaling_table(f.areas, model, f.dense_interval);
  const json cfg = {{"areas_km2", f.areas},
                    {"dim", f.dim},
                    {"per_similarity_s", f.per_sim_time},
                    {"sampling_interval_m", f.interval},
                    {"dense_interval_m", f.dense_interval},
                    {"bytes_per_value", model.bytes_per_value}};
  const std::string hash = "crc32:" + wag::hex32(wag::crc32_of(cfg.dump()));
  const fs::path dir(c.out);
  wag::write_file_atomic(dir / "scaling.csv", wag::scaling_table_csv(rows));
  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"area_km2", r.area_km2},
                     {"wag_images", r.wag_images},
                     {"dense_images", r.dense_images},
                     {"wag_seconds", r.wag_seconds},
                     {"dense_seconds", r.dense_seconds},
                     {"wag_bytes", r.wag_bytes},
                     {"dense_bytes", r.dense_bytes}});
  json j = {{"format_version", wag::kReportFormatVersion},
            {"tool_version", wag::kToolVersion},
            {"config_hash", hash},
            {"config", cfg},
            {"imagery_ratio", wag::imagery_ratio(f.interval, f.dense_interval)},
            {"manifest_overhead_bytes", wag::manifest_overhead_bytes(wag::TileGrid({0, 0}, 64.0, 256, 256), f.dim)},
            {"rows", table}};
  write_json(dir / "bench.json", j);
  json meta = json::object();
  if (f.measure) {
    const auto m = wag::measure_similarity_kernel(f.dim, f.images, f.reps, c.seed.value_or(1), c.parallelism());
    meta["measurement"] = wag::kernel_measurement_to_json(m);
    std::cout << "measured per_similarity_s " << m.median_per_similarity_s << " (mad " << m.mad_fraction << ", "
              << m.hardware << ")\n";
  }
  write_meta(dir, "bench", hash, meta);
  std::cout << wag::scaling_table_csv(rows);
}

void cmd_report(const Common& c, const std::vector<std::string>& traces, double threshold, bool sustained) {
  std::string series = "trace,step,error_m,dispersion_rms_m\n";
  json summaries = json::array();
  std::string hash_input;
  for (const auto& p : traces) {
    const std::string text = wag::read_file(p);
    hash_input += text;
    const auto trace = wag::trace_from_csv(text);
    if (trace.empty()) throw wag::ConfigError("trace " + p + " has no steps");
    const std::string label = fs::path(p).parent_path().filename().string().empty()
                                  ? fs::path(p).stem().string()
                                  : fs::path(p).parent_path().filename().string();
    char buf[256];
    for (const auto& e : trace) {
      std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g\n", e.step, e.error_m, e.dispersion_rms_m);
      series += label + buf;
    }
    json s = wag::summary_to_json(wag::summarize(trace, threshold, sustained));
    s["trace"] = label;
    summaries.push_back(s);
  }
  const std::string hash = "crc32:" + wag::hex32(wag::crc32_of(hash_input));
  const fs::path dir(c.out);
  wag::write_file_atomic(dir / "series.csv", series);
  write_json(dir / "report.json", {{"format_version", wag::kReportFormatVersion},
                                   {"tool_version", wag::kToolVersion},
                                   {"config_hash", hash},
                                   {"summaries", summaries}});
  write_meta(dir, "report", hash);
  std::cout << "wrote " << (dir / "series.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ground-to-aerial localization toolkit"};
  app.set_version_flag("--version", std::string(wag::kToolVersion));
  app.require_subcommand(1, 1);

  Common build_c, cal_c, run_c, cmp_c, train_c, bench_c, report_c;

  auto* build = app.add_subcommand("build-db", "Write a tile embedding database");
  build_c.attach(build, true);
  std::string import_path, db_path;
  build->add_option("--import", import_path, "Import a .f32 payload or an existing database manifest");
  build->add_option("--db", db_path, "Database manifest path (default OUT/db.json)");

  auto* cal = app.add_subcommand("calibrate", "Fit the oracle to the target gap spread");
  cal_c.attach(cal, true);

  auto* run = app.add_subcommand("run", "Run one scenario");
  run_c.attach(run, true);
  bool timing = false;
  run->add_flag("--timing", timing, "Record per-step wall time in the trace ms column");

  auto* cmp = app.add_subcommand("compare", "Run several configs over paired seeds");
  cmp_c.attach(cmp, false);
  std::vector<std::string> cmp_configs;
  std::string seeds = "1..10";
  cmp->add_option("configs", cmp_configs, "Scenario configs")->required()->check(CLI::ExistingFile);
  cmp->add_option("--seeds", seeds, "Seed list, e.g. 1..10 or 1,4,9")->capture_default_str();

  auto* train = app.add_subcommand("train-loss", "Train the toy embedding with binomial and trinomial loss");
  train_c.attach(train, false);
  std::optional<double> lr;
  train->add_option("--lr", lr, "Learning rate, overrides the config");

  auto* bench = app.add_subcommand("bench", "Emit the storage and computation scaling table");
  bench_c.attach(bench, false);
  BenchFlags bf;
  bench->add_option("--areas", bf.areas, "Areas in km^2")->delimiter(',');
  bench->add_option("--dim", bf.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  bench->add_option("--per-sim-time", bf.per_sim_time, "Seconds per similarity");
  bench->add_option("--interval", bf.interval, "Coarse sampling interval in meters");
  bench->add_option("--dense-interval", bf.dense_interval, "Dense sampling interval in meters");
  bench->add_flag("--measure", bf.measure, "Also time the similarity kernel");
  bench->add_option("--images", bf.images, "Images for --measure")->check(CLI::PositiveNumber);
  bench->add_option("--reps", bf.reps, "Repetitions for --measure");

  auto* report = app.add_subcommand("report", "Plot-ready series from trace files");
  report_c.attach(report, false);
  std::vector<std::string> traces;
  double threshold = 64.0;
  bool sustained = false;
  report->add_option("traces", traces, "trace.csv files")->required();
  report->add_option("--threshold", threshold, "Convergence threshold in meters")->capture_default_str();
  report->add_flag("--sustained", sustained, "Sustained rather than first-crossing convergence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (build->parsed()) return guarded(build_c.verbose, [&] { cmd_build_db(build_c, import_path, db_path); });
  if (cal->parsed()) return guarded(cal_c.verbose, [&] { cmd_calibrate(cal_c); });
  if (run->parsed()) return guarded(run_c.verbose, [&] { cmd_run(run_c, timing); });
  if (cmp->parsed()) return guarded(cmp_c.verbose, [&] { cmd_compare(cmp_c, cmp_configs, seeds); });
  if (train->parsed()) return guarded(train_c.verbose, [&] { cmd_train(train_c, lr); });
  if (bench->parsed()) return guarded(bench_c.verbose, [&] { cmd_bench(bench_c, bf); });
  if (report->parsed()) return guarded(report_c.verbose, [&] { cmd_report(report_c, traces, threshold, sustained); });
  return kConfig;
}
