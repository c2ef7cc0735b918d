#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "wag/embeddings.hpp"
#include "wag/errors.hpp"
#include "wag/parallel.hpp"
#include "wag/sim.hpp"

namespace wag {

/// Analytic cost of per-step similarity search over a tile database.
struct CostModel {
  double per_similarity_s = 1.9552e-5;
  double bytes_per_value = 4.0;
  std::size_t dim = 64;
  double sampling_interval_m = 66.0;

  void validate() const {
    if (!(per_similarity_s > 0.0) || !(bytes_per_value > 0.0) || dim == 0 || !(sampling_interval_m > 0.0))
      throw InvalidArgument("cost model parameters must all be positive");
  }
};

/// Database images needed to cover `area_km2` at one image per interval^2.
inline std::uint64_t images_required(double area_km2, double sampling_interval_m) {
  if (!(area_km2 > 0.0) || !(sampling_interval_m > 0.0))
    throw InvalidArgument("area and sampling interval must be positive");
  const double exact = area_km2 * 1e6 / (sampling_interval_m * sampling_interval_m);
  // Absorb representation error so exact multiples do not round up.
  return static_cast<std::uint64_t>(std::ceil(exact * (1.0 - 1e-12)));
}

inline double similarity_update_time(std::uint64_t num_images, const CostModel& m) {
  m.validate();
  if (num_images == 0) throw InvalidArgument("num_images must be >= 1");
  return static_cast<double>(num_images) * m.per_similarity_s;
}

/// Embedding payload size; the manifest is accounted for separately.
inline double storage_bytes(std::uint64_t num_images, const CostModel& m) {
  m.validate();
  return static_cast<double>(num_images) * static_cast<double>(m.dim) * m.bytes_per_value;
}

/// Ratio of images needed at the dense interval to the coarse interval.
inline double imagery_ratio(double coarse_interval_m, double dense_interval_m) {
  if (!(coarse_interval_m > 0.0) || !(dense_interval_m > 0.0))
    throw InvalidArgument("sampling intervals must be positive");
  const double r = coarse_interval_m / dense_interval_m;
  return r * r;
}

struct ScalingRow {
  double area_km2 = 0.0;
  std::uint64_t wag_images = 0;
  std::uint64_t dense_images = 0;
  double wag_seconds = 0.0;
  double dense_seconds = 0.0;
  double wag_bytes = 0.0;
  double dense_bytes = 0.0;
};

/// One row per area: coarse database at model.sampling_interval_m against a
/// dense database at dense_interval_m, same dim and per-pair cost.
inline std::vector<ScalingRow> emit_scaling_table(const std::vector<double>& areas_km2, const CostModel& model,
                                                  double dense_interval_m = 5.0) {
  model.validate();
  if (areas_km2.empty()) throw InvalidArgument("at least one area is required");
  CostModel dense = model;
  dense.sampling_interval_m = dense_interval_m;
  std::vector<ScalingRow> rows;
  for (double a : areas_km2) {
    ScalingRow r;
    r.area_km2 = a;
    r.wag_images = images_required(a, model.sampling_interval_m);
    r.dense_images = images_required(a, dense_interval_m);
    r.wag_seconds = similarity_update_time(r.wag_images, model);
    r.dense_seconds = similarity_update_time(r.dense_images, dense);
    r.wag_bytes = storage_bytes(r.wag_images, model);
    r.dense_bytes = storage_bytes(r.dense_images, dense);
    rows.push_back(r);
  }
  return rows;
}

inline std::string scaling_table_csv(const std::vector<ScalingRow>& rows) {
  std::string out = "area_km2,wag_images,dense_images,wag_seconds,dense_seconds,wag_bytes,dense_bytes\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%llu,%llu,%.17g,%.17g,%.17g,%.17g\n", r.area_km2,
                  static_cast<unsigned long long>(r.wag_images), static_cast<unsigned long long>(r.dense_images),
                  r.wag_seconds, r.dense_seconds, r.wag_bytes, r.dense_bytes);
    out += buf;
  }
  return out;
}

inline std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return model + " (" + std::to_string(std::thread::hardware_concurrency()) + " hw threads)";
}

struct KernelMeasurement {
  std::size_t dim = 0;
  std::size_t num_images = 0;
  std::size_t repetitions = 0;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  std::vector<double> seconds;         // one per repetition, full similarity row
  double median_seconds = 0.0;
  double median_per_similarity_s = 0.0;
  double mad_fraction = 0.0;           // median absolute deviation / median
  double similarities_per_second = 0.0;
  std::string hardware;
};

/// Times similarity_row over a seeded synthetic database.
inline KernelMeasurement measure_similarity_kernel(std::size_t dim, std::size_t num_images,
                                                   std::size_t repetitions, std::uint64_t seed,
                                                   Parallelism par = {}) {
  if (repetitions < 3) throw InvalidArgument("at least 3 repetitions are required");
  if (num_images == 0) throw InvalidArgument("num_images must be >= 1");
  const TileGrid grid({0, 0}, 64.0, 1, num_images);
  const EmbeddingDB db = synth_tile_db(grid, dim, seed);
  std::vector<double> q(dim);
  {
    SplitMix64 gen(derive_seed(seed, "query"));
    std::normal_distribution<double> n01;
    for (auto& v : q) v = n01(gen);
  }
  const Embedding g = normalize(q);

  KernelMeasurement m;
  m.dim = dim;
  m.num_images = num_images;
  m.repetitions = repetitions;
  m.threads = par.resolved();
  m.seed = seed;
  m.hardware = hardware_descriptor();
  // Small rows finish well under the clock resolution; repeat the call.
  const std::size_t inner = std::max<std::size_t>(1, 200000 / std::max<std::size_t>(num_images * dim / 64, 1));
  volatile float sink = 0.0f;
  sink = sink + similarity_row(db, g, par).max_value;  // warm-up
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < inner; ++i) sink = sink + similarity_row(db, g, par).max_value;
    const auto t1 = std::chrono::steady_clock::now();
    m.seconds.push_back(std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(inner));
  }
  m.median_seconds = median(m.seconds);
  std::vector<double> dev;
  for (double s : m.seconds) dev.push_back(std::abs(s - m.median_seconds));
  m.mad_fraction = m.median_seconds > 0.0 ? median(dev) / m.median_seconds : 0.0;
  m.median_per_similarity_s = m.median_seconds / static_cast<double>(num_images);
  m.similarities_per_second = m.median_per_similarity_s > 0.0 ? 1.0 / m.median_per_similarity_s : 0.0;
  return m;
}

}  // namespace wag
