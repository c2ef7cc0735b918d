#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wag/embeddings.hpp"
#include "wag/errors.hpp"
#include "wag/grid.hpp"
#include "wag/parallel.hpp"
#include "wag/rng.hpp"

namespace wag {

struct Particle {
  GeoPoint position;
  double weight = 0.0;
};

/// P(d) = beta * exp(-beta * d) on raw embedding distance.
struct ExponentialModel {
  double beta = 5.0;
};

/// Zero-mean Gaussian on the gap z = max(s) - s[k].
struct GaussianModel {
  double sigma = 0.1;
};

using MeasurementModel = std::variant<ExponentialModel, GaussianModel>;

inline void validate(const MeasurementModel& m) {
  std::visit(
      [](const auto& mm) {
        using T = std::decay_t<decltype(mm)>;
        if constexpr (std::is_same_v<T, ExponentialModel>) {
          if (!(mm.beta > 0.0) || !std::isfinite(mm.beta)) throw InvalidArgument("beta must be positive");
        } else {
          if (!(mm.sigma > 0.0) || !std::isfinite(mm.sigma)) throw InvalidArgument("sigma must be positive");
        }
      },
      m);
}

inline double log_likelihood(const MeasurementModel& model, double value) {
  if (const auto* e = std::get_if<ExponentialModel>(&model)) return std::log(e->beta) - e->beta * value;
  const auto& g = std::get<GaussianModel>(model);
  const double u = value / g.sigma;
  return -std::log(g.sigma * std::sqrt(2.0 * std::numbers::pi)) - 0.5 * u * u;
}

inline double likelihood(const MeasurementModel& model, double value) {
  if (const auto* e = std::get_if<ExponentialModel>(&model)) return e->beta * std::exp(-e->beta * value);
  const auto& g = std::get<GaussianModel>(model);
  const double u = value / g.sigma;
  return std::exp(-0.5 * u * u) / (g.sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// Per-tile values fed to the likelihood: gaps z for the Gaussian model,
/// embedding distances d for the exponential model.
struct Measurement {
  std::vector<double> values;
};

/// z[k] = max(s) - s[k]; zero at the argmax tile.
inline Measurement gap_measurement(const SimilarityRow& row) {
  Measurement m;
  m.values.resize(row.size());
  for (std::size_t k = 0; k < row.size(); ++k)
    m.values[k] = static_cast<double>(row.max_value) - static_cast<double>(row.s[k]);
  return m;
}

/// d[k] = |g - tile_k| for unit vectors, recovered from cosine similarity.
inline Measurement distance_measurement(const SimilarityRow& row) {
  Measurement m;
  m.values.resize(row.size());
  for (std::size_t k = 0; k < row.size(); ++k)
    m.values[k] = std::sqrt(std::max(0.0, 2.0 - 2.0 * static_cast<double>(row.s[k])));
  return m;
}

inline Measurement measurement_for(const MeasurementModel& model, const SimilarityRow& row) {
  return std::holds_alternative<GaussianModel>(model) ? gap_measurement(row) : distance_measurement(row);
}

struct ResamplePolicy {
  enum class Kind { EveryUpdate, EssBelow };
  Kind kind = Kind::EveryUpdate;
  double fraction = 0.5;  // EssBelow: resample when ESS < fraction * n

  static ResamplePolicy every_update() { return {}; }
  static ResamplePolicy ess_below(double f) { return {Kind::EssBelow, f}; }
};

/// Systematic resampling: one phase in [0, 1) places `count` evenly spaced
/// pointers on the cumulative weights. Returns the selected source indices in
/// ascending order. `weights` must be normalized.
inline std::vector<std::size_t> systematic_resample_indices(std::span<const double> weights,
                                                            std::size_t count, double phase) {
  std::vector<std::size_t> out;
  out.reserve(count);
  if (weights.empty() || count == 0) return out;
  const double step = 1.0 / static_cast<double>(count);
  double cumulative = weights[0];
  std::size_t i = 0;
  for (std::size_t j = 0; j < count; ++j) {
    const double target = (phase + static_cast<double>(j)) * step;
    while (target >= cumulative && i + 1 < weights.size()) cumulative += weights[++i];
    out.push_back(i);
  }
  return out;
}

/// Monte Carlo localization over a tile grid. Owned by one run at a time.
class ParticleFilter {
 public:
  ParticleFilter(const TileGrid& grid, std::vector<Particle> particles, MeasurementModel model,
                 std::uint64_t seed, ResamplePolicy policy = {}, Parallelism par = {})
      : grid_(grid), particles_(std::move(particles)), model_(model), seed_(seed), policy_(policy),
        par_(par) {
    validate(model_);
    if (particles_.empty()) throw InvalidArgument("particle filter needs at least one particle");
    if (policy_.kind == ResamplePolicy::Kind::EssBelow && !(policy_.fraction > 0.0 && policy_.fraction <= 1.0))
      throw InvalidArgument("ESS fraction must lie in (0, 1]");
  }

  /// n draws from an isotropic Gaussian around `mean`; draws outside the grid
  /// are redrawn a bounded number of times, then clamped inside.
  static ParticleFilter init_gaussian(const TileGrid& grid, std::size_t n, GeoPoint mean, double sigma,
                                      std::uint64_t seed, MeasurementModel model = GaussianModel{},
                                      ResamplePolicy policy = {}, Parallelism par = {}) {
    if (n == 0) throw InvalidArgument("particle count must be >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("init sigma must be positive");
    constexpr int kMaxRedraws = 64;
    std::vector<Particle> ps(n);
    const double w = 1.0 / static_cast<double>(n);
    const std::uint64_t init_seed = derive_seed(seed, "init");
    for (std::size_t i = 0; i < n; ++i) {
      SplitMix64 gen(derive_seed(init_seed, i));
      std::normal_distribution<double> n01;
      GeoPoint p{};
      for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
        p = {mean.x + sigma * n01(gen), mean.y + sigma * n01(gen)};
        if (grid.contains(p)) break;
      }
      ps[i] = {clamp_into(grid, p), w};
    }
    return ParticleFilter(grid, std::move(ps), model, seed, policy, par);
  }

  /// All particles at p, optionally jittered by an isotropic Gaussian.
  static ParticleFilter init_exact(const TileGrid& grid, std::size_t n, GeoPoint p, double jitter,
                                   std::uint64_t seed, MeasurementModel model = GaussianModel{},
                                   ResamplePolicy policy = {}, Parallelism par = {}) {
    if (n == 0) throw InvalidArgument("particle count must be >= 1");
    if (!(jitter >= 0.0)) throw InvalidArgument("jitter must be >= 0");
    std::vector<Particle> ps(n, Particle{p, 1.0 / static_cast<double>(n)});
    if (jitter > 0.0) {
      const std::uint64_t init_seed = derive_seed(seed, "init");
      for (std::size_t i = 0; i < n; ++i) {
        SplitMix64 gen(derive_seed(init_seed, i));
        std::normal_distribution<double> n01;
        ps[i].position = {p.x + jitter * n01(gen), p.y + jitter * n01(gen)};
      }
    }
    return ParticleFilter(grid, std::move(ps), model, seed, policy, par);
  }

  const TileGrid& grid() const noexcept { return grid_; }
  const MeasurementModel& model() const noexcept { return model_; }
  std::span<const Particle> particles() const noexcept { return particles_; }
  std::size_t size() const noexcept { return particles_.size(); }
  std::size_t resample_count() const noexcept { return resamples_; }
  void set_parallelism(Parallelism par) noexcept { par_ = par; }

  /// Shift every particle by `odom` plus per-axis Gaussian noise with standard
  /// deviation noise_frac * |odom|.
  void predict(GeoPoint odom, double noise_frac) {
    if (!(noise_frac >= 0.0)) throw InvalidArgument("noise_frac must be >= 0");
    const double sd = noise_frac * norm(odom);
    const std::uint64_t step_seed = derive_seed(seed_, derive_seed(0x707265646963ULL, predictions_++));
    parallel_for(particles_.size(), par_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        GeoPoint& p = particles_[i].position;
        if (sd > 0.0) {
          SplitMix64 gen(derive_seed(step_seed, i));
          std::normal_distribution<double> n01;
          const double nx = n01(gen);
          const double ny = n01(gen);
          p = {p.x + odom.x + sd * nx, p.y + odom.y + sd * ny};
        } else {
          p = p + odom;
        }
      }
    });
  }

  /// Bayes update from one per-tile measurement, followed by resampling per
  /// policy. Particles outside the grid get zero weight. Throws Degenerate,
  /// leaving the filter unchanged, when no weight survives.
  void update(const Measurement& meas) {
    if (meas.values.size() != grid_.tile_count())
      throw DimensionMismatch("measurement covers " + std::to_string(meas.values.size()) +
                              " tiles, grid has " + std::to_string(grid_.tile_count()));
    const std::size_t n = particles_.size();
    constexpr std::size_t kOutside = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> tile(n);
    parallel_for(n, par_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto k = grid_.tile_of(particles_[i].position);
        tile[i] = k ? grid_.linear(*k) : kOutside;
      }
    });

    // Shift log-likelihoods by the best occupied tile so the products stay
    // representable; the shift cancels in normalization.
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (tile[i] != kOutside && particles_[i].weight > 0.0)
        shift = std::max(shift, log_likelihood(model_, meas.values[tile[i]]));
    if (!std::isfinite(shift)) throw Degenerate("no particle with positive weight lies inside the grid");

    std::vector<double> weights(n);
    parallel_for(n, par_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        weights[i] = tile[i] == kOutside
                         ? 0.0
                         : particles_[i].weight * std::exp(log_likelihood(model_, meas.values[tile[i]]) - shift);
    });
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0) || !std::isfinite(total)) throw Degenerate("particle weights collapsed to zero");
    for (std::size_t i = 0; i < n; ++i) particles_[i].weight = weights[i] / total;

    if (policy_.kind == ResamplePolicy::Kind::EveryUpdate ||
        effective_sample_size() < policy_.fraction * static_cast<double>(n))
      resample();
  }

  /// Systematic resampling with one uniform phase; weights become 1/n.
  void resample() {
    const std::size_t n = particles_.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = particles_[i].weight;
    SplitMix64 gen(derive_seed(seed_, derive_seed(0x726573616d70ULL, resamples_++)));
    const double phase = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    const auto idx = systematic_resample_indices(w, n, phase);
    std::vector<Particle> next(n);
    const double uniform = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) next[j] = {particles_[idx[j]].position, uniform};
    particles_ = std::move(next);
  }

  double effective_sample_size() const noexcept {
    double sq = 0.0;
    for (const auto& p : particles_) sq += p.weight * p.weight;
    return sq > 0.0 ? 1.0 / sq : 0.0;
  }

  double weight_sum() const noexcept {
    double s = 0.0;
    for (const auto& p : particles_) s += p.weight;
    return s;
  }

  /// Weighted mean position.
  GeoPoint estimate() const noexcept {
    double x = 0.0, y = 0.0;
    for (const auto& p : particles_) {
      x += p.weight * p.position.x;
      y += p.weight * p.position.y;
    }
    return {x, y};
  }

  /// Root weighted mean squared distance from estimate(), in meters.
  double dispersion() const noexcept {
    const GeoPoint c = estimate();
    double acc = 0.0;
    for (const auto& p : particles_) {
      const double dx = p.position.x - c.x;
      const double dy = p.position.y - c.y;
      acc += p.weight * (dx * dx + dy * dy);
    }
    return std::sqrt(acc);
  }

  /// Probability mass per linear tile index (mass outside the grid dropped).
  std::vector<double> tile_mass() const {
    std::vector<double> mass(grid_.tile_count(), 0.0);
    for (const auto& p : particles_)
      if (auto k = grid_.tile_of(p.position)) mass[grid_.linear(*k)] += p.weight;
    return mass;
  }

 private:
  static GeoPoint clamp_into(const TileGrid& grid, GeoPoint p) {
    if (grid.contains(p)) return p;
    const double eps = grid.tile_size() * 1e-9;
    p.x = std::clamp(p.x, grid.origin().x, grid.origin().x + grid.width() - eps);
    p.y = std::clamp(p.y, grid.origin().y, grid.origin().y + grid.height() - eps);
    return p;
  }

  TileGrid grid_;
  std::vector<Particle> particles_;
  MeasurementModel model_;
  std::uint64_t seed_;
  ResamplePolicy policy_;
  Parallelism par_;
  std::uint64_t predictions_ = 0;
  std::uint64_t resamples_ = 0;
};

}  // namespace wag
