#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wag/errors.hpp"
#include "wag/grid.hpp"
#include "wag/parallel.hpp"
#include "wag/rng.hpp"

namespace wag {

/// Unit-norm embedding vector. Only constructible through normalize() or
/// from values that are already unit norm.
class Embedding {
 public:
  Embedding() = default;

  static Embedding from_unit(std::vector<float> values) {
    Embedding e;
    e.values_ = std::move(values);
    return e;
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<float> values_;
};

template <typename T>
Embedding normalize(std::span<const T> v) {
  double sq = 0.0;
  for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  if (!std::isfinite(sq)) throw InvalidArgument("cannot normalize a non-finite vector");
  if (!(sq > 0.0)) throw ZeroVector("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) * inv);
  return Embedding::from_unit(std::move(out));
}

inline Embedding normalize(const std::vector<double>& v) { return normalize(std::span<const double>(v)); }
inline Embedding normalize(const std::vector<float>& v) { return normalize(std::span<const float>(v)); }

namespace detail {

/// Dot product with eight independent accumulators; the summation order is
/// fixed so results do not depend on the caller.
inline float dot(const float* a, const float* b, std::size_t n) noexcept {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline void require_same_dim(std::size_t a, std::size_t b) {
  if (a != b)
    throw DimensionMismatch("embedding dimensions differ: " + std::to_string(a) + " vs " +
                            std::to_string(b));
}

}  // namespace detail

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  detail::require_same_dim(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += static_cast<double>(a[i]) * b[i];
  return std::clamp(s, -1.0, 1.0);
}

inline double euclidean_distance(const Embedding& a, const Embedding& b) {
  detail::require_same_dim(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Where the vectors in a database came from.
struct Provenance {
  enum class Kind { Synthetic, Imported };
  Kind kind = Kind::Synthetic;
  std::uint64_t seed = 0;
  std::string source_id;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Per-tile satellite embeddings, dense row-major by tile, float32.
class EmbeddingDB {
 public:
  EmbeddingDB() = default;
  EmbeddingDB(TileGrid grid, std::size_t dim, std::vector<float> data, Provenance prov = {})
      : grid_(grid), dim_(dim), data_(std::move(data)), provenance_(std::move(prov)) {
    if (dim_ == 0) throw InvalidArgument("embedding dimension must be positive");
    if (data_.size() != grid_.tile_count() * dim_)
      throw DimensionMismatch("database payload has " + std::to_string(data_.size()) +
                              " values, expected " + std::to_string(grid_.tile_count() * dim_));
  }

  const TileGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return grid_.tile_count(); }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<const float> row(std::size_t linear) const noexcept {
    return std::span<const float>(data_).subspan(linear * dim_, dim_);
  }
  Embedding at(std::size_t linear) const {
    auto r = row(linear);
    return Embedding::from_unit({r.begin(), r.end()});
  }
  Embedding at(TileIndex k) const { return at(grid_.linear(k)); }

  friend bool operator==(const EmbeddingDB&, const EmbeddingDB&) = default;

 private:
  TileGrid grid_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  Provenance provenance_;
};

struct SimilarityRow {
  std::vector<float> s;
  float max_value = -1.0f;
  std::size_t argmax = 0;  // linear tile index

  std::size_t size() const noexcept { return s.size(); }
};

/// Cosine similarity of g against every tile, computed in one pass over the
/// database. Ties for the maximum resolve to the lowest tile index.
inline SimilarityRow similarity_row(const EmbeddingDB& db, const Embedding& g,
                                    Parallelism par = {}) {
  detail::require_same_dim(db.dim(), g.dim());
  SimilarityRow out;
  out.s.resize(db.size());
  const float* base = db.data().data();
  const float* q = g.values().data();
  const std::size_t d = db.dim();
  parallel_for(db.size(), par, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k)
      out.s[k] = std::clamp(detail::dot(base + k * d, q, d), -1.0f, 1.0f);
  });
  const auto it = std::max_element(out.s.begin(), out.s.end());
  out.argmax = static_cast<std::size_t>(it - out.s.begin());
  out.max_value = *it;
  return out;
}

/// Independent isotropic Gaussian direction for every tile. Tile k draws from
/// its own stream so the result depends only on (grid, dim, seed).
inline EmbeddingDB synth_tile_db(const TileGrid& grid, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw InvalidArgument("embedding dimension must be at least 2");
  std::vector<float> data(grid.tile_count() * dim);
  std::vector<double> v(dim);
  for (std::size_t k = 0; k < grid.tile_count(); ++k) {
    SplitMix64 gen(derive_seed(seed, k));
    std::normal_distribution<double> n01;
    for (auto& x : v) x = n01(gen);
    const Embedding e = normalize(v);
    std::copy(e.values().begin(), e.values().end(), data.begin() + static_cast<std::ptrdiff_t>(k * dim));
  }
  return EmbeddingDB(grid, dim, std::move(data), Provenance{Provenance::Kind::Synthetic, seed, {}});
}

/// Statistical stand-in for the ground-image branch of the network.
///
/// The ground embedding is normalize(w * tile + noise): w is base_overlap
/// perturbed by N(0, sigma_pos^2) or N(0, sigma_semi^2) depending on where
/// the point sits in its tile, and noise is isotropic with expected norm
/// noise_scale.
struct OracleParams {
  double sigma_pos = 0.06;
  double sigma_semi = 0.1;
  double base_overlap = 0.6;
  double noise_scale = 1.0;
  std::uint64_t clutter_seed = 1;

  void validate() const {
    if (!(sigma_pos >= 0.0) || !(sigma_semi >= 0.0) || !(noise_scale >= 0.0))
      throw InvalidArgument("oracle scales must be non-negative");
    if (!(base_overlap > 0.0 && base_overlap <= 1.0))
      throw InvalidArgument("base_overlap must lie in (0, 1]");
  }

  friend bool operator==(const OracleParams&, const OracleParams&) = default;
};

inline Embedding synth_ground_embedding(const EmbeddingDB& db, const GeoPoint& true_p,
                                        const OracleParams& params, std::uint64_t seed,
                                        std::uint64_t step) {
  const TileGrid& grid = db.grid();
  const TileIndex k = grid.tile_at(true_p);
  const PairClass cls = grid.classify_pair(k, true_p);
  SplitMix64 gen(derive_seed(seed, step));
  std::normal_distribution<double> n01;
  const double sigma = cls == PairClass::Positive ? params.sigma_pos : params.sigma_semi;
  const double w = params.base_overlap + sigma * n01(gen);
  const std::size_t d = db.dim();
  const double noise_sd = params.noise_scale / std::sqrt(static_cast<double>(d));
  const auto tile = db.row(grid.linear(k));
  std::vector<double> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = w * tile[i] + noise_sd * n01(gen);
  return normalize(v);
}

/// z = max(s) - s[k*] for one ground embedding at true_p.
inline double max_gap_at_truth(const EmbeddingDB& db, const GeoPoint& true_p,
                               const OracleParams& params, std::uint64_t seed, std::uint64_t step) {
  const Embedding g = synth_ground_embedding(db, true_p, params, seed, step);
  const SimilarityRow row = similarity_row(db, g);
  const std::size_t k = db.grid().linear(db.grid().tile_at(true_p));
  return static_cast<double>(row.max_value) - static_cast<double>(row.s[k]);
}

/// Spread of z at the true tile over uniformly drawn in-bounds points. The
/// spread is the root mean square about zero, i.e. the maximum-likelihood
/// sigma of the zero-mean Gaussian measurement model.
inline double sample_gap_spread(const EmbeddingDB& db, const OracleParams& params,
                                std::size_t samples, std::uint64_t seed, Parallelism par = {}) {
  const TileGrid& grid = db.grid();
  std::vector<double> z(samples);
  const std::uint64_t point_seed = derive_seed(seed, "points");
  const std::uint64_t ground_seed = derive_seed(seed, "ground");
  parallel_for(samples, par, [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   SplitMix64 gen(derive_seed(point_seed, i));
                   std::uniform_real_distribution<double> u(0.0, 1.0);
                   GeoPoint p{grid.origin().x + u(gen) * grid.width(),
                              grid.origin().y + u(gen) * grid.height()};
                   if (!grid.contains(p)) p = grid.tile_center(grid.from_linear(0));
                   z[i] = max_gap_at_truth(db, p, params, ground_seed, i);
                 }
               }, /*grain=*/16);
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return std::sqrt(sq / static_cast<double>(samples));
}

/// Fit base_overlap so that sample_gap_spread lands within 10% of
/// target_sigma. Bisection on base_overlap in (0, 1]; the spread shrinks as
/// the overlap grows. All evaluations reuse the same seeded draws, so the
/// result is deterministic.
inline OracleParams calibrate(const EmbeddingDB& db, OracleParams params, double target_sigma,
                              std::size_t samples, std::uint64_t seed, Parallelism par = {}) {
  params.validate();
  if (samples < 1000) throw InvalidArgument("calibration needs at least 1000 samples");
  if (!(target_sigma > 0.0) || !std::isfinite(target_sigma))
    throw CalibrationFailed("target spread must be positive and finite");

  const double tolerance = 0.1 * target_sigma;
  auto spread_at = [&](double overlap) {
    OracleParams trial = params;
    trial.base_overlap = overlap;
    return sample_gap_spread(db, trial, samples, seed, par);
  };

  double lo = 1e-3;  // large spread
  double hi = 1.0;   // small spread
  const double spread_hi = spread_at(hi);
  if (spread_hi > target_sigma + tolerance)
    throw CalibrationFailed("spread " + std::to_string(spread_hi) +
                            " at full overlap still exceeds target " + std::to_string(target_sigma));
  if (std::abs(spread_hi - target_sigma) <= 0.02 * target_sigma) {
    params.base_overlap = hi;
    return params;
  }
  const double spread_lo = spread_at(lo);
  if (spread_lo < target_sigma - tolerance)
    throw CalibrationFailed("spread " + std::to_string(spread_lo) +
                            " at minimal overlap is below target " + std::to_string(target_sigma));

  double best = hi;
  double best_err = std::abs(spread_hi - target_sigma);
  constexpr int kMaxIterations = 30;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = spread_at(mid);
    const double err = std::abs(s - target_sigma);
    if (err < best_err) {
      best = mid;
      best_err = err;
    }
    if (err <= 0.02 * target_sigma) break;
    if (s > target_sigma)
      lo = mid;
    else
      hi = mid;
  }
  if (best_err > tolerance)
    throw CalibrationFailed("no base_overlap reached spread " + std::to_string(target_sigma) +
                            " within 10% (closest error " + std::to_string(best_err) + ")");
  params.base_overlap = best;
  return params;
}

}  // namespace wag
