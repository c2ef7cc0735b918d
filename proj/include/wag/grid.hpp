#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "wag/errors.hpp"

namespace wag {

/// Planar position in meters relative to a local origin (x east, y north).
struct GeoPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
  GeoPoint operator+(const GeoPoint& o) const { return {x + o.x, y + o.y}; }
  GeoPoint operator-(const GeoPoint& o) const { return {x - o.x, y - o.y}; }
  GeoPoint operator*(double s) const { return {x * s, y * s}; }
};

inline double norm(const GeoPoint& p) { return std::hypot(p.x, p.y); }
inline double distance(const GeoPoint& a, const GeoPoint& b) { return norm(a - b); }

struct TileIndex {
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const TileIndex&, const TileIndex&) = default;
};

enum class PairClass { Positive, SemiPositive, Negative };

inline const char* to_string(PairClass c) {
  switch (c) {
    case PairClass::Positive: return "positive";
    case PairClass::SemiPositive: return "semi-positive";
    case PairClass::Negative: return "negative";
  }
  return "?";
}

/// Lattice of square, non-overlapping satellite tiles. Row grows north, col
/// grows east; cells are half-open [low, high) on both axes.
class TileGrid {
 public:
  TileGrid() = default;
  TileGrid(GeoPoint origin, double tile_size, std::size_t rows, std::size_t cols)
      : origin_(origin), tile_size_(tile_size), rows_(rows), cols_(cols) {
    if (!(tile_size > 0.0) || !std::isfinite(tile_size))
      throw InvalidArgument("tile_size must be positive, got " + std::to_string(tile_size));
    if (rows == 0 || cols == 0) throw InvalidArgument("grid needs at least one row and one column");
    if (!std::isfinite(origin.x) || !std::isfinite(origin.y))
      throw InvalidArgument("grid origin must be finite");
  }

  const GeoPoint& origin() const noexcept { return origin_; }
  double tile_size() const noexcept { return tile_size_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t tile_count() const noexcept { return rows_ * cols_; }
  double width() const noexcept { return static_cast<double>(cols_) * tile_size_; }
  double height() const noexcept { return static_cast<double>(rows_) * tile_size_; }

  bool valid(TileIndex k) const noexcept { return k.row < rows_ && k.col < cols_; }

  bool contains(const GeoPoint& p) const noexcept {
    const double dx = p.x - origin_.x;
    const double dy = p.y - origin_.y;
    return dx >= 0.0 && dy >= 0.0 && dx < width() && dy < height();
  }

  /// Row-major linear index.
  std::size_t linear(TileIndex k) const noexcept { return k.row * cols_ + k.col; }
  TileIndex from_linear(std::size_t i) const noexcept { return {i / cols_, i % cols_}; }

  /// Tile containing p, or nullopt when p is outside the footprint.
  std::optional<TileIndex> tile_of(const GeoPoint& p) const noexcept {
    if (!contains(p)) return std::nullopt;
    auto row = static_cast<std::size_t>(std::floor((p.y - origin_.y) / tile_size_));
    auto col = static_cast<std::size_t>(std::floor((p.x - origin_.x) / tile_size_));
    // Rounding right below the far edge can land on rows_/cols_.
    if (row >= rows_) row = rows_ - 1;
    if (col >= cols_) col = cols_ - 1;
    return TileIndex{row, col};
  }

  /// Like tile_of but throws OutOfBounds.
  TileIndex tile_at(const GeoPoint& p) const {
    if (auto k = tile_of(p)) return *k;
    throw OutOfBounds("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") is outside the grid");
  }

  GeoPoint tile_center(TileIndex k) const {
    if (!valid(k))
      throw OutOfBounds("tile (" + std::to_string(k.row) + ", " + std::to_string(k.col) +
                        ") is not in the grid");
    return {origin_.x + (static_cast<double>(k.col) + 0.5) * tile_size_,
            origin_.y + (static_cast<double>(k.row) + 0.5) * tile_size_};
  }

  /// Positive inside the central half-side box of k, SemiPositive elsewhere
  /// in k, Negative outside k.
  PairClass classify_pair(TileIndex k, const GeoPoint& p) const {
    const GeoPoint c = tile_center(k);
    const auto owner = tile_of(p);
    if (!owner || !(*owner == k)) return PairClass::Negative;
    const double quarter = tile_size_ / 4.0;
    if (std::abs(p.x - c.x) < quarter && std::abs(p.y - c.y) < quarter) return PairClass::Positive;
    return PairClass::SemiPositive;
  }

  double area_km2() const noexcept {
    return static_cast<double>(rows_) * static_cast<double>(cols_) * tile_size_ * tile_size_ / 1e6;
  }

  friend bool operator==(const TileGrid&, const TileGrid&) = default;

 private:
  GeoPoint origin_{};
  double tile_size_ = 64.0;
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
};

inline std::optional<TileIndex> tile_of(const TileGrid& g, const GeoPoint& p) { return g.tile_of(p); }
inline GeoPoint tile_center(const TileGrid& g, TileIndex k) { return g.tile_center(k); }
inline PairClass classify_pair(const TileGrid& g, TileIndex k, const GeoPoint& p) {
  return g.classify_pair(k, p);
}
inline double grid_area_km2(const TileGrid& g) { return g.area_km2(); }

}  // namespace wag
