#pragma once

#include <cmath>
#include <numbers>

#include "wag/grid.hpp"

namespace wag {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

/// Equirectangular projection into a local planar frame. The east scale uses
/// the cosine of the reference latitude, which should be near the center of
/// the region of interest.
class LocalProjection {
 public:
  static constexpr double kEarthRadiusM = 6371008.8;

  LocalProjection(LatLon origin, double reference_lat_deg)
      : origin_(origin), cos_ref_(std::cos(reference_lat_deg * std::numbers::pi / 180.0)) {}

  /// Projection whose reference latitude is the center of a grid anchored at
  /// `origin` (its south-west corner).
  static LocalProjection for_grid(LatLon origin, double height_m) {
    const double center_lat = origin.lat + (height_m / 2.0) / kEarthRadiusM * 180.0 / std::numbers::pi;
    return LocalProjection(origin, center_lat);
  }

  GeoPoint to_local(LatLon p) const {
    constexpr double deg = std::numbers::pi / 180.0;
    return {kEarthRadiusM * (p.lon - origin_.lon) * deg * cos_ref_,
            kEarthRadiusM * (p.lat - origin_.lat) * deg};
  }

  LatLon to_latlon(GeoPoint p) const {
    constexpr double deg = std::numbers::pi / 180.0;
    return {origin_.lat + p.y / kEarthRadiusM / deg,
            origin_.lon + p.x / (kEarthRadiusM * cos_ref_) / deg};
  }

 private:
  LatLon origin_;
  double cos_ref_;
};

}  // namespace wag
