#pragma once

// Presence check against a zone's boundary polygon.
//
// Coordinates are treated as planar (latitude, longitude) pairs. Office-scale
// fences are small enough that the projection error is irrelevant.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace smartsdh {

struct GeoPoint {
  double latitude = 0;
  double longitude = 0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

namespace detail {

inline double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
  return (a.latitude - o.latitude) * (b.longitude - o.longitude) -
         (a.longitude - o.longitude) * (b.latitude - o.latitude);
}

inline bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  return std::min(a.latitude, b.latitude) <= p.latitude && p.latitude <= std::max(a.latitude, b.latitude) &&
         std::min(a.longitude, b.longitude) <= p.longitude && p.longitude <= std::max(a.longitude, b.longitude);
}

inline int sign(double v) { return (v > 0) - (v < 0); }

inline bool segments_intersect(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1, const GeoPoint& q2) {
  const int d1 = sign(cross(q1, q2, p1));
  const int d2 = sign(cross(q1, q2, p2));
  const int d3 = sign(cross(p1, p2, q1));
  const int d4 = sign(cross(p1, p2, q2));
  if (d1 != d2 && d3 != d4 && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0) return true;
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

}  // namespace detail

class GeoFence {
 public:
  GeoFence() = default;

  // Throws std::invalid_argument unless the polygon is simple with >= 3 vertices.
  explicit GeoFence(std::vector<GeoPoint> vertices) : vertices_(std::move(vertices)) { validate(); }

  static GeoFence box(double lat_min, double lon_min, double lat_max, double lon_max) {
    if (!(lat_min < lat_max) || !(lon_min < lon_max)) throw std::invalid_argument("degenerate fence box");
    return GeoFence({{lat_min, lon_min}, {lat_min, lon_max}, {lat_max, lon_max}, {lat_max, lon_min}});
  }

  const std::vector<GeoPoint>& vertices() const { return vertices_; }

  // Points on the boundary count as inside.
  bool contains(const GeoPoint& p) const {
    if (!std::isfinite(p.latitude) || !std::isfinite(p.longitude)) return false;
    const std::size_t n = vertices_.size();
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const GeoPoint& a = vertices_[i];
      const GeoPoint& b = vertices_[j];
      if (detail::cross(a, b, p) == 0 && detail::on_segment(p, a, b)) return true;
      if ((a.longitude > p.longitude) != (b.longitude > p.longitude)) {
        const double lat_at = a.latitude + (p.longitude - a.longitude) * (b.latitude - a.latitude) /
                                               (b.longitude - a.longitude);
        if (p.latitude < lat_at) inside = !inside;
      }
    }
    return inside;
  }

  // Area centroid.
  GeoPoint centroid() const {
    double a2 = 0, cx = 0, cy = 0;
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const GeoPoint& p = vertices_[i];
      const GeoPoint& q = vertices_[(i + 1) % n];
      const double c = p.latitude * q.longitude - q.latitude * p.longitude;
      a2 += c;
      cx += (p.latitude + q.latitude) * c;
      cy += (p.longitude + q.longitude) * c;
    }
    return {cx / (3 * a2), cy / (3 * a2)};
  }

 private:
  void validate() const {
    const std::size_t n = vertices_.size();
    if (n < 3) throw std::invalid_argument("fence polygon needs at least 3 vertices");
    for (const auto& v : vertices_) {
      if (!std::isfinite(v.latitude) || !std::isfinite(v.longitude)) {
        throw std::invalid_argument("fence vertex is not finite");
      }
    }
    double area2 = 0;
    for (std::size_t i = 0; i < n; ++i) area2 += detail::cross({0, 0}, vertices_[i], vertices_[(i + 1) % n]);
    if (area2 == 0) throw std::invalid_argument("fence polygon has zero area");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
        if (adjacent) continue;
        if (detail::segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j], vertices_[(j + 1) % n])) {
          throw std::invalid_argument("fence polygon is self-intersecting");
        }
      }
    }
  }

  std::vector<GeoPoint> vertices_;
};

}  // namespace smartsdh
