#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <type_traits>
#include <variant>
#include <vector>

namespace ecnn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) noexcept { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) noexcept { return std::hypot(a.x, a.y); }
inline Vec2 normalized(Vec2 a) noexcept {
  const double n = norm(a);
  return n > 0.0 ? Vec2{a.x / n, a.y / n} : a;
}
inline Vec2 rotate(Vec2 a, double angle) noexcept {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

/// Convex polygon, vertices in either winding.
struct Polygon {
  std::vector<Vec2> vertices;
  friend bool operator==(const Polygon&, const Polygon&) = default;
};

/// Ellipse with semi-axes a (along `angle`) and b.
struct Ellipse {
  Vec2 center;
  double a = 1.0;
  double b = 1.0;
  double angle = 0.0;
  friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

using Geometry = std::variant<Polygon, Ellipse>;

/// Intersection of an infinite line o + t * dir with a convex shape: parameter interval and
/// outward unit normals at the entry (t0) and exit (t1) points.
struct Chord {
  double t0 = 0.0;
  double t1 = 0.0;
  Vec2 n0;
  Vec2 n1;
};

namespace geometry {

inline Vec2 centroid(const Polygon& p) {
  Vec2 c;
  for (Vec2 v : p.vertices) c = c + v;
  return (1.0 / static_cast<double>(p.vertices.size())) * c;
}

inline Vec2 centroid(const Geometry& g) {
  return std::visit(
      [](const auto& s) -> Vec2 {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Polygon>)
          return centroid(s);
        else
          return s.center;
      },
      g);
}

// Outward normal of edge i (vertices[i] -> vertices[i+1]).
inline Vec2 edge_normal(const Polygon& p, std::size_t i, Vec2 c) {
  const Vec2 a = p.vertices[i];
  const Vec2 b = p.vertices[(i + 1) % p.vertices.size()];
  Vec2 n = normalized(Vec2{b.y - a.y, a.x - b.x});
  if (dot(n, a - c) < 0.0) n = -1.0 * n;
  return n;
}

inline bool contains(const Polygon& p, Vec2 q) {
  const Vec2 c = centroid(p);
  for (std::size_t i = 0; i < p.vertices.size(); ++i)
    if (dot(edge_normal(p, i, c), q - p.vertices[i]) > 0.0) return false;
  return true;
}

inline Vec2 to_ellipse_frame(const Ellipse& e, Vec2 q) { return rotate(q - e.center, -e.angle); }

inline bool contains(const Ellipse& e, Vec2 q) {
  const Vec2 l = to_ellipse_frame(e, q);
  return (l.x * l.x) / (e.a * e.a) + (l.y * l.y) / (e.b * e.b) <= 1.0;
}

inline bool contains(const Geometry& g, Vec2 q) {
  return std::visit([q](const auto& s) { return contains(s, q); }, g);
}

inline std::optional<Chord> intersect_line(const Polygon& p, Vec2 o, Vec2 dir) {
  const Vec2 c = centroid(p);
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  Vec2 n0, n1;
  for (std::size_t i = 0; i < p.vertices.size(); ++i) {
    const Vec2 n = edge_normal(p, i, c);
    const double num = dot(n, o - p.vertices[i]);
    const double den = dot(n, dir);
    if (den == 0.0) {
      if (num > 0.0) return std::nullopt;
      continue;
    }
    const double t = -num / den;
    if (den < 0.0) {
      if (t > t0) t0 = t, n0 = n;
    } else if (t < t1) {
      t1 = t, n1 = n;
    }
  }
  if (!(t0 < t1)) return std::nullopt;
  return Chord{t0, t1, n0, n1};
}

inline std::optional<Chord> intersect_line(const Ellipse& e, Vec2 o, Vec2 dir) {
  const Vec2 lo = to_ellipse_frame(e, o);
  const Vec2 ld = rotate(dir, -e.angle);
  const double ia = 1.0 / (e.a * e.a), ib = 1.0 / (e.b * e.b);
  const double qa = ld.x * ld.x * ia + ld.y * ld.y * ib;
  const double qb = 2.0 * (lo.x * ld.x * ia + lo.y * ld.y * ib);
  const double qc = lo.x * lo.x * ia + lo.y * lo.y * ib - 1.0;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (!(disc > 0.0)) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = (-qb - sq) / (2.0 * qa);
  const double t1 = (-qb + sq) / (2.0 * qa);
  auto normal_at = [&](double t) {
    const Vec2 p = lo + t * ld;
    return rotate(normalized(Vec2{p.x * ia, p.y * ib}), e.angle);
  };
  return Chord{t0, t1, normal_at(t0), normal_at(t1)};
}

inline std::optional<Chord> intersect_line(const Geometry& g, Vec2 o, Vec2 dir) {
  return std::visit([&](const auto& s) { return intersect_line(s, o, dir); }, g);
}

// Separating-axis test for two convex polygons.
inline bool intersects(const Polygon& a, const Polygon& b) {
  auto separated_along_edges_of = [](const Polygon& p, const Polygon& q) {
    const Vec2 c = centroid(p);
    for (std::size_t i = 0; i < p.vertices.size(); ++i) {
      const Vec2 n = edge_normal(p, i, c);
      const double limit = dot(n, p.vertices[i]);
      bool all_outside = true;
      for (Vec2 v : q.vertices)
        if (dot(n, v) <= limit) {
          all_outside = false;
          break;
        }
      if (all_outside) return true;
    }
    return false;
  };
  return !separated_along_edges_of(a, b) && !separated_along_edges_of(b, a);
}

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + t * ab));
}

// Exact: map the ellipse to the unit circle; the affine image of the polygon stays convex.
inline bool intersects(const Ellipse& e, const Polygon& p) {
  Polygon mapped;
  for (Vec2 v : p.vertices) {
    const Vec2 l = to_ellipse_frame(e, v);
    mapped.vertices.push_back({l.x / e.a, l.y / e.b});
  }
  if (contains(mapped, Vec2{0.0, 0.0})) return true;
  for (std::size_t i = 0; i < mapped.vertices.size(); ++i)
    if (segment_distance({0.0, 0.0}, mapped.vertices[i], mapped.vertices[(i + 1) % mapped.vertices.size()]) <= 1.0)
      return true;
  return false;
}

inline bool intersects(const Geometry& g, const Polygon& p) {
  return std::visit([&p](const auto& s) { return intersects(s, p); }, g);
}

/// Polygon enclosing the shape (ellipses become a circumscribed `segments`-gon).
inline Polygon enclosing_polygon(const Geometry& g, int segments = 48) {
  if (const auto* p = std::get_if<Polygon>(&g)) return *p;
  const auto& e = std::get<Ellipse>(g);
  const double grow = 1.0 / std::cos(std::numbers::pi / segments);
  Polygon out;
  for (int i = 0; i < segments; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / segments;
    out.vertices.push_back(e.center + rotate(Vec2{e.a * grow * std::cos(phi), e.b * grow * std::sin(phi)}, e.angle));
  }
  return out;
}

inline double distance(const Polygon& a, const Polygon& b) {
  if (intersects(a, b)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto sweep = [&best](const Polygon& p, const Polygon& q) {
    for (Vec2 v : p.vertices)
      for (std::size_t i = 0; i < q.vertices.size(); ++i)
        best = std::min(best, segment_distance(v, q.vertices[i], q.vertices[(i + 1) % q.vertices.size()]));
  };
  sweep(a, b);
  sweep(b, a);
  return best;
}

/// Conservative separation between two shapes (never overestimates the true gap).
inline double separation(const Geometry& a, const Geometry& b) {
  return distance(enclosing_polygon(a), enclosing_polygon(b));
}

/// Oriented rectangle: centre, unit axis `along`, half extents.
inline Polygon oriented_rect(Vec2 center, Vec2 along, double half_along, double half_across) {
  const Vec2 across{-along.y, along.x};
  return Polygon{{center - half_along * along - half_across * across, center + half_along * along - half_across * across,
                  center + half_along * along + half_across * across, center - half_along * along + half_across * across}};
}

}  // namespace geometry
}  // namespace ecnn
