#pragma once

// Procedural planar-grasp benchmark: scenes of convex primitives on a table, an orthographic
// RGB-D renderer, a brute-force antipodal ground-truth oracle, a seeded grasp sampler and the
// on-disk formats (scene text, image tensors, grasp rectangles, dataset directories).

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ecnn/detail/binary_io.hpp"
#include "ecnn/detail/geometry.hpp"
#include "ecnn/detail/rng.hpp"
#include "ecnn/error.hpp"
#include "ecnn/grasp.hpp"
#include "ecnn/image.hpp"

namespace ecnn {

using Color = std::array<double, 3>;

struct SceneShape {
  Geometry geometry;  // meters, table frame (x right, y down)
  double height = 0.05;
  Color color{0.1, 0.2, 0.8};
  double mu = 0.5;

  friend bool operator==(const SceneShape&, const SceneShape&) = default;
};

struct RenderConfig {
  std::size_t width = 300;
  std::size_t height = 300;
  double meters_per_pixel = 0.002;
  double table_depth = 0.8;
  Color table_color{0.55, 0.5, 0.45};
  double depth_noise_sigma = 0.0;  // meters; 0 disables noise
  std::uint64_t noise_seed = 0;
  CameraModel camera{};

  friend bool operator==(const RenderConfig& a, const RenderConfig& b) {
    return a.width == b.width && a.height == b.height && a.meters_per_pixel == b.meters_per_pixel &&
           a.table_depth == b.table_depth && a.table_color == b.table_color &&
           a.depth_noise_sigma == b.depth_noise_sigma && a.noise_seed == b.noise_seed && a.camera.fx == b.camera.fx &&
           a.camera.fy == b.camera.fy && a.camera.cx == b.camera.cx && a.camera.cy == b.camera.cy &&
           a.camera.rotation == b.camera.rotation && a.camera.translation == b.camera.translation;
  }
};

/// Overhead camera whose pinhole model reproduces the orthographic pixel scale at table height.
inline CameraModel overhead_camera(const RenderConfig& rc) {
  CameraModel cam;
  cam.fx = cam.fy = rc.table_depth / rc.meters_per_pixel;
  cam.cx = cam.cy = 0.0;
  return cam;
}

struct Scene {
  std::uint64_t id = 0;
  std::vector<SceneShape> shapes;
  double table_extent = 0.6;    // meters, square table
  double plate_length = 0.012;  // gripper jaw plate length, meters
  RenderConfig render;

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Probabilities controlling how often each synthetic expert's blind spot is triggered.
/// Height and contrast regimes are drawn per scene (most shapes of a flagged scene share the
/// regime); anisotropy per shape. All zero yields the base case: one centred, tall, high-contrast box.
struct DifficultyConfig {
  double low_height = 0.3;    // per scene: shapes below the depth experts' sensitivity
  double low_contrast = 0.3;  // per scene: colors close to the table color
  double anisotropic = 0.35;  // per shape: elongated footprint
  double clutter = 0.6;       // chance of each additional neighbouring shape

  bool all_zero() const noexcept {
    return low_height == 0.0 && low_contrast == 0.0 && anisotropic == 0.0 && clutter == 0.0;
  }
  friend bool operator==(const DifficultyConfig&, const DifficultyConfig&) = default;
};

/// Share of shapes in a flagged scene that carry the scene's regime.
inline constexpr double kRegimeShare = 0.8;

// Regime boundaries used both by the generator and by the diagnostics.
inline constexpr double kLowHeightLimit = 0.015;   // meters
inline constexpr double kLowContrastLimit = 0.05;  // RGB euclidean distance to the table color
inline constexpr double kAnisotropyLimit = 2.0;    // footprint aspect ratio

inline double color_distance(const Color& a, const Color& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

/// Footprint aspect ratio (long / short extent).
inline double aspect_ratio(const Geometry& g) {
  if (const auto* e = std::get_if<Ellipse>(&g)) return std::max(e->a, e->b) / std::min(e->a, e->b);
  const auto& p = std::get<Polygon>(g);
  double best = 1.0;
  // Minimum-width direction of a convex polygon is normal to one of its edges.
  const Vec2 c = geometry::centroid(p);
  double min_width = std::numeric_limits<double>::infinity(), max_width = 0.0;
  for (std::size_t i = 0; i < p.vertices.size(); ++i) {
    const Vec2 n = geometry::edge_normal(p, i, c);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    double lo2 = lo, hi2 = hi;
    const Vec2 t{-n.y, n.x};
    for (Vec2 v : p.vertices) {
      lo = std::min(lo, dot(n, v)), hi = std::max(hi, dot(n, v));
      lo2 = std::min(lo2, dot(t, v)), hi2 = std::max(hi2, dot(t, v));
    }
    if (hi - lo < min_width) {
      min_width = hi - lo;
      max_width = hi2 - lo2;
    }
  }
  if (min_width > 0.0) best = std::max(best, max_width / min_width);
  return best;
}

struct ShapeRegimes {
  bool low_height = false;
  bool low_contrast = false;
  bool anisotropic = false;
};

inline ShapeRegimes classify_shape(const SceneShape& s, const RenderConfig& rc) {
  return ShapeRegimes{s.height < kLowHeightLimit, color_distance(s.color, rc.table_color) < kLowContrastLimit,
                      aspect_ratio(s.geometry) >= kAnisotropyLimit};
}

namespace detail {

struct SceneStyle {
  bool low_height = false;
  bool low_contrast = false;
};

inline SceneShape random_shape(Rng& rng, const DifficultyConfig& diff, const SceneStyle& style,
                               const RenderConfig& rc) {
  const double px = rc.meters_per_pixel;
  SceneShape s;
  const double angle = rng.uniform(0.0, std::numbers::pi);
  if (rng.bernoulli(diff.anisotropic)) {
    const double length = rng.uniform(56.0, 80.0) * px;
    const double width = rng.uniform(12.0, 20.0) * px;
    if (rng.bernoulli(0.5)) {
      s.geometry = geometry::oriented_rect({0.0, 0.0}, {std::cos(angle), std::sin(angle)}, length / 2, width / 2);
    } else {
      s.geometry = Ellipse{{0.0, 0.0}, length / 2, width / 2, angle};
    }
  } else if (rng.bernoulli(0.25)) {
    const double side = rng.uniform(16.0, 30.0) * px;
    s.geometry = geometry::oriented_rect({0.0, 0.0}, {std::cos(angle), std::sin(angle)}, side / 2, side / 2);
  } else {
    const double r = rng.uniform(9.0, 18.0) * px;
    s.geometry = Ellipse{{0.0, 0.0}, r * rng.uniform(1.0, 1.12), r, angle};
  }
  const bool low = style.low_height && rng.bernoulli(kRegimeShare);
  s.height = low ? rng.uniform(0.004, 0.012) : rng.uniform(0.03, 0.10);
  if (!low && style.low_contrast && rng.bernoulli(kRegimeShare)) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double z = rng.uniform(-1.0, 1.0);
    const double r = std::sqrt(1.0 - z * z);
    const double mag = rng.uniform(0.005, 0.03);
    const Color dir{r * std::cos(phi), r * std::sin(phi), z};
    for (int k = 0; k < 3; ++k) s.color[k] = std::clamp(rc.table_color[k] + mag * dir[k], 0.0, 1.0);
  } else {
    do {
      for (auto& c : s.color) c = rng.uniform(0.05, 0.95);
    } while (color_distance(s.color, rc.table_color) < 0.35);
  }
  s.mu = rng.uniform(0.45, 0.55);
  return s;
}

inline Geometry translated(const Geometry& g, Vec2 by) {
  if (const auto* e = std::get_if<Ellipse>(&g)) {
    Ellipse out = *e;
    out.center = out.center + by;
    return out;
  }
  Polygon out = std::get<Polygon>(g);
  for (auto& v : out.vertices) v = v + by;
  return out;
}

struct Bounds {
  double x0, y0, x1, y1;
};

inline Bounds bounds(const Geometry& g) {
  const Polygon p = geometry::enclosing_polygon(g, 32);
  Bounds b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (Vec2 v : p.vertices) b = {std::min(b.x0, v.x), std::min(b.y0, v.y), std::max(b.x1, v.x), std::max(b.y1, v.y)};
  return b;
}

}  // namespace detail

/// Deterministic scene from a seed. Shapes beyond the first are placed a few pixels away from an
/// existing shape so that jaw-sweep collisions occur.
inline Scene generate_scene(std::uint64_t seed, const DifficultyConfig& difficulty = {}) {
  Scene scene;
  scene.id = seed;
  scene.table_extent = static_cast<double>(scene.render.width) * scene.render.meters_per_pixel;
  const RenderConfig& rc = scene.render;
  scene.render.camera = overhead_camera(rc);
  const double px = rc.meters_per_pixel;
  const Vec2 middle{(static_cast<double>(rc.width) - 1.0) / 2.0 * px, (static_cast<double>(rc.height) - 1.0) / 2.0 * px};

  if (difficulty.all_zero()) {
    SceneShape box;
    box.geometry = geometry::oriented_rect(middle, {1.0, 0.0}, 14.0 * px, 14.0 * px);
    box.height = 0.06;
    box.color = {0.1, 0.2, 0.8};
    box.mu = 0.5;
    scene.shapes.push_back(box);
    return scene;
  }

  detail::Rng rng(detail::derive_seed(seed, 1));
  detail::SceneStyle style;
  style.low_height = rng.bernoulli(difficulty.low_height);
  style.low_contrast = rng.bernoulli(difficulty.low_contrast);
  std::size_t count = 1;
  if (rng.bernoulli(difficulty.clutter)) {
    ++count;
    if (rng.bernoulli(difficulty.clutter)) ++count;
  }
  const double margin = 40.0 * px;
  const double limit_lo = margin;
  const double limit_hi_x = static_cast<double>(rc.width) * px - margin;
  const double limit_hi_y = static_cast<double>(rc.height) * px - margin;

  for (std::size_t k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      SceneShape s = detail::random_shape(rng, difficulty, style, rc);
      Vec2 at;
      if (scene.shapes.empty()) {
        at = middle + Vec2{rng.uniform(-40.0, 40.0) * px, rng.uniform(-40.0, 40.0) * px};
        s.geometry = detail::translated(s.geometry, at);
      } else {
        const auto& anchor = scene.shapes[rng.below(scene.shapes.size())];
        const Vec2 from = geometry::centroid(anchor.geometry);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const Vec2 dir{std::cos(phi), std::sin(phi)};
        const double gap = rng.uniform(3.0, 16.0) * px;
        // March outwards until the requested gap to the anchor is reached.
        Geometry moved = s.geometry;
        for (double dist = 0.0; dist < 0.3; dist += px) {
          moved = detail::translated(s.geometry, from + dist * dir);
          if (geometry::separation(moved, anchor.geometry) >= gap) break;
        }
        s.geometry = moved;
      }
      const auto b = detail::bounds(s.geometry);
      if (b.x0 < limit_lo || b.y0 < limit_lo || b.x1 > limit_hi_x || b.y1 > limit_hi_y) continue;
      bool clear = true;
      for (const auto& other : scene.shapes)
        if (geometry::separation(s.geometry, other.geometry) < 2.0 * px) {
          clear = false;
          break;
        }
      if (!clear) continue;
      scene.shapes.push_back(std::move(s));
      placed = true;
    }
    if (!placed) {
      if (scene.shapes.empty())
        throw Error(ErrorCode::generation, "could not place a shape for seed " + std::to_string(seed));
      break;  // fewer neighbours is acceptable; the first shape always exists
    }
  }
  return scene;
}

/// Orthographic overhead RGB-D render. Pixel (i, j) samples the table point (i, j) * meters_per_pixel.
inline Image render(const Scene& scene) {
  const RenderConfig& rc = scene.render;
  const std::size_t w = rc.width, h = rc.height;
  std::vector<double> data(w * h * 4);
  std::vector<detail::Bounds> boxes;
  for (const auto& s : scene.shapes) boxes.push_back(detail::bounds(s.geometry));
  for (std::size_t j = 0; j < h; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      const Vec2 p{static_cast<double>(i) * rc.meters_per_pixel, static_cast<double>(j) * rc.meters_per_pixel};
      Color color = rc.table_color;
      double depth = rc.table_depth;
      for (std::size_t k = 0; k < scene.shapes.size(); ++k) {
        const auto& b = boxes[k];
        if (p.x < b.x0 || p.x > b.x1 || p.y < b.y0 || p.y > b.y1) continue;
        if (geometry::contains(scene.shapes[k].geometry, p)) {
          color = scene.shapes[k].color;
          depth = rc.table_depth - scene.shapes[k].height;
          break;
        }
      }
      double* px = &data[(j * w + i) * 4];
      px[0] = color[0], px[1] = color[1], px[2] = color[2], px[3] = depth;
    }
  }
  if (rc.depth_noise_sigma > 0.0) {
    detail::Rng rng(detail::derive_seed(rc.noise_seed, scene.id));
    for (std::size_t p = 0; p < w * h; ++p)
      data[p * 4 + 3] = std::max(0.0, data[p * 4 + 3] + rc.depth_noise_sigma * rng.normal());
  }
  return Image(w, h, ChannelSet::rgbd(), std::move(data));
}

// ---------------------------------------------------------------------------------------------
// Ground truth

enum class OracleVerdict {
  success,
  no_contact,       // closing line misses every shape within the jaw span
  multiple_shapes,  // contacts would lie on different shapes
  too_wide,         // object extends past a jaw
  slips,            // a contact normal lies outside its friction cone
  jaw_collision,    // a jaw sweeps through another shape
};

/// Full oracle evaluation. Uses `theta` as given (no canonicalisation).
inline OracleVerdict oracle_verdict(const Scene& scene, const GraspSpec& grasp) {
  const RenderConfig& rc = scene.render;
  if (!(grasp.u >= 0.0 && grasp.v >= 0.0 && grasp.u <= static_cast<double>(rc.width) - 1.0 &&
        grasp.v <= static_cast<double>(rc.height) - 1.0))
    throw Error(ErrorCode::out_of_bounds, "grasp centre outside the image");
  if (!(grasp.w > 0.0)) throw Error(ErrorCode::invalid_argument, "grasp width must be > 0");

  const double px = rc.meters_per_pixel;
  const Vec2 o{grasp.u * px, grasp.v * px};
  const Vec2 dir{std::cos(grasp.theta), std::sin(grasp.theta)};
  const double half = grasp.w * px / 2.0;

  std::optional<std::size_t> target;
  Chord chord;
  for (std::size_t k = 0; k < scene.shapes.size(); ++k) {
    const auto c = geometry::intersect_line(scene.shapes[k].geometry, o, dir);
    if (!c || c->t1 <= -half || c->t0 >= half) continue;
    if (target) return OracleVerdict::multiple_shapes;
    target = k;
    chord = *c;
  }
  if (!target) return OracleVerdict::no_contact;
  if (chord.t0 < -half || chord.t1 > half) return OracleVerdict::too_wide;

  const double cone = std::atan(scene.shapes[*target].mu);
  auto angle = [](Vec2 a, Vec2 b) { return std::acos(std::clamp(dot(a, b), -1.0, 1.0)); };
  if (angle(chord.n0, -1.0 * dir) > cone || angle(chord.n1, dir) > cone) return OracleVerdict::slips;

  const double plate_half = scene.plate_length / 2.0;
  const Polygon sweep_a = geometry::oriented_rect(o + (0.5 * (chord.t0 - half)) * dir, dir, 0.5 * (chord.t0 + half), plate_half);
  const Polygon sweep_b = geometry::oriented_rect(o + (0.5 * (chord.t1 + half)) * dir, dir, 0.5 * (half - chord.t1), plate_half);
  for (std::size_t k = 0; k < scene.shapes.size(); ++k) {
    if (k == *target) continue;
    if (geometry::intersects(scene.shapes[k].geometry, sweep_a) ||
        geometry::intersects(scene.shapes[k].geometry, sweep_b))
      return OracleVerdict::jaw_collision;
  }
  return OracleVerdict::success;
}

/// Antipodal force-closure ground truth: 1 iff both contacts lie on one shape within the jaw
/// span, both normals are inside the friction cone atan(mu) and neither jaw sweeps another shape.
inline int oracle_quality(const Scene& scene, const GraspSpec& grasp) {
  return oracle_verdict(scene, grasp) == OracleVerdict::success ? 1 : 0;
}

inline double depth_at(const Image& image, double u, double v) {
  const long x = std::clamp<long>(detail::nearest_index(u), 0, static_cast<long>(image.width()) - 1);
  const long y = std::clamp<long>(detail::nearest_index(v), 0, static_cast<long>(image.height()) - 1);
  return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), Channel::D);
}

/// Seeded rejection sampler. Returns exactly round(count * positive_fraction) positives followed
/// by the negatives; d is read from the rendered depth at the grasp centre.
inline std::vector<LabeledGrasp> sample_grasps(const Scene& scene, const Image& image, std::size_t count,
                                               std::uint64_t seed, double positive_fraction = 0.5) {
  if (count == 0) throw Error(ErrorCode::invalid_argument, "grasp count must be >= 1");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
    throw Error(ErrorCode::invalid_argument, "positive fraction must be in [0, 1]");
  if (scene.shapes.empty()) throw Error(ErrorCode::invalid_argument, "scene has no shapes");

  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(count) * positive_fraction));
  const std::size_t n_neg = count - n_pos;
  const RenderConfig& rc = scene.render;
  const double px = rc.meters_per_pixel;
  detail::Rng rng(detail::derive_seed(seed, 7));
  std::vector<LabeledGrasp> pos, neg;
  const std::size_t max_attempts = 400 * count + 1000;

  for (std::size_t attempt = 0; attempt < max_attempts && (pos.size() < n_pos || neg.size() < n_neg); ++attempt) {
    const std::size_t pick = rng.below(scene.shapes.size());
    const auto& shape = scene.shapes[pick];
    // Bridging proposals close towards a neighbour so that jaw collisions are well represented.
    std::optional<std::size_t> toward;
    if (scene.shapes.size() > 1 && rng.bernoulli(0.35)) {
      const std::size_t other = rng.below(scene.shapes.size() - 1);
      toward = other < pick ? other : other + 1;
    }
    const auto b = detail::bounds(shape.geometry);
    Vec2 p = geometry::centroid(shape.geometry);
    if (rng.bernoulli(0.85)) {
      for (int tries = 0; tries < 50; ++tries) {
        const Vec2 q{rng.uniform(b.x0, b.x1), rng.uniform(b.y0, b.y1)};
        if (geometry::contains(shape.geometry, q)) {
          p = q;
          break;
        }
      }
    } else {
      const double r = 25.0 * px * std::sqrt(rng.uniform());
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      p = p + Vec2{r * std::cos(phi), r * std::sin(phi)};
    }
    const double u = std::clamp(p.x / px, 0.0, static_cast<double>(rc.width) - 1.0);
    const double v = std::clamp(p.y / px, 0.0, static_cast<double>(rc.height) - 1.0);
    double theta = rng.uniform(0.0, std::numbers::pi);
    if (toward) {
      const Vec2 to = geometry::centroid(scene.shapes[*toward].geometry) - geometry::centroid(shape.geometry);
      theta = std::atan2(to.y, to.x) + rng.uniform(-0.25, 0.25);
    }
    const auto chord = geometry::intersect_line(shape.geometry, {u * px, v * px}, {std::cos(theta), std::sin(theta)});
    double w;
    if (chord) {
      const double extent = 2.0 * std::max(std::abs(chord->t0), std::abs(chord->t1)) / px;
      const double slack = toward ? rng.uniform(2.0, 40.0) : rng.uniform(2.0, 20.0);
      w = rng.bernoulli(0.85) ? extent + slack : std::max(4.0, extent * rng.uniform(0.5, 0.95));
    } else {
      w = rng.uniform(10.0, 60.0);
    }
    const GraspSpec g = make_grasp(u, v, depth_at(image, u, v), w, theta);
    const int label = oracle_quality(scene, g);
    if (label == 1 && pos.size() < n_pos) pos.push_back({g, 1});
    if (label == 0 && neg.size() < n_neg) neg.push_back({g, 0});
  }
  if (pos.size() < n_pos || neg.size() < n_neg)
    throw Error(ErrorCode::sampling, "positive fraction " + std::to_string(positive_fraction) +
                                         " unreachable for scene " + std::to_string(scene.id));
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

// ---------------------------------------------------------------------------------------------
// Grasp rectangles
//
// Four "x y" lines per rectangle. Corner 1 -> 2 spans the gripper opening (length w along the
// closing direction), corners 2 -> 3 and 4 -> 1 are the jaw plates. Positives and negatives live
// in sibling files "<stem>pos.txt" and "<stem>neg.txt".

struct RectangleGrasp {
  double u = 0.0;
  double v = 0.0;
  double w = 1.0;
  double theta = 0.0;
  int label = 0;
};

inline std::array<Vec2, 4> rectangle_corners(double u, double v, double w, double theta, double plate_length) {
  const Vec2 c{u, v};
  const Vec2 a{std::cos(theta), std::sin(theta)};
  const Vec2 p{-a.y, a.x};
  const double hw = w / 2.0, hp = plate_length / 2.0;
  return {c - hw * a - hp * p, c + hw * a - hp * p, c + hw * a + hp * p, c - hw * a + hp * p};
}

inline RectangleGrasp rectangle_from_corners(const std::array<Vec2, 4>& k, int label) {
  RectangleGrasp r;
  r.u = (k[0].x + k[1].x + k[2].x + k[3].x) / 4.0;
  r.v = (k[0].y + k[1].y + k[2].y + k[3].y) / 4.0;
  const Vec2 plate = k[2] - k[1];
  r.theta = canonicalize_theta(std::atan2(plate.y, plate.x) + std::numbers::pi / 2.0);
  const Vec2 m1 = 0.5 * (k[1] + k[2]);
  const Vec2 m2 = 0.5 * (k[3] + k[0]);
  r.w = norm(m1 - m2);
  r.label = label;
  return r;
}

inline std::vector<RectangleGrasp> read_rectangle_file(const std::filesystem::path& path, int label) {
  std::ifstream in(path);
  if (!in) return {};
  std::vector<Vec2> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Vec2 q;
    std::string rest;
    if (!(ss >> q.x >> q.y) || (ss >> rest) || !std::isfinite(q.x) || !std::isfinite(q.y))
      throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": malformed corner line");
    points.push_back(q);
  }
  if (points.size() % 4 != 0)
    throw Error(ErrorCode::format, path.string() + ": corner count " + std::to_string(points.size()) +
                                       " is not a multiple of 4");
  std::vector<RectangleGrasp> out;
  for (std::size_t i = 0; i < points.size(); i += 4)
    out.push_back(rectangle_from_corners({points[i], points[i + 1], points[i + 2], points[i + 3]}, label));
  return out;
}

/// Writes "<stem>pos.txt" and "<stem>neg.txt".
inline void write_rectangles(const std::vector<LabeledGrasp>& grasps, const std::filesystem::path& stem,
                             double plate_length_px = 6.0) {
  const auto base = stem.string();
  std::ofstream pos(base + "pos.txt"), neg(base + "neg.txt");
  if (!pos || !neg) throw Error(ErrorCode::io, "cannot write rectangles at " + base);
  char buf[96];
  for (const auto& g : grasps) {
    auto& out = g.label == 1 ? pos : neg;
    for (const Vec2& k : rectangle_corners(g.grasp.u, g.grasp.v, g.grasp.w, g.grasp.theta, plate_length_px)) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g\n", k.x, k.y);
      out << buf;
    }
  }
  if (!pos || !neg) throw Error(ErrorCode::io, "write failed at " + base);
}

/// Reads both sibling files; positives first.
inline std::vector<RectangleGrasp> read_rectangles(const std::filesystem::path& stem) {
  const auto base = stem.string();
  auto out = read_rectangle_file(base + "pos.txt", 1);
  auto neg = read_rectangle_file(base + "neg.txt", 0);
  out.insert(out.end(), neg.begin(), neg.end());
  return out;
}

// ---------------------------------------------------------------------------------------------
// Image tensors: "ECNNIMG0", width u32, height u32, channel count u32, one tag byte per channel,
// then width * height * channels little-endian f64 samples.

inline void write_image(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write("ECNNIMG0", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(image.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(image.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(image.channel_count()));
  for (Channel c : image.channels().list()) detail::put_u8(out, static_cast<std::uint8_t>(channel_name(c)));
  for (double v : image.data()) detail::put_f64(out, v);
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  detail::expect_magic(in, "ECNNIMG0", "image");
  const std::uint32_t w = detail::get_u32(in, "image width");
  const std::uint32_t h = detail::get_u32(in, "image height");
  const std::uint32_t n = detail::get_u32(in, "image channels");
  if (n == 0 || n > 4 || w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1ull << 28))
    throw Error(ErrorCode::format, "implausible image header in " + path.string());
  std::string tags;
  for (std::uint32_t i = 0; i < n; ++i) tags.push_back(static_cast<char>(detail::get_u8(in, "channel tag")));
  const ChannelSet channels = ChannelSet::parse(tags);
  if (channels.size() != n || channels.to_string() != tags)
    throw Error(ErrorCode::format, "channel tags must be unique and ordered RGBD");
  std::vector<double> data(static_cast<std::size_t>(w) * h * n);
  for (double& v : data) v = detail::get_f64(in, "image data");
  return Image(w, h, channels, std::move(data));
}

// ---------------------------------------------------------------------------------------------
// Scene files (one "key values..." record per line)

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string scene_to_text(const Scene& scene) {
  using detail::fmt;
  const auto& rc = scene.render;
  std::ostringstream out;
  out << "ecnn-scene 1\n";
  out << "id " << scene.id << "\n";
  out << "table_extent " << fmt(scene.table_extent) << "\n";
  out << "plate_length " << fmt(scene.plate_length) << "\n";
  out << "image_size " << rc.width << " " << rc.height << "\n";
  out << "meters_per_pixel " << fmt(rc.meters_per_pixel) << "\n";
  out << "table_depth " << fmt(rc.table_depth) << "\n";
  out << "table_color " << fmt(rc.table_color[0]) << " " << fmt(rc.table_color[1]) << " " << fmt(rc.table_color[2])
      << "\n";
  out << "depth_noise " << fmt(rc.depth_noise_sigma) << " " << rc.noise_seed << "\n";
  out << "camera " << fmt(rc.camera.fx) << " " << fmt(rc.camera.fy) << " " << fmt(rc.camera.cx) << " "
      << fmt(rc.camera.cy);
  for (double r : rc.camera.rotation) out << " " << fmt(r);
  for (double t : rc.camera.translation) out << " " << fmt(t);
  out << "\n";
  out << "shapes " << scene.shapes.size() << "\n";
  for (const auto& s : scene.shapes) {
    out << "shape height " << fmt(s.height) << " color " << fmt(s.color[0]) << " " << fmt(s.color[1]) << " "
        << fmt(s.color[2]) << " mu " << fmt(s.mu);
    if (const auto* e = std::get_if<Ellipse>(&s.geometry)) {
      out << " ellipse " << fmt(e->center.x) << " " << fmt(e->center.y) << " " << fmt(e->a) << " " << fmt(e->b) << " "
          << fmt(e->angle);
    } else {
      const auto& p = std::get<Polygon>(s.geometry);
      out << " polygon " << p.vertices.size();
      for (Vec2 v : p.vertices) out << " " << fmt(v.x) << " " << fmt(v.y);
    }
    out << "\n";
  }
  return out.str();
}

inline Scene scene_from_text(const std::string& text) {
  std::istringstream in(text);
  auto fail = [](const std::string& why) -> Error { return Error(ErrorCode::format, "scene file: " + why); };
  std::string key;
  int version = 0;
  if (!(in >> key >> version) || key != "ecnn-scene" || version != 1) throw fail("bad header");
  Scene scene;
  auto& rc = scene.render;
  std::size_t declared = 0;
  bool have_shapes = false;
  while (in >> key) {
    if (key == "id") {
      in >> scene.id;
    } else if (key == "table_extent") {
      in >> scene.table_extent;
    } else if (key == "plate_length") {
      in >> scene.plate_length;
    } else if (key == "image_size") {
      in >> rc.width >> rc.height;
    } else if (key == "meters_per_pixel") {
      in >> rc.meters_per_pixel;
    } else if (key == "table_depth") {
      in >> rc.table_depth;
    } else if (key == "table_color") {
      in >> rc.table_color[0] >> rc.table_color[1] >> rc.table_color[2];
    } else if (key == "depth_noise") {
      in >> rc.depth_noise_sigma >> rc.noise_seed;
    } else if (key == "camera") {
      in >> rc.camera.fx >> rc.camera.fy >> rc.camera.cx >> rc.camera.cy;
      for (double& r : rc.camera.rotation) in >> r;
      for (double& t : rc.camera.translation) in >> t;
    } else if (key == "shapes") {
      in >> declared;
      have_shapes = true;
    } else if (key == "shape") {
      SceneShape s;
      std::string tag;
      in >> tag >> s.height;
      if (tag != "height") throw fail("expected height");
      in >> tag >> s.color[0] >> s.color[1] >> s.color[2];
      if (tag != "color") throw fail("expected color");
      in >> tag >> s.mu;
      if (tag != "mu") throw fail("expected mu");
      in >> tag;
      if (tag == "ellipse") {
        Ellipse e;
        in >> e.center.x >> e.center.y >> e.a >> e.b >> e.angle;
        s.geometry = e;
      } else if (tag == "polygon") {
        std::size_t n = 0;
        in >> n;
        if (n < 3 || n > 1024) throw fail("bad polygon vertex count");
        Polygon p;
        p.vertices.resize(n);
        for (auto& v : p.vertices) in >> v.x >> v.y;
        s.geometry = p;
      } else {
        throw fail("unknown shape kind '" + tag + "'");
      }
      scene.shapes.push_back(std::move(s));
    } else {
      throw fail("unknown key '" + key + "'");
    }
    if (in.fail()) throw fail("malformed value for '" + key + "'");
  }
  if (!have_shapes || declared != scene.shapes.size()) throw fail("shape count mismatch");
  if (scene.shapes.empty()) throw fail("scene needs at least one shape");
  for (const auto& s : scene.shapes)
    if (!(s.height > 0.0) || !(s.mu > 0.0)) throw fail("shape height and mu must be positive");
  return scene;
}

inline void write_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << scene_to_text(scene);
}

inline Scene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_text(ss.str());
}

// ---------------------------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::size_t scenes = 200;
  std::size_t grasps_per_scene = 50;
  double positive_fraction = 0.5;
  double depth_noise_sigma = 0.0;
  DifficultyConfig difficulty{};
};

struct SceneEntry {
  Scene scene;
  Image image;
  std::vector<LabeledGrasp> grasps;
};

struct GraspDataset {
  DatasetConfig config;
  std::vector<SceneEntry> scenes;

  std::size_t grasp_count() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.grasps.size();
    return n;
  }
};

namespace detail {

/// Runs body(i) for i in [0, n) on up to `jobs` threads; each index is handled exactly once.
template <class Body>
void parallel_for(std::size_t n, std::size_t jobs, Body&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < jobs; ++t)
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += jobs) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline SceneEntry make_scene_entry(const DatasetConfig& config, std::size_t index) {
  SceneEntry entry;
  entry.scene = generate_scene(detail::derive_seed(config.seed, 1000 + index), config.difficulty);
  entry.scene.id = index;
  entry.scene.render.depth_noise_sigma = config.depth_noise_sigma;
  entry.scene.render.noise_seed = config.seed;
  entry.image = render(entry.scene);
  entry.grasps = sample_grasps(entry.scene, entry.image, config.grasps_per_scene,
                               detail::derive_seed(config.seed, 2'000'000 + index), config.positive_fraction);
  return entry;
}

/// Deterministic in `config`; scenes are independent so `jobs` only changes wall time.
inline GraspDataset generate_dataset(const DatasetConfig& config, std::size_t jobs = 1) {
  if (config.scenes == 0) throw Error(ErrorCode::invalid_argument, "dataset needs at least one scene");
  GraspDataset ds;
  ds.config = config;
  ds.scenes.resize(config.scenes);
  detail::parallel_for(config.scenes, jobs, [&](std::size_t i) { ds.scenes[i] = make_scene_entry(config, i); });
  return ds;
}

inline std::string dataset_config_text(const DatasetConfig& c) {
  using detail::fmt;
  std::ostringstream out;
  out << "ecnn-dataset 1\n";
  out << "seed " << c.seed << "\n";
  out << "scenes " << c.scenes << "\n";
  out << "grasps_per_scene " << c.grasps_per_scene << "\n";
  out << "positive_fraction " << fmt(c.positive_fraction) << "\n";
  out << "depth_noise " << fmt(c.depth_noise_sigma) << "\n";
  out << "difficulty " << fmt(c.difficulty.low_height) << " " << fmt(c.difficulty.low_contrast) << " "
      << fmt(c.difficulty.anisotropic) << " " << fmt(c.difficulty.clutter) << "\n";
  return out.str();
}

inline DatasetConfig dataset_config_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string key;
  int version = 0;
  if (!(in >> key >> version) || key != "ecnn-dataset" || version != 1)
    throw Error(ErrorCode::format, "dataset manifest: bad header");
  DatasetConfig c;
  while (in >> key) {
    if (key == "seed") in >> c.seed;
    else if (key == "scenes") in >> c.scenes;
    else if (key == "grasps_per_scene") in >> c.grasps_per_scene;
    else if (key == "positive_fraction") in >> c.positive_fraction;
    else if (key == "depth_noise") in >> c.depth_noise_sigma;
    else if (key == "difficulty")
      in >> c.difficulty.low_height >> c.difficulty.low_contrast >> c.difficulty.anisotropic >> c.difficulty.clutter;
    else {
      std::string rest;
      std::getline(in, rest);  // free-form echo lines are ignored
    }
    if (in.fail()) throw Error(ErrorCode::format, "dataset manifest: malformed '" + key + "'");
  }
  return c;
}

inline std::string scene_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06zu", index);
  return buf;
}

/// Layout: dataset.txt, scenes/<stem>.txt, images/<stem>.img, rects/<stem>{pos,neg}.txt
inline void save_dataset(const GraspDataset& ds, const std::filesystem::path& dir, const std::string& echo = "") {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scenes");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "rects");
  {
    std::ofstream out(dir / "dataset.txt");
    if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "dataset.txt").string());
    out << dataset_config_text(ds.config);
    if (!echo.empty()) out << "command " << echo << "\n";
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const auto stem = scene_stem(i);
    write_scene(ds.scenes[i].scene, dir / "scenes" / (stem + ".txt"));
    write_image(ds.scenes[i].image, dir / "images" / (stem + ".img"));
    write_rectangles(ds.scenes[i].grasps, dir / "rects" / stem);
  }
}

inline GraspDataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "dataset directory not found: " + dir.string());
  GraspDataset ds;
  {
    std::ifstream in(dir / "dataset.txt");
    if (!in) throw Error(ErrorCode::io, "missing " + (dir / "dataset.txt").string());
    std::stringstream ss;
    ss << in.rdbuf();
    ds.config = dataset_config_from_text(ss.str());
  }
  for (std::size_t i = 0; i < ds.config.scenes; ++i) {
    const auto stem = scene_stem(i);
    SceneEntry e;
    e.scene = read_scene(dir / "scenes" / (stem + ".txt"));
    e.image = read_image(dir / "images" / (stem + ".img"));
    for (const auto& r : read_rectangles(dir / "rects" / stem))
      e.grasps.push_back({make_grasp(r.u, r.v, depth_at(e.image, r.u, r.v), r.w, r.theta), r.label});
    ds.scenes.push_back(std::move(e));
  }
  return ds;
}

}  // namespace ecnn
