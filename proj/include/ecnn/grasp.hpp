#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "ecnn/error.hpp"

namespace ecnn {

/// Maps any finite angle onto the antipodal-canonical range [0, pi).
inline double canonicalize_theta(double theta) {
  if (!std::isfinite(theta)) throw Error(ErrorCode::invalid_argument, "theta must be finite");
  constexpr double pi = std::numbers::pi;
  double r = std::fmod(theta, pi);
  if (r < 0.0) r += pi;
  if (r >= pi) r = 0.0;
  return r;
}

/// Planar grasp on an image: centre (u, v) in pixels, depth d in meters, opening w in pixels,
/// closing direction theta in radians measured clockwise from the image horizontal.
/// Pixel (0, 0) is the top-left corner; u grows rightwards and v downwards.
struct GraspSpec {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
  double w = 1.0;
  double theta = 0.0;

  friend bool operator==(const GraspSpec&, const GraspSpec&) = default;
};

/// Builds a grasp, checking w > 0 and d >= 0 and canonicalising theta.
inline GraspSpec make_grasp(double u, double v, double d, double w, double theta) {
  if (!std::isfinite(u) || !std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "grasp centre must be finite");
  if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::invalid_argument, "grasp width must be > 0");
  if (!(d >= 0.0) || !std::isfinite(d)) throw Error(ErrorCode::invalid_argument, "grasp depth must be >= 0");
  return GraspSpec{u, v, d, w, canonicalize_theta(theta)};
}

struct LabeledGrasp {
  GraspSpec grasp;
  int label = 0;  // 0 or 1

  friend bool operator==(const LabeledGrasp&, const LabeledGrasp&) = default;
};

inline LabeledGrasp make_labeled(const GraspSpec& grasp, int label) {
  if (label != 0 && label != 1) throw Error(ErrorCode::invalid_argument, "grasp label must be 0 or 1");
  return LabeledGrasp{grasp, label};
}

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline constexpr Mat3 kIdentity3{1, 0, 0, 0, 1, 0, 0, 0, 1};

/// Pinhole intrinsics plus the camera -> world rigid transform.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = kIdentity3;
  Vec3 translation{0.0, 0.0, 0.0};

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::invalid_argument, "focal lengths must be positive");
    const auto& r = rotation;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += r[i * 3 + k] * r[j * 3 + k];
        if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-9)
          throw Error(ErrorCode::invalid_argument, "camera rotation is not orthonormal");
      }
    }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    if (std::abs(det - 1.0) > 1e-9) throw Error(ErrorCode::invalid_argument, "camera rotation determinant != +1");
  }
};

struct WorldGrasp {
  Vec3 position{0.0, 0.0, 0.0};
  double width = 0.0;  // meters
  double yaw = 0.0;    // radians about the world vertical
};

/// Back-projects an image grasp through the pinhole model into the world frame.
inline WorldGrasp grasp_to_world(const GraspSpec& grasp, const CameraModel& camera) {
  camera.validate();
  if (!(grasp.d > 0.0)) throw Error(ErrorCode::degenerate_depth, "grasp depth must be > 0 to back-project");
  const Vec3 p_cam{(grasp.u - camera.cx) * grasp.d / camera.fx, (grasp.v - camera.cy) * grasp.d / camera.fy, grasp.d};
  const auto& r = camera.rotation;
  auto rotate = [&r](const Vec3& p) {
    return Vec3{r[0] * p[0] + r[1] * p[1] + r[2] * p[2], r[3] * p[0] + r[4] * p[1] + r[5] * p[2],
                r[6] * p[0] + r[7] * p[1] + r[8] * p[2]};
  };
  WorldGrasp out;
  const Vec3 rotated = rotate(p_cam);
  for (int i = 0; i < 3; ++i) out.position[i] = rotated[i] + camera.translation[i];
  out.width = grasp.w * grasp.d / camera.fx;

  // Closing direction lies in the image plane; its world heading is the yaw.
  const Vec3 dir = rotate(Vec3{std::cos(grasp.theta), std::sin(grasp.theta), 0.0});
  if (std::hypot(dir[0], dir[1]) > 1e-12)
    out.yaw = std::atan2(dir[1], dir[0]);
  else
    out.yaw = grasp.theta + std::atan2(r[3], r[0]);
  return out;
}

}  // namespace ecnn
