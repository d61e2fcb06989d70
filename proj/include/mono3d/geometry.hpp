#pragma once
// Yaw-box parameterization, object<->camera transforms and the pinhole model.
//
// Conventions (every other module imports these):
//  - Camera frame: x right, y down, z forward (KITTI).
//  - yaw rotates about the camera +Y axis, with
//      RotY(r) = [[cos r, 0, sin r], [0, 1, 0], [-sin r, 0, cos r]],
//    matching KITTI rotation_y. Angles live in (-pi, pi].
//  - An object occupies [-1,1]^3 in its normalized frame. The object->camera
//    map is P = RotY(yaw) * diag(w/2, h/2, l/2) * p + center: scale first,
//    then rotate, so the unit cube maps to a rigid w x h x l box.
//  - Pixel (ix, iy) covers [ix, ix+1) x [iy, iy+1) in image coordinates; the
//    ray of a pixel passes through its center (ix + 0.5, iy + 0.5).

#include <array>
#include <optional>

#include <Eigen/Dense>

#include "mono3d/common.hpp"

namespace mono3d {

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_in, double fy_in, double cx_in, double cy_in)
      : fx(fx_in), fy(fy_in), cx(cx_in), cy(cy_in) {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
        !std::isfinite(cx) || !std::isfinite(cy)) {
      throw InvalidInputError("CameraIntrinsics: focal lengths must be positive and finite");
    }
  }
};

// Object extents in meters: width (x), height (y), length (z).
struct Dimensions {
  double w = 1.0, h = 1.0, l = 1.0;

  Dimensions() = default;
  Dimensions(double w_in, double h_in, double l_in) : w(w_in), h(h_in), l(l_in) {
    if (!(w > 0.0) || !(h > 0.0) || !(l > 0.0) || !std::isfinite(w) ||
        !std::isfinite(h) || !std::isfinite(l)) {
      throw InvalidInputError("Dimensions: w, h, l must be positive and finite");
    }
  }
};

struct ObjectPose {
  double yaw = 0.0;                                   // radians, (-pi, pi]
  Eigen::Vector3d center = Eigen::Vector3d::Zero();   // camera frame, meters

  ObjectPose() = default;
  ObjectPose(double yaw_in, const Eigen::Vector3d& center_in)
      : yaw(wrap_angle(yaw_in)), center(center_in) {
    if (!center.allFinite()) throw InvalidInputError("ObjectPose: non-finite center");
  }
};

struct Box3D {
  ObjectPose pose;
  Dimensions dims;
  int class_id = 0;
};

// Continuous image coordinates (pixels).
struct PixelPoint {
  double u = 0.0, v = 0.0;
};

inline Eigen::Matrix3d rotation_y(double yaw) {
  if (!std::isfinite(yaw)) throw InvalidInputError("rotation_y: non-finite yaw");
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, 0.0, s,
       0.0, 1.0, 0.0,
      -s, 0.0, c;
  return r;
}

// Object->camera rotation/scale: RotY(yaw) * diag(w/2, h/2, l/2).
inline Eigen::Matrix3d rotation_scale_matrix(double yaw, const Dimensions& dims) {
  return rotation_y(yaw) *
         Eigen::Vector3d(dims.w / 2.0, dims.h / 2.0, dims.l / 2.0).asDiagonal();
}

inline Eigen::Vector3d object_to_camera(const Eigen::Vector3d& p_obj, const Box3D& box) {
  return rotation_scale_matrix(box.pose.yaw, box.dims) * p_obj + box.pose.center;
}

// Exact inverse of object_to_camera.
inline Eigen::Vector3d camera_to_object(const Eigen::Vector3d& p_cam, const Box3D& box) {
  const Eigen::Vector3d d = rotation_y(box.pose.yaw).transpose() * (p_cam - box.pose.center);
  return {d.x() / (box.dims.w / 2.0), d.y() / (box.dims.h / 2.0),
          d.z() / (box.dims.l / 2.0)};
}

// Pinhole projection; nullopt when the point is at or behind the camera plane.
inline std::optional<PixelPoint> try_project(const CameraIntrinsics& K,
                                             const Eigen::Vector3d& p) {
  if (!(p.z() > kMinDepth)) return std::nullopt;
  return PixelPoint{K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

inline PixelPoint project(const CameraIntrinsics& K, const Eigen::Vector3d& p) {
  if (auto px = try_project(K, p)) return *px;
  throw BehindCameraError("project: point at or behind the camera plane");
}

inline Eigen::Vector3d backproject(const CameraIntrinsics& K, PixelPoint p, double z) {
  if (!(z > kMinDepth)) throw InvalidInputError("backproject: depth must exceed kMinDepth");
  return {(p.u - K.cx) * z / K.fx, (p.v - K.cy) * z / K.fy, z};
}

// Object-frame corner signs, lexicographic over (x, y, z) with -1 before +1.
// Corners i and j share an edge iff their signs differ in exactly one axis.
inline constexpr std::array<std::array<int, 3>, 8> kCornerSigns = {{
    {-1, -1, -1}, {-1, -1, +1}, {-1, +1, -1}, {-1, +1, +1},
    {+1, -1, -1}, {+1, -1, +1}, {+1, +1, -1}, {+1, +1, +1}}};

inline std::array<Eigen::Vector3d, 8> box_corners(const Box3D& box) {
  const Eigen::Matrix3d rs = rotation_scale_matrix(box.pose.yaw, box.dims);
  std::array<Eigen::Vector3d, 8> out;
  for (std::size_t i = 0; i < kCornerSigns.size(); ++i) {
    const auto& s = kCornerSigns[i];
    out[i] = rs * Eigen::Vector3d(s[0], s[1], s[2]) + box.pose.center;
  }
  return out;
}

// ROI-relative coordinate normalization: ((u - u0)/W, (v - v0)/H).
inline Eigen::Vector2d normalize_pixel(PixelPoint p, PixelPoint center,
                                       double roi_w, double roi_h) {
  if (!(roi_w > 0.0) || !(roi_h > 0.0)) {
    throw InvalidInputError("normalize_pixel: ROI must have positive size");
  }
  return {(p.u - center.u) / roi_w, (p.v - center.v) / roi_h};
}

// Slides the box center along the ray through its projected center to depth z.
// Dimensions and yaw are untouched; this is the 1-DoF depth parameterization
// used by the profilers, solvers and the cost volume.
inline Box3D box_at_depth(const Box3D& box, const CameraIntrinsics& K, double z) {
  const PixelPoint c = project(K, box.pose.center);
  Box3D out = box;
  out.pose.center = backproject(K, c, z);
  return out;
}

}  // namespace mono3d
