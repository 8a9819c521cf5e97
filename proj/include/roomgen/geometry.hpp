#pragma once

#include <Eigen/Dense>
#include <vector>

#include "roomgen/errors.hpp"

namespace roomgen {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

// World frame is right-handed: x forward, y up, z right. The camera local
// frame uses the same axis roles, so a world-from-camera rotation maps
// local (1,0,0) to the camera's forward axis.

// Pinhole intrinsics. half_fov is the HALF horizontal field of view; the
// focal length follows from (width/2) / tan(half_fov). Square pixels,
// principal point at the image center, zero skew.
struct Intrinsics {
  double half_fov = 0.0;  // radians, in (0, pi/2)
  int width = 0;
  int height = 0;

  double focal() const { return (width / 2.0) / std::tan(half_fov); }
  double cx() const { return width / 2.0; }
  double cy() const { return height / 2.0; }
  Intrinsics with_size(int w, int h) const { return {half_fov, w, h}; }
};

struct CameraPose {
  Matrix3d rotation = Matrix3d::Identity();  // world-from-camera
  Vector3d position = Vector3d::Zero();      // meters
  Intrinsics intrinsics;

  Vector3d forward() const { return rotation.col(0); }
  Vector3d up() const { return rotation.col(1); }
  Vector3d right() const { return rotation.col(2); }
};

bool is_rotation_matrix(const Matrix3d& r, double tol = 1e-9);
void validate_pose(const CameraPose& pose);

// Rotation with the forward axis at the given azimuth (yaw, positive
// toward +z / turning right) and elevation (pitch, positive up), roll 0.
Matrix3d rotation_from_yaw_pitch(double yaw, double pitch);

// Direction through continuous pixel coords (u, v); pixel (i, j) has its
// center at (i + 0.5, j + 0.5). Unit length, world frame.
Vector3d pixel_ray_direction(const CameraPose& pose, double u, double v);

struct RaySet {
  Vector3d origin;
  int width = 0;
  int height = 0;
  std::vector<Vector3d> directions;  // row-major, one per pixel center
};

RaySet generate_rays(const CameraPose& pose);

// Projects a world-space direction into a camera. Returns false when the
// direction is behind the camera (non-positive forward component).
bool project_direction(const CameraPose& pose, const Vector3d& dir_world, Vector2d* uv);

// Per-source-pixel target coordinates under the pure-rotation relation
// between two cameras sharing a center.
struct CorrespondenceMap {
  struct Entry {
    double u = 0.0;
    double v = 0.0;
    bool in_bounds = false;
  };
  int src_width = 0, src_height = 0;
  int tgt_width = 0, tgt_height = 0;
  std::vector<Entry> entries;  // row-major over source pixels

  const Entry& at(int x, int y) const { return entries[static_cast<size_t>(y) * src_width + x]; }
};

// Throws CentersDiffer unless |src.position - tgt.position| < 1e-6.
// A mapped coordinate is in bounds iff the ray is in front of the target
// camera and lands within [0, W] x [0, H].
CorrespondenceMap correspondence_map(const CameraPose& src, const CameraPose& tgt);

}  // namespace roomgen
