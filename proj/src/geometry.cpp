#include "roomgen/geometry.hpp"

#include <cmath>

namespace roomgen {

bool is_rotation_matrix(const Matrix3d& r, double tol) {
  const Matrix3d should_be_identity = r.transpose() * r;
  if ((should_be_identity - Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

void validate_pose(const CameraPose& pose) {
  if (!is_rotation_matrix(pose.rotation)) throw Error("camera rotation is not orthonormal with det +1");
  const auto& k = pose.intrinsics;
  if (!(k.half_fov > 0.0 && k.half_fov < M_PI / 2.0)) throw Error("half_fov must lie in (0, pi/2)");
  if (k.width <= 0 || k.height <= 0) throw Error("image size must be positive");
}

Matrix3d rotation_from_yaw_pitch(double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const Vector3d fwd(cy * cp, sp, sy * cp);
  const Vector3d right(-sy, 0.0, cy);           // forward x world_up, normalized
  const Vector3d up = right.cross(fwd);         // roll-free up, y-component cos(pitch) >= 0
  Matrix3d r;
  r.col(0) = fwd;
  r.col(1) = up;
  r.col(2) = right;
  return r;
}

Vector3d pixel_ray_direction(const CameraPose& pose, double u, double v) {
  const auto& k = pose.intrinsics;
  const Vector3d dir_cam(k.focal(), k.cy() - v, u - k.cx());
  return (pose.rotation * dir_cam).normalized();
}

RaySet generate_rays(const CameraPose& pose) {
  validate_pose(pose);
  const auto& k = pose.intrinsics;
  RaySet rays;
  rays.origin = pose.position;
  rays.width = k.width;
  rays.height = k.height;
  rays.directions.resize(static_cast<size_t>(k.width) * k.height);
  const double f = k.focal();
  size_t idx = 0;
  for (int y = 0; y < k.height; ++y) {
    const double dv = k.cy() - (y + 0.5);
    for (int x = 0; x < k.width; ++x, ++idx) {
      const Vector3d dir_cam(f, dv, (x + 0.5) - k.cx());
      rays.directions[idx] = (pose.rotation * dir_cam).normalized();
    }
  }
  return rays;
}

bool project_direction(const CameraPose& pose, const Vector3d& dir_world, Vector2d* uv) {
  const Vector3d d = pose.rotation.transpose() * dir_world;
  if (d.x() <= 0.0) return false;
  const auto& k = pose.intrinsics;
  const double f = k.focal();
  (*uv)[0] = k.cx() + f * (d.z() / d.x());
  (*uv)[1] = k.cy() - f * (d.y() / d.x());
  return true;
}

CorrespondenceMap correspondence_map(const CameraPose& src, const CameraPose& tgt) {
  if ((src.position - tgt.position).norm() >= 1e-6)
    throw CentersDiffer("correspondence_map requires coincident camera centers");
  validate_pose(src);
  validate_pose(tgt);

  CorrespondenceMap map;
  map.src_width = src.intrinsics.width;
  map.src_height = src.intrinsics.height;
  map.tgt_width = tgt.intrinsics.width;
  map.tgt_height = tgt.intrinsics.height;
  map.entries.resize(static_cast<size_t>(map.src_width) * map.src_height);

  // Rotation taking source-camera coords to target-camera coords.
  const Matrix3d rel = tgt.rotation.transpose() * src.rotation;
  const double f_src = src.intrinsics.focal();
  const double f_tgt = tgt.intrinsics.focal();
  const double scx = src.intrinsics.cx(), scy = src.intrinsics.cy();
  const double tcx = tgt.intrinsics.cx(), tcy = tgt.intrinsics.cy();

  size_t idx = 0;
  for (int y = 0; y < map.src_height; ++y) {
    const double dv = scy - (y + 0.5);
    for (int x = 0; x < map.src_width; ++x, ++idx) {
      const Vector3d d_src(f_src, dv, (x + 0.5) - scx);
      const Vector3d d = rel * d_src;
      auto& e = map.entries[idx];
      if (d.x() <= 0.0) continue;  // behind the target camera
      e.u = tcx + f_tgt * (d.z() / d.x());
      e.v = tcy - f_tgt * (d.y() / d.x());
      e.in_bounds = e.u >= 0.0 && e.u <= map.tgt_width && e.v >= 0.0 && e.v <= map.tgt_height;
    }
  }
  return map;
}

}  // namespace roomgen
