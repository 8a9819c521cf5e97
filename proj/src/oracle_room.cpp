#include "roomgen/oracle_room.hpp"

#include <cmath>
#include <numbers>

namespace roomgen {

OracleHit intersect_room(const RoomSpec& room, const Vector3d& origin, const Vector3d& dir) {
  OracleHit hit;
  hit.depth = std::numeric_limits<double>::infinity();
  const double he = room.half_extent;
  for (int axis = 0; axis < 3; ++axis) {
    const double d = dir[axis];
    if (d == 0.0) continue;
    const double plane = d > 0.0 ? he : -he;
    const double t = (plane - origin[axis]) / d;
    if (t > 0.0 && t < hit.depth) {
      hit.depth = t;
      hit.wall = 2 * axis + (d > 0.0 ? 0 : 1);
    }
  }
  hit.point = origin + dir * hit.depth;
  return hit;
}

Color3 wall_color_at(const RoomSpec& room, int wall, const Vector3d& point) {
  const int axis = wall / 2;
  // In-plane coordinates, centered on the wall center.
  const double a = point[(axis + 1) % 3];
  const double b = point[(axis + 2) % 3];
  const double k = 2.0 * std::numbers::pi * room.pattern_frequency;
  const double m = 1.0 + room.pattern_amplitude * std::sin(k * a) * std::sin(k * b);
  Color3 c;
  for (int i = 0; i < 3; ++i) c[i] = std::clamp(room.wall_colors[wall][i] * m, 0.0, 1.0);
  return c;
}

void oracle_render(const RoomSpec& room, const CameraPose& pose, ImageF* color, ImageF* depth) {
  if (!room.inside(pose.position)) throw OutsideRoom("oracle camera position lies outside the room box");
  validate_pose(pose);
  const RaySet rays = generate_rays(pose);
  if (color) *color = ImageF(rays.width, rays.height, 3);
  if (depth) *depth = ImageF(rays.width, rays.height, 1);
  for (size_t r = 0; r < rays.directions.size(); ++r) {
    const OracleHit hit = intersect_room(room, rays.origin, rays.directions[r]);
    if (color) {
      const Color3 c = wall_color_at(room, hit.wall, hit.point);
      for (int ch = 0; ch < 3; ++ch) color->data[r * 3 + ch] = c[ch];
    }
    if (depth) depth->data[r] = hit.depth;
  }
}

ImageF oracle_image(const RoomSpec& room, const CameraPose& pose) {
  ImageF color;
  oracle_render(room, pose, &color, nullptr);
  return color;
}

ImageF oracle_depth_image(const RoomSpec& room, const CameraPose& pose) {
  ImageF depth;
  oracle_render(room, pose, nullptr, &depth);
  return depth;
}

}  // namespace roomgen
