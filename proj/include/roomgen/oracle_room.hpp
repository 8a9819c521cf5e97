#pragma once

#include <array>

#include "roomgen/geometry.hpp"
#include "roomgen/image.hpp"

namespace roomgen {

// Analytic closed box scene: six distinctly colored Lambertian walls with
// a low-frequency sinusoidal pattern, centered at the origin. Provides
// exact images and depths for any interior camera, which stands in for the
// scene knowledge of a pretrained prior at desk scale.
struct RoomSpec {
  // Wall order: +x, -x, +y (ceiling), -y (floor), +z, -z.
  static constexpr std::array<Color3, 6> kDefaultPalette = {{
      {0.75, 0.30, 0.25},  // +x terracotta
      {0.25, 0.60, 0.55},  // -x teal
      {0.85, 0.85, 0.80},  // ceiling off-white
      {0.45, 0.35, 0.25},  // floor umber
      {0.70, 0.65, 0.30},  // +z ochre
      {0.35, 0.40, 0.70},  // -z slate blue
  }};

  double half_extent = 2.0;        // meters
  double pattern_amplitude = 0.08; // relative modulation, 0 disables
  double pattern_frequency = 0.4;  // cycles per meter
  bool analytic = true;            // false marks a room eval cannot score
  std::array<Color3, 6> wall_colors = kDefaultPalette;

  bool inside(const Vector3d& p) const {
    return std::abs(p.x()) < half_extent && std::abs(p.y()) < half_extent && std::abs(p.z()) < half_extent;
  }
};

struct OracleHit {
  int wall = -1;       // index into wall_colors
  double depth = 0.0;  // meters along the unit ray
  Vector3d point;      // world-space hit point
};

// First wall hit by a ray starting strictly inside the box.
OracleHit intersect_room(const RoomSpec& room, const Vector3d& origin, const Vector3d& dir);

// Wall albedo at a hit point: base color modulated by the procedural
// pattern, zero modulation at the wall center.
Color3 wall_color_at(const RoomSpec& room, int wall, const Vector3d& point);

// Ground-truth color / depth for a pose. Throws OutsideRoom when the
// camera position is not strictly inside the box.
ImageF oracle_image(const RoomSpec& room, const CameraPose& pose);
ImageF oracle_depth_image(const RoomSpec& room, const CameraPose& pose);
void oracle_render(const RoomSpec& room, const CameraPose& pose, ImageF* color, ImageF* depth);

}  // namespace roomgen
