#include "roomgen/pose_transform.hpp"

#include <cmath>

namespace roomgen {

double estimate_view_depth(const RadianceField& frozen_field, const CameraPose& center_pose,
                           const RaySampling& sampling, const Color3& background,
                           const DepthEstimateSettings& settings) {
  if (center_pose.position.norm() > 1e-9) throw Error("depth estimation expects an origin-centered pose");
  const RenderOutput out = render(frozen_field, center_pose, sampling, background);

  double weighted_depth = 0.0, weight = 0.0;
  size_t opaque = 0;
  for (size_t i = 0; i < out.opacity.data.size(); ++i) {
    const double op = out.opacity.data[i];
    if (op < settings.opacity_threshold) continue;
    ++opaque;
    weighted_depth += op * out.depth.data[i];
    weight += op;
  }
  const size_t total = out.opacity.data.size();
  if (opaque < static_cast<size_t>(std::ceil(settings.min_opaque_fraction * total)))
    throw InsufficientOpacity("too few opaque pixels for a depth estimate; stage-1 field undertrained");
  return weighted_depth / weight;
}

EquivalentPosePair transform_pose(const CameraPose& real, double d, double margin) {
  const double d_cam = real.position.norm();
  if (!(d > d_cam + margin))
    throw DegenerateDepth("estimated depth does not clear the camera distance by the margin");

  EquivalentPosePair pair;
  pair.real = real;
  pair.d = d;
  pair.d_cam = d_cam;
  pair.equivalent = real;
  pair.equivalent.position = Vector3d::Zero();
  const double theta1 = real.intrinsics.half_fov;
  pair.equivalent.intrinsics.half_fov = std::atan(std::tan(theta1) * (d - d_cam) / d);
  return pair;
}

}  // namespace roomgen
