#pragma once

#include "roomgen/geometry.hpp"
#include "roomgen/radiance_field.hpp"
#include "roomgen/volume_renderer.hpp"

namespace roomgen {

// The real camera (fed to the radiance field) and its origin-centered
// equivalent (fed to the prior). The rotation is shared; the equivalent's
// half-FOV shrinks so both see the same frontal extent at the scene depth:
//   theta2 = arctan(tan(theta1) * (d - d_cam) / d)
struct EquivalentPosePair {
  CameraPose real;
  CameraPose equivalent;
  double d = 0.0;      // mean scene depth from the origin-centered camera
  double d_cam = 0.0;  // |real.position|
};

struct DepthEstimateSettings {
  double opacity_threshold = 0.5;    // pixels below this are ignored
  double min_opaque_fraction = 0.1;  // fewer opaque pixels -> InsufficientOpacity
};

// Opacity-weighted mean of per-pixel expected depth, rendered from an
// origin-centered pose against the frozen stage-1 field. Throws
// InsufficientOpacity when the field is too transparent to trust.
double estimate_view_depth(const RadianceField& frozen_field, const CameraPose& center_pose,
                           const RaySampling& sampling, const Color3& background = {0.5, 0.5, 0.5},
                           const DepthEstimateSettings& settings = {});

// Builds the equivalent pair for a real outward-facing camera given the
// estimated depth. Throws DegenerateDepth when d <= |position| + margin.
EquivalentPosePair transform_pose(const CameraPose& real, double d, double margin = 0.1);

}  // namespace roomgen
