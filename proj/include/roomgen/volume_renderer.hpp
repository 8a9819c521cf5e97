#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "roomgen/geometry.hpp"
#include "roomgen/image.hpp"
#include "roomgen/radiance_field.hpp"

namespace roomgen {

// Ray sampling plan. Each ray takes n_samples equal-width bins spanning
// [near, far]; the sample sits at the bin center, or jittered inside its
// bin when stratified. The jitter stream is a counter-based hash of
// (rng_state, ray index, sample index), so a backward pass fed the same
// plan reproduces the forward pass exactly regardless of threading.
struct RaySampling {
  int n_samples = 64;
  double near = 0.05;
  double far = 5.0;
  bool stratified = true;
  uint64_t rng_state = 0;
  // Rays stop marching once transmittance drops below this; used
  // symmetrically by forward and backward. 0 disables.
  double termination_eps = 1e-4;

  uint64_t digest() const;
};

// g(phi, c): per-pixel color, expected termination depth and opacity.
// Per ray, weights w_i = T_i (1 - exp(-sigma_i * delta)) always satisfy
// sum(w) + T_final = 1 up to rounding.
struct RenderOutput {
  ImageF color;    // H x W x 3
  ImageF depth;    // H x W
  ImageF opacity;  // H x W
  uint64_t sampling_digest = 0;
};

RenderOutput render(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                    const Color3& background = {0.5, 0.5, 0.5});

// Reverse-mode gradients of the rendered color (and optionally opacity)
// with respect to all field parameters, accumulated into grad.
// forward_digest must come from the paired forward RenderOutput; a
// different sampling plan raises SamplingMismatch.
void render_backward(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                     const Color3& background, const ImageF& color_grad, const ImageF* opacity_grad,
                     uint64_t forward_digest, std::span<double> grad);

// Fused forward + backward for pixel-local score providers: renders the
// view, forms the residual scale * (color - target) per pixel, and
// backpropagates omega * residual in the same pass, reusing the captured
// sample state instead of replaying the march. Numerically identical to
// render followed by render_backward on the same plan.
struct FusedStats {
  double residual_sq_sum = 0.0;
  int64_t residual_count = 0;
};
FusedStats render_sds_fused(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                            const Color3& background, const ImageF& target, double residual_scale, double omega,
                            std::span<double> grad);

}  // namespace roomgen
