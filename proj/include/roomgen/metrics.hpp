#pragma once

#include <vector>

#include "roomgen/config.hpp"
#include "roomgen/radiance_field.hpp"
#include "roomgen/volume_renderer.hpp"

namespace roomgen {

// Held-out evaluation poses: positions in the stage-3 shell, free
// rotations, drawn from eval.seed (never the training stream).
std::vector<CameraPose> held_out_poses(const PipelineConfig& cfg);

// Same-position view pairs with bounded yaw gap so frustums overlap.
std::vector<std::pair<CameraPose, CameraPose>> held_out_pairs(const PipelineConfig& cfg);

// Mean absolute color difference between view A and view B warped onto A
// through the pure-rotation correspondence, over in-bounds pixels.
double reprojection_mad(const ImageF& img_a, const ImageF& img_b, const CameraPose& pose_a,
                        const CameraPose& pose_b);

struct EvalReport {
  double psnr_db = 0.0;       // color vs oracle over all held-out poses
  double depth_rms = 0.0;     // expected depth vs analytic depth, meters
  double reproj_mad = 0.0;    // cross-view reprojection consistency
  int n_poses = 0;
  int n_pairs = 0;
};

// Renders the held-out set from the field and scores it against the
// analytic room. Throws OracleUnavailable when room.analytic is false.
EvalReport evaluate_field(const RadianceField& field, const PipelineConfig& cfg);

std::string format_eval_report(const EvalReport& report);

}  // namespace roomgen
