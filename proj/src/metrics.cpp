#include "roomgen/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "roomgen/oracle_room.hpp"

namespace roomgen {

namespace {

Vector3d shell_position(const PipelineConfig& cfg, Rng& rng) {
  const double r_min = cfg.stage3.min_position_radius;
  const double r_max = cfg.stage3.position_radius;
  const double y = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double s = std::sqrt(std::max(0.0, 1.0 - y * y));
  const Vector3d dir(s * std::cos(phi), y, s * std::sin(phi));
  const double lo = r_min * r_min * r_min, hi = r_max * r_max * r_max;
  return dir * std::cbrt(lo + (hi - lo) * rng.uniform());
}

Intrinsics eval_intrinsics(const PipelineConfig& cfg) {
  return {cfg.camera_half_fov_deg * std::numbers::pi / 180.0, cfg.eval_resolution, cfg.eval_resolution};
}

RaySampling eval_sampling(const PipelineConfig& cfg) {
  RaySampling s;
  s.n_samples = cfg.n_samples;
  s.near = cfg.near;
  s.far = cfg.resolved_far();
  s.stratified = false;  // deterministic eval renders
  s.rng_state = 0;
  s.termination_eps = cfg.termination_eps;
  return s;
}

}  // namespace

std::vector<CameraPose> held_out_poses(const PipelineConfig& cfg) {
  Rng rng(derive_seed(cfg.eval_seed, "eval-poses"));
  const Intrinsics intr = eval_intrinsics(cfg);
  std::vector<CameraPose> poses;
  poses.reserve(cfg.eval_n_poses);
  for (int i = 0; i < cfg.eval_n_poses; ++i) {
    CameraPose pose;
    pose.position = shell_position(cfg, rng);
    const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double pitch = rng.uniform(-cfg.stage3.pitch_range, cfg.stage3.pitch_range);
    pose.rotation = rotation_from_yaw_pitch(yaw, pitch);
    pose.intrinsics = intr;
    poses.push_back(pose);
  }
  return poses;
}

std::vector<std::pair<CameraPose, CameraPose>> held_out_pairs(const PipelineConfig& cfg) {
  Rng rng(derive_seed(cfg.eval_seed, "eval-pairs"));
  const Intrinsics intr = eval_intrinsics(cfg);
  const double max_gap = cfg.eval_pair_max_yaw_gap_deg * std::numbers::pi / 180.0;
  std::vector<std::pair<CameraPose, CameraPose>> pairs;
  pairs.reserve(cfg.eval_n_pairs);
  for (int i = 0; i < cfg.eval_n_pairs; ++i) {
    const Vector3d position = shell_position(cfg, rng);
    const double yaw_a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double pitch_a = rng.uniform(-cfg.stage3.pitch_range, cfg.stage3.pitch_range);
    const double yaw_b = yaw_a + rng.uniform(-max_gap, max_gap);
    const double pitch_b = rng.uniform(-cfg.stage3.pitch_range, cfg.stage3.pitch_range);
    CameraPose a, b;
    a.position = b.position = position;
    a.rotation = rotation_from_yaw_pitch(yaw_a, pitch_a);
    b.rotation = rotation_from_yaw_pitch(yaw_b, pitch_b);
    a.intrinsics = b.intrinsics = intr;
    pairs.emplace_back(a, b);
  }
  return pairs;
}

double reprojection_mad(const ImageF& img_a, const ImageF& img_b, const CameraPose& pose_a,
                        const CameraPose& pose_b) {
  const CorrespondenceMap map = correspondence_map(pose_a, pose_b);
  double acc = 0.0;
  size_t count = 0;
  double sample[4] = {0, 0, 0, 0};
  for (int y = 0; y < img_a.height; ++y) {
    for (int x = 0; x < img_a.width; ++x) {
      const auto& e = map.at(x, y);
      if (!e.in_bounds) continue;
      bilinear_sample(img_b, e.u, e.v, sample);
      for (int c = 0; c < img_a.channels; ++c) acc += std::abs(img_a.at(x, y, c) - sample[c]);
      count += img_a.channels;
    }
  }
  return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

EvalReport evaluate_field(const RadianceField& field, const PipelineConfig& cfg) {
  if (!cfg.room.analytic)
    throw OracleUnavailable("eval needs the analytic oracle room, but room.analytic is false");

  const RaySampling sampling = eval_sampling(cfg);
  EvalReport report;

  const auto poses = held_out_poses(cfg);
  report.n_poses = static_cast<int>(poses.size());
  double mse_acc = 0.0, depth_acc = 0.0;
  size_t color_count = 0, depth_count = 0;
  for (const auto& pose : poses) {
    const RenderOutput out = render(field, pose, sampling, cfg.background);
    ImageF truth_color, truth_depth;
    oracle_render(cfg.room, pose, &truth_color, &truth_depth);
    for (size_t i = 0; i < out.color.data.size(); ++i) {
      const double d = out.color.data[i] - truth_color.data[i];
      mse_acc += d * d;
    }
    color_count += out.color.data.size();
    for (size_t i = 0; i < out.depth.data.size(); ++i) {
      const double d = out.depth.data[i] - truth_depth.data[i];
      depth_acc += d * d;
    }
    depth_count += out.depth.data.size();
  }
  report.psnr_db = psnr_db(mse_acc / static_cast<double>(color_count));
  report.depth_rms = std::sqrt(depth_acc / static_cast<double>(depth_count));

  const auto pairs = held_out_pairs(cfg);
  report.n_pairs = static_cast<int>(pairs.size());
  double mad_acc = 0.0;
  for (const auto& [pose_a, pose_b] : pairs) {
    const RenderOutput out_a = render(field, pose_a, sampling, cfg.background);
    const RenderOutput out_b = render(field, pose_b, sampling, cfg.background);
    mad_acc += reprojection_mad(out_a.color, out_b.color, pose_a, pose_b);
  }
  report.reproj_mad = pairs.empty() ? 0.0 : mad_acc / static_cast<double>(pairs.size());
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "depth_rms=%.9g\nn_pairs=%d\nn_poses=%d\npsnr_db=%.9g\nreproj_mad=%.9g\n", report.depth_rms,
                report.n_pairs, report.n_poses, report.psnr_db, report.reproj_mad);
  return buf;
}

}  // namespace roomgen
