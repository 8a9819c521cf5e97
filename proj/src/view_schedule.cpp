#include "roomgen/view_schedule.hpp"

#include <cmath>
#include <numbers>

namespace roomgen {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Uniform direction on the unit sphere.
Vector3d sphere_direction(Rng& rng) {
  const double y = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, kTau);
  const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
  return {r * std::cos(phi), y, r * std::sin(phi)};
}

// Uniform in the shell [r_min, r_max] (density proportional to r^2).
double shell_radius(double r_min, double r_max, Rng& rng) {
  const double lo = r_min * r_min * r_min;
  const double hi = r_max * r_max * r_max;
  return std::cbrt(lo + (hi - lo) * rng.uniform());
}

Vector3d shell_point(const StageConfig& cfg, Rng& rng) {
  const Vector3d dir = sphere_direction(rng);
  return dir * shell_radius(cfg.min_position_radius, cfg.position_radius, rng);
}

Matrix3d outward_rotation(const Vector3d& position) {
  const Vector3d f = position.normalized();
  const double pitch = std::asin(std::clamp(f.y(), -1.0, 1.0));
  const double yaw = std::atan2(f.z(), f.x());
  return rotation_from_yaw_pitch(yaw, pitch);
}

}  // namespace

StageConfig default_stage_config(int stage_id) {
  StageConfig cfg;
  cfg.stage_id = stage_id;
  switch (stage_id) {
    case 1:
      cfg.iterations = 500;
      cfg.views_per_iteration = 8;
      cfg.position_radius = 0.0;
      cfg.pitch_range = 15.0 * std::numbers::pi / 180.0;
      cfg.t_max_schedule = {0.98, 0.7};
      cfg.t_min_schedule = {0.6, 0.02};
      cfg.anneal_mode = AnnealMode::kLinear;
      break;
    case 2:
      cfg.iterations = 750;
      cfg.views_per_iteration = 4;
      cfg.position_radius = 0.7;
      cfg.pitch_range = 0.0;  // pitch is implied by the outward direction
      cfg.t_max_schedule = {0.7, 0.4};
      cfg.t_min_schedule = {0.02, 0.02};
      cfg.anneal_mode = AnnealMode::kStep;
      cfg.anneal_split = 2.0 / 3.0;
      break;
    case 3:
      cfg.iterations = 250;
      cfg.views_per_iteration = 2;
      cfg.position_radius = 0.7;
      cfg.pitch_range = 30.0 * std::numbers::pi / 180.0;
      cfg.t_max_schedule = {0.4, 0.4};
      cfg.t_min_schedule = {0.02, 0.02};
      cfg.anneal_mode = AnnealMode::kLinear;
      break;
    default:
      throw Error("stage_id must be 1, 2 or 3");
  }
  return cfg;
}

ViewBatch sample_stage1(const StageConfig& cfg, const Intrinsics& intr, int64_t iteration, Rng& rng) {
  ViewBatch batch;
  batch.stage_id = 1;
  batch.iteration_index = iteration;
  batch.shared_position = true;
  const int n = cfg.views_per_iteration;
  const double offset = rng.uniform(0.0, kTau);
  batch.poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double yaw = std::fmod(offset + kTau * i / n, kTau);
    const double pitch = rng.uniform(-cfg.pitch_range, cfg.pitch_range);
    CameraPose pose;
    pose.rotation = rotation_from_yaw_pitch(yaw, pitch);
    pose.position = Vector3d::Zero();
    pose.intrinsics = intr;
    batch.poses.push_back(pose);
  }
  return batch;
}

CameraPose sample_outward_pose(const StageConfig& cfg, const Intrinsics& intr, Rng& rng) {
  CameraPose pose;
  pose.position = shell_point(cfg, rng);
  pose.rotation = outward_rotation(pose.position);
  pose.intrinsics = intr;
  return pose;
}

ViewBatch sample_stage2(const StageConfig& cfg, const Intrinsics& intr, int64_t iteration, Rng& rng) {
  ViewBatch batch;
  batch.stage_id = 2;
  batch.iteration_index = iteration;
  batch.shared_position = false;
  batch.poses.reserve(cfg.views_per_iteration);
  for (int i = 0; i < cfg.views_per_iteration; ++i) batch.poses.push_back(sample_outward_pose(cfg, intr, rng));
  return batch;
}

ViewBatch sample_stage3(const StageConfig& cfg, const Intrinsics& intr, int64_t iteration, Rng& rng) {
  ViewBatch batch;
  batch.stage_id = 3;
  batch.iteration_index = iteration;
  batch.shared_position = true;
  const Vector3d position = shell_point(cfg, rng);
  batch.poses.reserve(cfg.views_per_iteration);
  for (int i = 0; i < cfg.views_per_iteration; ++i) {
    CameraPose pose;
    pose.position = position;
    pose.rotation = rotation_from_yaw_pitch(rng.uniform(0.0, kTau), rng.uniform(-cfg.pitch_range, cfg.pitch_range));
    pose.intrinsics = intr;
    batch.poses.push_back(pose);
  }
  return batch;
}

std::pair<double, double> timestep_bounds(const StageConfig& cfg, int64_t iteration) {
  double t_min, t_max;
  if (cfg.anneal_mode == AnnealMode::kStep) {
    const int64_t split_iter = static_cast<int64_t>(std::llround(cfg.anneal_split * cfg.iterations));
    const bool first_phase = iteration < split_iter;
    t_max = first_phase ? cfg.t_max_schedule.first : cfg.t_max_schedule.second;
    t_min = first_phase ? cfg.t_min_schedule.first : cfg.t_min_schedule.second;
  } else {
    const double s = cfg.iterations > 1 ? static_cast<double>(iteration) / (cfg.iterations - 1) : 0.0;
    // (1-s) a + s b is exact at both endpoints and for constant schedules.
    const auto lerp = [s](const std::pair<double, double>& p) {
      return p.first == p.second ? p.first : (1.0 - s) * p.first + s * p.second;
    };
    t_max = lerp(cfg.t_max_schedule);
    t_min = lerp(cfg.t_min_schedule);
  }
  if (!(t_min < t_max)) throw ScheduleCrossing("timestep schedule crossed: t_min >= t_max");
  return {t_min, t_max};
}

}  // namespace roomgen
