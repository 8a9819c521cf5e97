#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "roomgen/geometry.hpp"
#include "roomgen/rng.hpp"

namespace roomgen {

// How the (start, end) timestep endpoints are mapped onto iterations.
// kLinear ramps; kStep holds start until anneal_split of the stage has
// elapsed, then holds end (the stage-2 two-phase schedule).
enum class AnnealMode { kLinear, kStep };

struct StageConfig {
  int stage_id = 1;  // 1, 2 or 3
  int iterations = 0;
  int views_per_iteration = 1;
  double position_radius = 0.0;      // meters; stage 1 keeps 0
  double min_position_radius = 0.05; // excluded core so depths stay sane
  double pitch_range = 0.0;          // radians; pitch drawn in +-pitch_range
  std::pair<double, double> t_max_schedule{0.98, 0.7};
  std::pair<double, double> t_min_schedule{0.6, 0.02};
  AnnealMode anneal_mode = AnnealMode::kLinear;
  double anneal_split = 2.0 / 3.0;   // used by kStep
};

struct ViewBatch {
  std::vector<CameraPose> poses;
  int stage_id = 0;
  int64_t iteration_index = 0;
  bool shared_position = false;
};

// Desk-scale defaults (budgets in the paper's 2:3:1 ratio).
StageConfig default_stage_config(int stage_id);

// Stage 1: all cameras at the origin; yaws equally spaced with a common
// uniformly random offset; pitch drawn per view.
ViewBatch sample_stage1(const StageConfig& cfg, const Intrinsics& intr, int64_t iteration, Rng& rng);

// Stage 2: positions uniform in the shell [min_position_radius,
// position_radius]; each camera faces outward from the origin.
ViewBatch sample_stage2(const StageConfig& cfg, const Intrinsics& intr, int64_t iteration, Rng& rng);

// Single outward-facing pose, used when stage 2 resamples a rejected view.
CameraPose sample_outward_pose(const StageConfig& cfg, const Intrinsics& intr, Rng& rng);

// Stage 3: one shared position per batch, free rotations per view.
ViewBatch sample_stage3(const StageConfig& cfg, const Intrinsics& intr, int64_t iteration, Rng& rng);

// (t_min, t_max) for the given iteration. Throws ScheduleCrossing if the
// interpolated bounds meet or cross.
std::pair<double, double> timestep_bounds(const StageConfig& cfg, int64_t iteration);

}  // namespace roomgen
