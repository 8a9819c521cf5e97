#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "roomgen/pose_transform.hpp"
#include "roomgen/prior.hpp"
#include "roomgen/radiance_field.hpp"
#include "roomgen/view_schedule.hpp"
#include "roomgen/volume_renderer.hpp"

namespace roomgen {

struct AdamConfig {
  double lr_grid = 1e-2;
  double lr_decoder = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Moments are kept as float32 like the parameters so checkpoints restore
// the optimizer bit-exactly.
struct AdamState {
  std::vector<float> m, v;
  int64_t step = 0;

  explicit AdamState(size_t param_count = 0) : m(param_count, 0.f), v(param_count, 0.f) {}
  void reset() {
    std::fill(m.begin(), m.end(), 0.f);
    std::fill(v.begin(), v.end(), 0.f);
    step = 0;
  }
};

enum class OmegaMode { kConstantOne, kSigmaSquared };

struct SdsStep {
  int64_t iteration = 0;
  int stage_id = 0;
  double t = 0.0;
  double omega = 0.0;
  double residual_norm = 0.0;  // RMS residual over the batch
  double grad_norm = 0.0;      // L2 norm of the averaged parameter gradient
  double wall_ms = 0.0;
};

struct SdsSettings {
  RaySampling sampling;
  Color3 background{0.5, 0.5, 0.5};
  // Training renders draw a fresh background per view, which removes the
  // translucent-surface equilibrium a fixed background admits (a partly
  // transparent wall can blend with a constant background and still match
  // the target color; it cannot match every random one).
  bool random_train_background = true;
  OmegaMode omega_mode = OmegaMode::kSigmaSquared;
  AdamConfig adam;
  NoiseSchedule schedule;
  // Stage-2 behavior.
  bool pose_transform_enabled = true;
  double depth_margin = 0.1;
  int depth_estimate_resolution = 32;
  DepthEstimateSettings depth_settings;
  int max_consecutive_failures = 10;
};

// One SDS update: renders the batch's real poses, queries the provider at
// prior_poses with a shared timestep and fresh noise, weights the residual
// by omega(t), backpropagates through the renderer and applies one Adam
// step. The provider output is treated as a constant (stop-gradient).
// Throws NonFiniteGradient before touching parameters or moments if any
// gradient component is non-finite.
SdsStep sds_step(RadianceField& field, const ViewBatch& batch, std::span<const CameraPose> prior_poses,
                 const ScoreProvider& provider, std::pair<double, double> t_bounds, AdamState& adam,
                 Rng& step_rng, const SdsSettings& settings);

struct StageCallbacks {
  // Called after every completed (or rejected) iteration.
  std::function<void(const SdsStep&)> on_step;
  // Called after the step with the iteration index that just finished;
  // used for cadence checkpoints.
  std::function<void(int64_t)> after_iteration;
};

// Runs a full stage: per-iteration sampling, annealing bounds, stage-2
// pose transformation against the frozen field, failure resampling and
// the abort rule. start_iteration supports checkpoint resume.
std::vector<SdsStep> run_stage(RadianceField& field, const StageConfig& stage, const Intrinsics& train_intrinsics,
                               const ScoreProvider& provider, const RadianceField* frozen_stage1, AdamState& adam,
                               Rng& sampler_rng, Rng& step_rng, const SdsSettings& settings,
                               const StageCallbacks& callbacks = {}, int64_t start_iteration = 0);

}  // namespace roomgen
