#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "roomgen/oracle_room.hpp"
#include "roomgen/radiance_field.hpp"
#include "roomgen/sds.hpp"
#include "roomgen/view_schedule.hpp"

namespace roomgen {

enum class ProviderKind { kOracle, kCaa, kComposite };

// Flat key=value configuration ("section.key=value"). Unknown keys are
// hard errors; '#' starts a full-line comment. serialize_config emits the
// canonical form (sorted keys, %.17g floats) used inside checkpoints.
struct PipelineConfig {
  uint64_t seed = 1;

  RoomSpec room;
  double camera_half_fov_deg = 45.0;

  // Field hyperparameters; bounds derive from the room plus this margin.
  int field_levels = 8;
  int field_table_size = 1 << 14;
  int field_feature_dim = 2;
  int field_base_resolution = 16;
  int field_max_resolution = 256;
  int field_hidden_units = 32;
  double field_bounds_margin = 0.25;
  double field_density_bias_init = -2.0;

  // Renderer.
  int n_samples = 64;
  double near = 0.05;
  double far = 0.0;  // 0 = auto: sqrt(3) * (half_extent + max stage radius) + 0.05
  int train_resolution = 64;
  int export_resolution = 256;
  Color3 background{0.5, 0.5, 0.5};
  bool random_train_background = true;
  double termination_eps = 1e-4;

  StageConfig stage1 = default_stage_config(1);
  StageConfig stage2 = default_stage_config(2);
  StageConfig stage3 = default_stage_config(3);

  AdamConfig adam;
  OmegaMode omega_mode = OmegaMode::kSigmaSquared;

  ProviderKind provider_kind = ProviderKind::kOracle;
  double oracle_weight = 1.0;
  double caa_weight = 0.5;
  int caa_grid = 16;
  int caa_radius = 1;
  double guidance_scale = 0.0;
  std::string prompt = "a cozy room";
  std::string negative_prompt =
      "ugly, bad anatomy, blurry, pixelated, obscure, unnatural colors, poor lighting, dull, unclear, "
      "cropped, lowres, low quality, artifacts, duplicate, morbid, mutilated, poorly drawn face, "
      "deformed, dehydrated, bad proportions";

  double pt_margin = 0.1;
  int pt_depth_resolution = 32;
  double pt_opacity_threshold = 0.5;
  double pt_min_opaque_fraction = 0.1;

  uint64_t eval_seed = 9001;
  int eval_n_poses = 32;
  int eval_n_pairs = 8;
  int eval_resolution = 64;
  double eval_pair_max_yaw_gap_deg = 60.0;

  int checkpoint_every = 0;  // 0 = stage boundaries only
  int turntable_frames = 8;

  // Run shape, normally set by the CLI ablation flags.
  std::string run_stages = "123";
  bool run_pose_transform = true;

  // Derived helpers.
  double resolved_far() const;
  Intrinsics train_intrinsics() const;
  Intrinsics export_intrinsics() const;
  FieldConfig field_config() const;
  const StageConfig& stage(int id) const;
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig parse_config_file(const std::filesystem::path& path);
std::string serialize_config(const PipelineConfig& cfg);

// Throws ConfigInvalid with a field-specific message.
void validate_config(const PipelineConfig& cfg);

}  // namespace roomgen
