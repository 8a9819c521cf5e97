#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "roomgen/checkpoint.hpp"
#include "roomgen/config.hpp"
#include "roomgen/metrics.hpp"

namespace roomgen {

struct GenerateOutcome {
  std::filesystem::path final_checkpoint;
  std::map<int, std::filesystem::path> stage_checkpoints;  // stage id -> boundary checkpoint
  std::filesystem::path diagnostics;
};

// Runs the staged pipeline into out_dir:
//   checkpoints/ckpt_stageK.bin at each stage boundary (plus cadence
//   checkpoints), checkpoints/ckpt_final.bin, diagnostics.tsv, and a
//   turntable under renders/. A lock file guards the directory.
// When resume is given, config and all state come from the checkpoint.
GenerateOutcome run_generate(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume = std::nullopt);

// Pose spec grammar (';'-separated assignments):
//   explicit   "pos=0,0,0;yaw=30;pitch=10;fov=45;size=256"
//   turntable  "turntable:frames=16;radius=0;pitch=0;fov=45;size=256"
// fov is the half FOV in degrees. Writes view_%03d.png / .pfm.
void run_render(const std::filesystem::path& checkpoint_path, const std::string& pose_spec,
                const std::filesystem::path& out_dir);

// Held-out metrics against the analytic room; writes report_path and
// returns the report.
EvalReport run_eval(const std::filesystem::path& checkpoint_path, const std::filesystem::path& report_path);

// Shared helpers.
RaySampling train_sampling(const PipelineConfig& cfg);
SdsSettings sds_settings(const PipelineConfig& cfg);
std::unique_ptr<ScoreProvider> build_provider(const PipelineConfig& cfg);
RadianceField field_from_checkpoint(const Checkpoint& ck, const PipelineConfig& cfg);

}  // namespace roomgen
