// roomgen: staged score-distillation training of a room-scale radiance
// field against an analytic oracle scene, plus rendering and evaluation
// of the resulting checkpoints.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "roomgen/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitCorrupt = 4;

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const roomgen::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const roomgen::AbortedStage& e) {
    std::cerr << "stage aborted: " << e.what() << "\n";
    return kExitAborted;
  } catch (const roomgen::CheckpointCorrupt& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roomgen: three-stage score-distillation trainer for room-scale radiance fields"};
  app.require_subcommand(1);

  // generate
  std::string config_path, out_dir = "out", stages_flag, resume_path;
  int skip_stage = 0;
  bool no_pose_transform = false;
  std::optional<uint64_t> seed_override;
  uint64_t seed_value = 0;
  auto* gen = app.add_subcommand("generate", "Run the staged training pipeline");
  auto* cfg_opt = gen->add_option("--config", config_path, "Pipeline config file");
  gen->add_option("--out", out_dir, "Output directory (checkpoints, diagnostics, renders)");
  gen->add_option("--seed", seed_value, "Override the config seed")->each([&](const std::string&) {
    seed_override = seed_value;
  });
  gen->add_option("--stages", stages_flag, "Run only a stage prefix: 1, 12 or 123")
      ->check(CLI::IsMember({"1", "12", "123"}));
  gen->add_option("--skip-stage", skip_stage, "Skip stage 2 or 3")->check(CLI::Range(2, 3));
  gen->add_flag("--no-pose-transform", no_pose_transform, "Feed stage-2 real rotations to the prior unchanged");
  gen->add_option("--resume", resume_path, "Resume from a checkpoint (config comes from its snapshot)");

  // render
  std::string ckpt_path, pose_spec, render_out = "render_out";
  auto* rnd = app.add_subcommand("render", "Render views from a checkpoint");
  rnd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  rnd->add_option("--pose", pose_spec,
                  "Pose spec: 'pos=x,y,z;yaw=deg;pitch=deg[;fov=deg][;size=px]' or "
                  "'turntable:frames=n;radius=r;pitch=deg'")
      ->required();
  rnd->add_option("--out", render_out, "Output directory for PNG color / PFM depth");

  // eval
  std::string eval_ckpt, report_path = "eval_report.txt";
  auto* evl = app.add_subcommand("eval", "Held-out metrics against the analytic room");
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  evl->add_option("--out", report_path, "Report file");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    return run_guarded([&] {
      roomgen::PipelineConfig cfg;
      std::optional<std::filesystem::path> resume;
      if (!resume_path.empty()) {
        resume = resume_path;
        if (*cfg_opt || seed_override || !stages_flag.empty() || skip_stage != 0 || no_pose_transform)
          throw roomgen::ConfigInvalid("--resume uses the checkpoint's config snapshot; drop the other flags");
      } else {
        if (!*cfg_opt) throw roomgen::ConfigInvalid("generate needs --config (or --resume)");
        cfg = roomgen::parse_config_file(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (!stages_flag.empty()) cfg.run_stages = stages_flag;
        if (skip_stage != 0) {
          std::string kept;
          for (char c : cfg.run_stages)
            if (c != static_cast<char>('0' + skip_stage)) kept += c;
          cfg.run_stages = kept;
        }
        if (no_pose_transform) cfg.run_pose_transform = false;
        roomgen::validate_config(cfg);
      }
      const auto outcome = roomgen::run_generate(cfg, out_dir, resume);
      std::cout << "final checkpoint: " << outcome.final_checkpoint.string() << "\n";
    });
  }
  if (rnd->parsed()) {
    return run_guarded([&] { roomgen::run_render(ckpt_path, pose_spec, render_out); });
  }
  if (evl->parsed()) {
    return run_guarded([&] {
      const auto report = roomgen::run_eval(eval_ckpt, report_path);
      std::cout << roomgen::format_eval_report(report);
    });
  }
  return kExitError;
}
