#include "roomgen/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "roomgen/image_io.hpp"
#include "roomgen/oracle_room.hpp"
#include "roomgen/pose_transform.hpp"
#include "roomgen/sds.hpp"

namespace roomgen {

namespace fs = std::filesystem;

namespace {

// Exclusive ownership of an output directory for the duration of a run.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".roomgen.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw Error("output directory is locked by another run (remove " + path_.string() +
                  " if that run is gone)");
  }
  ~DirectoryLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::vector<int> parse_stage_list(const std::string& stages) {
  std::vector<int> out;
  for (char c : stages) out.push_back(c - '0');
  return out;
}

void write_diag_line(std::ofstream& out, const SdsStep& step, uint64_t global_iter) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu\t%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.3f\n",
                static_cast<unsigned long long>(global_iter), step.stage_id, step.t, step.omega,
                step.residual_norm, step.grad_norm, step.wall_ms);
  out << buf;
  out.flush();
}

struct PoseSpec {
  bool turntable = false;
  int frames = 16;
  double radius = 0.0;
  double pitch_deg = 0.0;
  Vector3d position = Vector3d::Zero();
  double yaw_deg = 0.0;
  std::optional<double> fov_deg;
  std::optional<int> size;
};

PoseSpec parse_pose_spec(const std::string& spec) {
  PoseSpec out;
  std::string body = spec;
  if (body.rfind("turntable:", 0) == 0) {
    out.turntable = true;
    body = body.substr(10);
  } else if (body.rfind("turntable", 0) == 0 && (body.size() == 9)) {
    out.turntable = true;
    body.clear();
  }
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const size_t eq = item.find('=');
    if (eq == std::string::npos) throw Error("pose spec entries must be key=value: '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "frames")
        out.frames = std::stoi(value);
      else if (key == "radius")
        out.radius = std::stod(value);
      else if (key == "pitch")
        out.pitch_deg = std::stod(value);
      else if (key == "yaw")
        out.yaw_deg = std::stod(value);
      else if (key == "fov")
        out.fov_deg = std::stod(value);
      else if (key == "size")
        out.size = std::stoi(value);
      else if (key == "pos") {
        std::stringstream ps(value);
        std::string num;
        int i = 0;
        while (std::getline(ps, num, ',') && i < 3) out.position[i++] = std::stod(num);
        if (i != 3) throw std::invalid_argument("pos needs three numbers");
      } else {
        throw Error("unknown pose spec key: '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw Error("bad pose spec value for '" + key + "': '" + value + "'");
    }
  }
  if (out.turntable && out.frames < 1) throw Error("turntable needs frames >= 1");
  return out;
}

Checkpoint make_checkpoint(const std::string& config_text, const PipelineConfig& cfg, const RadianceField& field,
                           const RadianceField* frozen, const AdamState& adam, const Rng& sampler_rng,
                           const Rng& step_rng, uint32_t next_stage, uint64_t next_iter, uint64_t global_iter) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.next_stage = next_stage;
  ck.next_iter = next_iter;
  ck.global_iter = global_iter;
  ck.params.assign(field.params().begin(), field.params().end());
  if (frozen) ck.frozen.assign(frozen->params().begin(), frozen->params().end());
  ck.adam_m = adam.m;
  ck.adam_v = adam.v;
  ck.adam_step = static_cast<uint64_t>(adam.step);
  ck.sampler_rng = sampler_rng.state();
  ck.step_rng = step_rng.state();
  ck.prompt_meta = cfg.prompt;
  ck.negative_prompt_meta = cfg.negative_prompt;
  return ck;
}

}  // namespace

RaySampling train_sampling(const PipelineConfig& cfg) {
  RaySampling s;
  s.n_samples = cfg.n_samples;
  s.near = cfg.near;
  s.far = cfg.resolved_far();
  s.stratified = true;
  s.termination_eps = cfg.termination_eps;
  return s;
}

SdsSettings sds_settings(const PipelineConfig& cfg) {
  SdsSettings settings;
  settings.sampling = train_sampling(cfg);
  settings.background = cfg.background;
  settings.random_train_background = cfg.random_train_background;
  settings.omega_mode = cfg.omega_mode;
  settings.adam = cfg.adam;
  settings.pose_transform_enabled = cfg.run_pose_transform;
  settings.depth_margin = cfg.pt_margin;
  settings.depth_estimate_resolution = cfg.pt_depth_resolution;
  settings.depth_settings.opacity_threshold = cfg.pt_opacity_threshold;
  settings.depth_settings.min_opaque_fraction = cfg.pt_min_opaque_fraction;
  return settings;
}

std::unique_ptr<ScoreProvider> build_provider(const PipelineConfig& cfg) {
  switch (cfg.provider_kind) {
    case ProviderKind::kOracle:
      return std::make_unique<OracleScoreProvider>(cfg.room);
    case ProviderKind::kCaa:
      return std::make_unique<CaaConsistencyProvider>(cfg.caa_grid, cfg.caa_radius);
    case ProviderKind::kComposite: {
      auto composite = std::make_unique<CompositeProvider>();
      composite->add(std::make_shared<OracleScoreProvider>(cfg.room), cfg.oracle_weight);
      composite->add(std::make_shared<CaaConsistencyProvider>(cfg.caa_grid, cfg.caa_radius), cfg.caa_weight);
      return composite;
    }
  }
  throw Error("unreachable provider kind");
}

RadianceField field_from_checkpoint(const Checkpoint& ck, const PipelineConfig& cfg) {
  RadianceField field = RadianceField::zeros(cfg.field_config());
  if (ck.params.size() != field.param_count())
    throw CheckpointCorrupt("checkpoint parameter count does not match its field config");
  std::copy(ck.params.begin(), ck.params.end(), field.params_mut().begin());
  return field;
}

GenerateOutcome run_generate(const PipelineConfig& cfg_in, const fs::path& out_dir,
                             const std::optional<fs::path>& resume) {
  PipelineConfig cfg = cfg_in;
  std::optional<Checkpoint> resumed;
  if (resume) {
    resumed = load_checkpoint(*resume);
    cfg = resumed->parse_config();  // the snapshot is authoritative on resume
  }
  validate_config(cfg);
  const std::string config_text = serialize_config(cfg);

  DirectoryLock lock(out_dir);
  const fs::path ckpt_dir = out_dir / "checkpoints";
  const fs::path render_dir = out_dir / "renders";
  fs::create_directories(ckpt_dir);
  fs::create_directories(render_dir);

  GenerateOutcome outcome;
  outcome.diagnostics = out_dir / "diagnostics.tsv";
  std::ofstream diag(outcome.diagnostics, std::ios::trunc);
  if (!diag) throw Error("cannot open diagnostics file: " + outcome.diagnostics.string());
  diag << "# iter\tstage\tt\tomega\tresidual_norm\tgrad_norm\twall_ms\n";

  {
    std::ofstream cfg_out(out_dir / "config_resolved.cfg", std::ios::trunc);
    cfg_out << config_text;
  }

  RadianceField field = resumed ? field_from_checkpoint(*resumed, cfg)
                                : RadianceField(cfg.field_config(), derive_seed(cfg.seed, "field-init"));
  std::optional<RadianceField> frozen;
  if (resumed && !resumed->frozen.empty()) {
    RadianceField f = RadianceField::zeros(cfg.field_config());
    if (resumed->frozen.size() != f.param_count())
      throw CheckpointCorrupt("checkpoint frozen parameter count does not match its field config");
    std::copy(resumed->frozen.begin(), resumed->frozen.end(), f.params_mut().begin());
    frozen = std::move(f);
  }

  AdamState adam(field.param_count());
  Rng sampler_rng(derive_seed(cfg.seed, "view-sampler"));
  Rng step_rng(derive_seed(cfg.seed, "sds-steps"));
  uint64_t global_iter = 0;
  uint32_t start_stage = 1;
  uint64_t start_iter = 0;
  if (resumed) {
    if (resumed->adam_m.size() != field.param_count())
      throw CheckpointCorrupt("checkpoint optimizer state does not match its field config");
    adam.m = resumed->adam_m;
    adam.v = resumed->adam_v;
    adam.step = static_cast<int64_t>(resumed->adam_step);
    sampler_rng.set_state(resumed->sampler_rng);
    step_rng.set_state(resumed->step_rng);
    global_iter = resumed->global_iter;
    start_stage = resumed->next_stage;
    start_iter = resumed->next_iter;
  }

  const auto provider = build_provider(cfg);
  const SdsSettings settings = sds_settings(cfg);
  const Intrinsics train_intr = cfg.train_intrinsics();
  const std::vector<int> stage_list = parse_stage_list(cfg.run_stages);

  const auto save_at = [&](const fs::path& path, uint32_t next_stage, uint64_t next_iter) {
    const Checkpoint ck = make_checkpoint(config_text, cfg, field, frozen ? &*frozen : nullptr, adam, sampler_rng,
                                          step_rng, next_stage, next_iter, global_iter);
    save_checkpoint(ck, path);
  };

  for (size_t si = 0; si < stage_list.size(); ++si) {
    const int stage_id = stage_list[si];
    if (static_cast<uint32_t>(stage_id) < start_stage) continue;
    const uint32_t following_stage =
        si + 1 < stage_list.size() ? static_cast<uint32_t>(stage_list[si + 1]) : 4u;

    const StageConfig& stage = cfg.stage(stage_id);
    const int64_t stage_start =
        (static_cast<uint32_t>(stage_id) == start_stage) ? static_cast<int64_t>(start_iter) : 0;

    StageCallbacks callbacks;
    callbacks.on_step = [&](const SdsStep& step) { write_diag_line(diag, step, global_iter); };
    callbacks.after_iteration = [&](int64_t iter) {
      ++global_iter;
      if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 && iter + 1 < stage.iterations) {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_iter_%06llu.bin", static_cast<unsigned long long>(global_iter));
        save_at(ckpt_dir / name, static_cast<uint32_t>(stage_id), iter + 1);
      }
    };

    try {
      run_stage(field, stage, train_intr, *provider, frozen ? &*frozen : nullptr, adam, sampler_rng, step_rng,
                settings, callbacks, stage_start);
    } catch (const AbortedStage&) {
      // Leave a checkpoint for post-mortems, then propagate.
      save_at(ckpt_dir / "ckpt_aborted.bin", static_cast<uint32_t>(stage_id), 0);
      throw;
    }

    if (stage_id == 1) frozen = field.freeze_copy();
    adam.reset();

    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_stage%d.bin", stage_id);
    const fs::path stage_path = ckpt_dir / name;
    save_at(stage_path, following_stage, 0);
    outcome.stage_checkpoints[stage_id] = stage_path;
  }

  outcome.final_checkpoint = ckpt_dir / "ckpt_final.bin";
  save_at(outcome.final_checkpoint, 4, 0);

  // Turntable export from the final field.
  if (cfg.turntable_frames > 0) {
    const Intrinsics intr = cfg.export_intrinsics();
    RaySampling sampling = train_sampling(cfg);
    sampling.stratified = false;
    for (int i = 0; i < cfg.turntable_frames; ++i) {
      CameraPose pose;
      const double yaw = 2.0 * std::numbers::pi * i / cfg.turntable_frames;
      pose.rotation = rotation_from_yaw_pitch(yaw, 0.0);
      pose.position = Vector3d::Zero();
      pose.intrinsics = intr;
      const RenderOutput out = render(field, pose, sampling, cfg.background);
      char frame[32];
      std::snprintf(frame, sizeof(frame), "turntable_%03d", i);
      write_png(out.color, render_dir / (std::string(frame) + ".png"));
      write_pfm(out.depth, render_dir / (std::string(frame) + ".pfm"));
    }
  }
  return outcome;
}

void run_render(const fs::path& checkpoint_path, const std::string& pose_spec, const fs::path& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const PipelineConfig cfg = ck.parse_config();
  const RadianceField field = field_from_checkpoint(ck, cfg);
  const PoseSpec spec = parse_pose_spec(pose_spec);

  fs::create_directories(out_dir);
  const int size = spec.size.value_or(cfg.export_resolution);
  const double fov_deg = spec.fov_deg.value_or(cfg.camera_half_fov_deg);
  const Intrinsics intr{fov_deg * std::numbers::pi / 180.0, size, size};
  RaySampling sampling = train_sampling(cfg);
  sampling.stratified = false;

  std::vector<CameraPose> poses;
  if (spec.turntable) {
    const double pitch = spec.pitch_deg * std::numbers::pi / 180.0;
    for (int i = 0; i < spec.frames; ++i) {
      const double yaw = 2.0 * std::numbers::pi * i / spec.frames;
      CameraPose pose;
      pose.rotation = rotation_from_yaw_pitch(yaw, pitch);
      pose.position = spec.radius * Vector3d(std::cos(yaw), 0.0, std::sin(yaw));
      pose.intrinsics = intr;
      poses.push_back(pose);
    }
  } else {
    CameraPose pose;
    pose.rotation = rotation_from_yaw_pitch(spec.yaw_deg * std::numbers::pi / 180.0,
                                            spec.pitch_deg * std::numbers::pi / 180.0);
    pose.position = spec.position;
    pose.intrinsics = intr;
    poses.push_back(pose);
  }

  for (size_t i = 0; i < poses.size(); ++i) {
    const RenderOutput out = render(field, poses[i], sampling, cfg.background);
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu", i);
    write_png(out.color, out_dir / (std::string(name) + ".png"));
    write_pfm(out.depth, out_dir / (std::string(name) + ".pfm"));
  }
}

EvalReport run_eval(const fs::path& checkpoint_path, const fs::path& report_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const PipelineConfig cfg = ck.parse_config();
  const RadianceField field = field_from_checkpoint(ck, cfg);
  const EvalReport report = evaluate_field(field, cfg);
  if (!report_path.empty()) {
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw Error("cannot open eval report for writing: " + report_path.string());
    out << format_eval_report(report);
  }
  return report;
}

}  // namespace roomgen
