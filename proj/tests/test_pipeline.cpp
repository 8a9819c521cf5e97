#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "room_field_fixture.hpp"
#include "roomgen/pipeline.hpp"

using namespace roomgen;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Small but complete run: 6 + 6 + 4 iterations at 16x16.
std::string tiny_config_text() {
  return R"(seed=5
render.train_resolution=16
render.export_resolution=16
render.n_samples=16
field.levels=4
field.table_size=1024
field.base_resolution=8
field.max_resolution=32
field.hidden_units=16
field.density_bias_init=0
stage1.iterations=6
stage1.views=2
stage2.iterations=6
stage2.views=2
stage3.iterations=4
stage3.views=2
pose_transform.depth_resolution=8
eval.n_poses=4
eval.n_pairs=2
eval.resolution=16
export.turntable_frames=2
)";
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("roomgen_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Diagnostics rows without comments and without the wall-clock column.
std::vector<std::string> diag_rows(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t cut = line.rfind('\t');
    rows.push_back(line.substr(0, cut));
  }
  return rows;
}

}  // namespace

TEST_CASE("config round-trips through its canonical serialization") {
  PipelineConfig cfg = parse_config_text(tiny_config_text());
  const std::string canon = serialize_config(cfg);
  PipelineConfig again = parse_config_text(canon);
  CHECK(serialize_config(again) == canon);
  CHECK(cfg.stage1.iterations == 6);
  CHECK(cfg.train_resolution == 16);
}

TEST_CASE("config validation messages are specific") {
  const auto message_of = [](const std::string& extra) {
    PipelineConfig cfg = parse_config_text(tiny_config_text() + extra);
    try {
      validate_config(cfg);
      return std::string("(valid)");
    } catch (const ConfigInvalid& e) {
      return std::string(e.what());
    }
  };

  CHECK(message_of("") == "(valid)");
  CHECK(message_of("stage1.t_min=0.8,0.9\nstage1.t_max=0.7,0.95\n").find("stage1.t_min must stay strictly below") !=
        std::string::npos);
  CHECK(message_of("stage2.position_radius=2.5\n").find("stage2.position_radius must be smaller than room.half_extent") !=
        std::string::npos);
  CHECK(message_of("run.stages=321\n").find("stage order violation") != std::string::npos);
  CHECK(message_of("run.stages=23\n").find("must start with stage 1") != std::string::npos);
  CHECK(message_of("camera.half_fov_deg=95\n").find("camera.half_fov_deg") != std::string::npos);
  CHECK(message_of("stage3.views=1\n").find("stage3.views must be at least 2") != std::string::npos);
}

TEST_CASE("unknown config keys are hard errors") {
  CHECK_THROWS_WITH_AS(parse_config_text("stage2.position_radis=0.7\n"),
                       "unknown config key: 'stage2.position_radis'", ConfigInvalid);
}

TEST_CASE("checkpoint encode/decode round-trips and save-load-save is identical") {
  Checkpoint ck;
  ck.config_text = serialize_config(parse_config_text(tiny_config_text()));
  ck.next_stage = 2;
  ck.next_iter = 3;
  ck.global_iter = 9;
  Rng rng(77);
  ck.params.resize(257);
  for (auto& p : ck.params) p = static_cast<float>(rng.uniform(-1, 1));
  ck.frozen = ck.params;
  ck.adam_m.assign(257, 0.25f);
  ck.adam_v.assign(257, 0.5f);
  ck.adam_step = 41;
  ck.sampler_rng = {1, 2, 3, 4};
  ck.step_rng = {5, 6, 7, 8};
  ck.prompt_meta = "prompt";
  ck.negative_prompt_meta = "negative";

  TempDir dir("ckpt");
  const fs::path a = dir.path / "a.bin";
  const fs::path b = dir.path / "b.bin";
  save_checkpoint(ck, a);
  const Checkpoint loaded = load_checkpoint(a);
  save_checkpoint(loaded, b);
  CHECK(read_bytes(a) == read_bytes(b));
  CHECK(loaded.params == ck.params);
  CHECK(loaded.adam_step == 41);
  CHECK(loaded.sampler_rng == ck.sampler_rng);
  CHECK(loaded.negative_prompt_meta == "negative");
}

TEST_CASE("corrupt checkpoints are rejected with CheckpointCorrupt") {
  Checkpoint ck;
  ck.config_text = "seed=1\n";
  ck.params.assign(8, 1.f);
  ck.adam_m.assign(8, 0.f);
  ck.adam_v.assign(8, 0.f);
  auto bytes = encode_checkpoint(ck);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(truncated), CheckpointCorrupt);

  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), CheckpointCorrupt);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), CheckpointCorrupt);

  auto bad_version = bytes;
  bad_version[8] = 99;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), CheckpointCorrupt);
}

TEST_CASE("generate is deterministic, resumable and stage-selectable") {
  const PipelineConfig cfg = [] {
    PipelineConfig c = parse_config_text(tiny_config_text());
    c.checkpoint_every = 3;
    return c;
  }();

  TempDir da("gen_a"), db("gen_b"), dc("gen_c"), ds("gen_s");

  // Two identical runs: bitwise-identical checkpoints and diagnostics.
  const GenerateOutcome a = run_generate(cfg, da.path / "out");
  const GenerateOutcome b = run_generate(cfg, db.path / "out");
  CHECK(read_bytes(a.final_checkpoint) == read_bytes(b.final_checkpoint));
  CHECK(diag_rows(a.diagnostics) == diag_rows(b.diagnostics));
  CHECK(diag_rows(a.diagnostics).size() == 16);

  // Stage-boundary checkpoints exist and the final cursor reports done.
  CHECK(a.stage_checkpoints.count(1) == 1);
  CHECK(a.stage_checkpoints.count(2) == 1);
  const Checkpoint final_ck = load_checkpoint(a.final_checkpoint);
  CHECK(final_ck.next_stage == 4);
  CHECK(final_ck.global_iter == 16);
  CHECK(final_ck.frozen.size() == final_ck.params.size());

  // Resume from the mid-stage-2 cadence checkpoint reproduces the
  // uninterrupted run bitwise (checkpoints) and row-wise (diagnostics).
  const fs::path mid = da.path / "out" / "checkpoints" / "ckpt_iter_000009.bin";
  REQUIRE(fs::exists(mid));
  const GenerateOutcome resumed = run_generate(PipelineConfig{}, dc.path / "out", mid);
  CHECK(read_bytes(resumed.final_checkpoint) == read_bytes(a.final_checkpoint));
  auto prefix = diag_rows(a.diagnostics);
  prefix.resize(9);
  auto tail = diag_rows(resumed.diagnostics);
  std::vector<std::string> stitched = prefix;
  stitched.insert(stitched.end(), tail.begin(), tail.end());
  CHECK(stitched == diag_rows(a.diagnostics));

  // --stages 1 analogue: only stage 1 runs and the cursor says so.
  PipelineConfig stage1_only = cfg;
  stage1_only.run_stages = "1";
  const GenerateOutcome s1 = run_generate(stage1_only, ds.path / "out");
  const Checkpoint s1_ck = load_checkpoint(s1.final_checkpoint);
  CHECK(s1_ck.next_stage == 4);
  CHECK(s1_ck.global_iter == 6);
  CHECK(diag_rows(s1.diagnostics).size() == 6);
}

TEST_CASE("the output directory lock refuses a second concurrent run") {
  TempDir dir("lock");
  const fs::path out = dir.path / "out";
  fs::create_directories(out);
  std::ofstream(out / ".roomgen.lock") << "held";
  const PipelineConfig cfg = parse_config_text(tiny_config_text());
  CHECK_THROWS_AS(run_generate(cfg, out), Error);
}

TEST_CASE("render command: turntable frames are deterministic byte-for-byte") {
  const PipelineConfig cfg = parse_config_text(tiny_config_text());
  TempDir dir("render");
  const GenerateOutcome out = run_generate(cfg, dir.path / "out");

  run_render(out.final_checkpoint, "turntable:frames=4;radius=0;pitch=0;size=16", dir.path / "r1");
  run_render(out.final_checkpoint, "turntable:frames=4;radius=0;pitch=0;size=16", dir.path / "r2");
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d", i);
    CHECK(fs::exists(dir.path / "r1" / (std::string(name) + ".png")));
    CHECK(read_bytes(dir.path / "r1" / (std::string(name) + ".png")) ==
          read_bytes(dir.path / "r2" / (std::string(name) + ".png")));
    CHECK(read_bytes(dir.path / "r1" / (std::string(name) + ".pfm")) ==
          read_bytes(dir.path / "r2" / (std::string(name) + ".pfm")));
  }

  run_render(out.final_checkpoint, "pos=0.1,0,0;yaw=30;pitch=5;fov=40;size=16", dir.path / "r3");
  CHECK(fs::exists(dir.path / "r3" / "view_000.png"));
  CHECK_THROWS_AS(run_render(out.final_checkpoint, "pos=zzz", dir.path / "r4"), Error);
  CHECK_THROWS_AS(run_render(dir.path / "r1" / "view_000.png", "turntable:frames=1", dir.path / "r5"),
                  CheckpointCorrupt);
}

TEST_CASE("eval reports are identical across invocations") {
  const PipelineConfig cfg = parse_config_text(tiny_config_text());
  TempDir dir("eval");
  const GenerateOutcome out = run_generate(cfg, dir.path / "out");
  const EvalReport r1 = run_eval(out.final_checkpoint, dir.path / "report1.txt");
  const EvalReport r2 = run_eval(out.final_checkpoint, dir.path / "report2.txt");
  CHECK(read_bytes(dir.path / "report1.txt") == read_bytes(dir.path / "report2.txt"));
  CHECK(r1.psnr_db == r2.psnr_db);
  CHECK(r1.n_poses == 4);
  CHECK(r1.n_pairs == 2);
}

TEST_CASE("zero-density field evaluates to the closed-form background PSNR") {
  PipelineConfig cfg = parse_config_text(tiny_config_text());
  validate_config(cfg);

  // Build a checkpoint holding an empty field directly.
  RadianceField empty = RadianceField::zeros(cfg.field_config());
  empty.params_mut()[empty.param_count() - 4] = -40.f;
  Checkpoint ck;
  ck.config_text = serialize_config(cfg);
  ck.next_stage = 4;
  ck.params.assign(empty.params().begin(), empty.params().end());
  ck.adam_m.assign(empty.param_count(), 0.f);
  ck.adam_v.assign(empty.param_count(), 0.f);
  TempDir dir("zeroeval");
  const fs::path path = dir.path / "empty.bin";
  save_checkpoint(ck, path);

  const EvalReport report = run_eval(path, dir.path / "report.txt");

  // Independent oracle: every render is exactly the background constant.
  double mse = 0.0;
  size_t count = 0;
  for (const auto& pose : held_out_poses(cfg)) {
    const ImageF truth = oracle_image(cfg.room, pose);
    for (size_t i = 0; i < truth.data.size(); ++i) {
      const double d = cfg.background[i % 3] - truth.data[i];
      mse += d * d;
    }
    count += truth.data.size();
  }
  const double expect_psnr = psnr_db(mse / count);
  CHECK(report.psnr_db == doctest::Approx(expect_psnr).epsilon(1e-9));
}

TEST_CASE("eval without an analytic room raises OracleUnavailable") {
  PipelineConfig cfg = parse_config_text(tiny_config_text() +
                                         "room.analytic=false\nprior.kind=caa\nrun.stages=1\n");
  validate_config(cfg);
  TempDir dir("nooracle");
  const GenerateOutcome out = run_generate(cfg, dir.path / "out");
  CHECK_THROWS_AS(run_eval(out.final_checkpoint, dir.path / "report.txt"), OracleUnavailable);
}

TEST_CASE("reprojection consistency of exactly consistent views is tiny") {
  // Synthetic exact construction: analytic oracle images of a
  // same-position pair stand in for renders of a perfectly fit field.
  const RoomSpec room;
  CameraPose a, b;
  a.position = b.position = Vector3d(0.3, 0.1, -0.2);
  a.rotation = rotation_from_yaw_pitch(0.4, 0.1);
  b.rotation = rotation_from_yaw_pitch(0.9, -0.15);
  a.intrinsics = b.intrinsics = {45.0 * kPi / 180.0, 64, 64};
  const double mad = reprojection_mad(oracle_image(room, a), oracle_image(room, b), a, b);
  CHECK(mad < 0.02);
  CHECK(mad > 0.0);
}

TEST_CASE("held-out eval poses stay inside the stage-3 shell with free rotations") {
  const PipelineConfig cfg = parse_config_text(tiny_config_text());
  const auto poses = held_out_poses(cfg);
  REQUIRE(static_cast<int>(poses.size()) == cfg.eval_n_poses);
  for (const auto& pose : poses) {
    const double r = pose.position.norm();
    CHECK(r >= cfg.stage3.min_position_radius - 1e-12);
    CHECK(r <= cfg.stage3.position_radius + 1e-12);
    CHECK(is_rotation_matrix(pose.rotation));
  }
  const auto pairs = held_out_pairs(cfg);
  REQUIRE(static_cast<int>(pairs.size()) == cfg.eval_n_pairs);
  for (const auto& [pa, pb] : pairs) CHECK((pa.position - pb.position).norm() == 0.0);
}
