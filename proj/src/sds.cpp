#include "roomgen/sds.hpp"

#include <chrono>
#include <cmath>

#include "roomgen/pose_transform.hpp"

namespace roomgen {

namespace {

double omega_of(OmegaMode mode, const NoiseSchedule& schedule, double t) {
  switch (mode) {
    case OmegaMode::kConstantOne:
      return 1.0;
    case OmegaMode::kSigmaSquared: {
      const double s = schedule.sigma(t);
      return s * s;
    }
  }
  return 1.0;
}

void adam_update(RadianceField& field, std::span<const double> grad, AdamState& adam, const AdamConfig& cfg) {
  adam.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
  const size_t grid_count = field.grid_param_count();
  auto params = field.params_mut();
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * adam.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * adam.v[i] + (1.0 - cfg.beta2) * g * g;
    adam.m[i] = static_cast<float>(m);
    adam.v[i] = static_cast<float>(v);
    const double lr = i < grid_count ? cfg.lr_grid : cfg.lr_decoder;
    const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    params[i] = static_cast<float>(params[i] - update);
  }
}

}  // namespace

SdsStep sds_step(RadianceField& field, const ViewBatch& batch, std::span<const CameraPose> prior_poses,
                 const ScoreProvider& provider, std::pair<double, double> t_bounds, AdamState& adam,
                 Rng& step_rng, const SdsSettings& settings) {
  const auto t_start = std::chrono::steady_clock::now();
  const size_t n_views = batch.poses.size();
  if (prior_poses.size() != n_views) throw ShapeMismatch("prior pose count differs from the batch");
  if (adam.m.size() != field.param_count()) throw ShapeMismatch("optimizer state does not match the field");

  SdsStep step;
  step.iteration = batch.iteration_index;
  step.stage_id = batch.stage_id;

  // Draw order is fixed for reproducible resume: shared timestep, one
  // jitter seed per view, then per-view noise images.
  step.t = step_rng.uniform(t_bounds.first, t_bounds.second);
  step.omega = omega_of(settings.omega_mode, settings.schedule, step.t);

  std::vector<uint64_t> jitter_seeds(n_views);
  for (auto& s : jitter_seeds) s = step_rng.next_u64();

  std::vector<ImageF> noise(n_views);
  for (size_t v = 0; v < n_views; ++v) {
    const auto& k = batch.poses[v].intrinsics;
    noise[v] = ImageF(k.width, k.height, 3);
    for (auto& x : noise[v].data) x = step_rng.gaussian();
  }

  std::vector<Color3> backgrounds(n_views, settings.background);
  if (settings.random_train_background)
    for (auto& bg : backgrounds)
      for (double& c : bg) c = step_rng.uniform();

  std::vector<RaySampling> plans(n_views, settings.sampling);
  for (size_t v = 0; v < n_views; ++v) plans[v].rng_state = jitter_seeds[v];

  // Pixel-local providers (the oracle family) factor their residual as
  // scale * (render - target), which lets render and backward fuse into
  // one pass per view. Everything else takes the generic two-pass route.
  std::vector<ImageF> local_targets(n_views);
  std::vector<double> local_scales(n_views);
  bool all_local = true;
  for (size_t v = 0; v < n_views && all_local; ++v)
    all_local = provider.pixel_local_target(prior_poses[v], step.t, &local_targets[v], &local_scales[v]);

  std::vector<double> grad(field.param_count(), 0.0);
  if (all_local) {
    double sq_sum = 0.0;
    int64_t count = 0;
    for (size_t v = 0; v < n_views; ++v) {
      const FusedStats stats = render_sds_fused(field, batch.poses[v], plans[v], backgrounds[v],
                                                local_targets[v], local_scales[v], step.omega, grad);
      sq_sum += stats.residual_sq_sum;
      count += stats.residual_count;
    }
    step.residual_norm = count > 0 ? std::sqrt(sq_sum / count) : 0.0;
  } else {
    std::vector<RenderOutput> renders(n_views);
    for (size_t v = 0; v < n_views; ++v)
      renders[v] = render(field, batch.poses[v], plans[v], backgrounds[v]);

    ScoreQuery query;
    query.renders = renders;
    query.poses = prior_poses;
    query.t = step.t;
    query.noise = noise;
    const ScoreResponse response = provider.score(query);
    if (response.residuals.size() != n_views) throw ShapeMismatch("provider returned a wrong view count");

    double sq_sum = 0.0;
    size_t count = 0;
    for (const auto& r : response.residuals) {
      for (double x : r.data) sq_sum += x * x;
      count += r.data.size();
    }
    step.residual_norm = count > 0 ? std::sqrt(sq_sum / count) : 0.0;

    // Pixel gradient omega(t) * (eps_hat - eps); the provider output is a
    // constant with respect to the field (stop-gradient).
    for (size_t v = 0; v < n_views; ++v) {
      const ImageF& residual = response.residuals[v];
      if (residual.width != renders[v].color.width || residual.height != renders[v].color.height ||
          residual.channels != 3)
        throw ShapeMismatch("provider residual shape mismatch");
      ImageF pixel_grad(residual.width, residual.height, 3);
      for (size_t i = 0; i < residual.data.size(); ++i) pixel_grad.data[i] = step.omega * residual.data[i];
      render_backward(field, batch.poses[v], plans[v], backgrounds[v], pixel_grad, nullptr,
                      renders[v].sampling_digest, grad);
    }
  }

  double norm_sq = 0.0;
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteGradient("SDS step produced a non-finite gradient; step rejected");
    norm_sq += g * g;
  }
  step.grad_norm = std::sqrt(norm_sq);

  adam_update(field, grad, adam, settings.adam);
  field.check_finite();

  step.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return step;
}

std::vector<SdsStep> run_stage(RadianceField& field, const StageConfig& stage, const Intrinsics& train_intrinsics,
                               const ScoreProvider& provider, const RadianceField* frozen_stage1, AdamState& adam,
                               Rng& sampler_rng, Rng& step_rng, const SdsSettings& settings,
                               const StageCallbacks& callbacks, int64_t start_iteration) {
  std::vector<SdsStep> diagnostics;
  diagnostics.reserve(stage.iterations - start_iteration);

  if (stage.stage_id == 2 && settings.pose_transform_enabled && frozen_stage1 == nullptr)
    throw Error("stage 2 with pose transformation needs the frozen stage-1 field");

  RaySampling depth_sampling = settings.sampling;
  depth_sampling.stratified = false;
  depth_sampling.rng_state = 0;
  const Intrinsics depth_intr =
      train_intrinsics.with_size(settings.depth_estimate_resolution, settings.depth_estimate_resolution);

  int consecutive_failures = 0;
  const auto note_failure = [&](const char* what) {
    if (++consecutive_failures >= settings.max_consecutive_failures)
      throw AbortedStage(std::string("stage aborted after repeated failures: ") + what);
  };

  for (int64_t iter = start_iteration; iter < stage.iterations; ++iter) {
    const auto bounds = timestep_bounds(stage, iter);

    ViewBatch batch;
    std::vector<CameraPose> prior_poses;
    switch (stage.stage_id) {
      case 1:
        batch = sample_stage1(stage, train_intrinsics, iter, sampler_rng);
        prior_poses.assign(batch.poses.begin(), batch.poses.end());
        break;
      case 2: {
        batch = sample_stage2(stage, train_intrinsics, iter, sampler_rng);
        prior_poses.resize(batch.poses.size());
        for (size_t v = 0; v < batch.poses.size(); ++v) {
          if (!settings.pose_transform_enabled) {
            // Panorama priors assume the camera sits at the center; without
            // the transformation the prior sees the real rotation and FOV
            // but a zeroed position.
            prior_poses[v] = batch.poses[v];
            prior_poses[v].position = Vector3d::Zero();
            continue;
          }
          for (;;) {
            CameraPose center_pose = batch.poses[v];
            center_pose.position = Vector3d::Zero();
            center_pose.intrinsics = depth_intr;
            try {
              const double d = estimate_view_depth(*frozen_stage1, center_pose, depth_sampling,
                                                   settings.background, settings.depth_settings);
              const EquivalentPosePair pair = transform_pose(batch.poses[v], d, settings.depth_margin);
              prior_poses[v] = pair.equivalent;
              consecutive_failures = 0;
              break;
            } catch (const DegenerateDepth&) {
              note_failure("degenerate depth");
            } catch (const InsufficientOpacity&) {
              note_failure("insufficient opacity");
            }
            batch.poses[v] = sample_outward_pose(stage, train_intrinsics, sampler_rng);
          }
        }
        // Stage-2 routing invariant: the renderer sees off-center poses,
        // the prior sees origin-centered ones with identical rotations.
        if (settings.pose_transform_enabled) {
          for (size_t v = 0; v < batch.poses.size(); ++v) {
            if (batch.poses[v].position.norm() == 0.0 || prior_poses[v].position.norm() != 0.0 ||
                (batch.poses[v].rotation - prior_poses[v].rotation).cwiseAbs().maxCoeff() != 0.0)
              throw Error("stage-2 pose routing invariant violated");
          }
        }
        break;
      }
      case 3:
        batch = sample_stage3(stage, train_intrinsics, iter, sampler_rng);
        prior_poses.assign(batch.poses.begin(), batch.poses.end());
        break;
      default:
        throw Error("stage_id must be 1, 2 or 3");
    }

    SdsStep step;
    try {
      step = sds_step(field, batch, prior_poses, provider, bounds, adam, step_rng, settings);
      consecutive_failures = 0;
    } catch (const NonFiniteGradient&) {
      note_failure("non-finite gradient");
      step.iteration = iter;
      step.stage_id = stage.stage_id;
      step.t = std::numeric_limits<double>::quiet_NaN();
      step.grad_norm = std::numeric_limits<double>::quiet_NaN();
    }
    diagnostics.push_back(step);
    if (callbacks.on_step) callbacks.on_step(step);
    if (callbacks.after_iteration) callbacks.after_iteration(iter);
  }
  return diagnostics;
}

}  // namespace roomgen
