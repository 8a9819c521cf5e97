#include "roomgen/volume_renderer.hpp"

#include <bit>
#include <cmath>
#include <vector>

#include "roomgen/threading.hpp"

namespace roomgen {

namespace {

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Stateless per-(ray, sample) jitter in [0, 1).
inline double jitter01(uint64_t state, int64_t ray, int sample) {
  uint64_t x = state ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(ray + 1)) ^
               (0xbf58476d1ce4e5b9ull * static_cast<uint64_t>(sample + 1));
  return static_cast<double>(splitmix64(x) >> 11) * 0x1.0p-53;
}

// Per-worker backward workspace: captured samples for one ray and a hot
// dense buffer for decoder gradients, flushed once per worker range.
struct BackwardWorkspace {
  std::vector<RadianceField::QueryScratch> scratch;
  std::vector<double> att, weight, t_before;
  std::vector<double> decoder_grad;

  BackwardWorkspace(int n_samples, size_t decoder_count)
      : scratch(n_samples), att(n_samples), weight(n_samples), t_before(n_samples),
        decoder_grad(decoder_count, 0.0) {}
};

// Marches one ray with per-sample capture. Returns the sample count taken
// and final transmittance.
struct MarchResult {
  int taken = 0;
  double transmittance = 1.0;
  Color3 color{0, 0, 0};
  double depth_acc = 0.0;
  double weight_acc = 0.0;
};

MarchResult march_capture(const RadianceField& field, const Vector3d& origin, const Vector3d& dir,
                          const RaySampling& sampling, int64_t ray_index, double delta,
                          BackwardWorkspace& ws) {
  MarchResult r;
  const int n = sampling.n_samples;
  for (int i = 0; i < n; ++i) {
    const double u = sampling.stratified ? jitter01(sampling.rng_state, ray_index, i) : 0.5;
    const double t = sampling.near + (i + u) * delta;
    field.query_capture(origin + dir * t, ws.scratch[i]);
    ws.att[i] = std::exp(-ws.scratch[i].sigma * delta);
    ws.t_before[i] = r.transmittance;
    ws.weight[i] = r.transmittance * (1.0 - ws.att[i]);
    for (int c = 0; c < 3; ++c) r.color[c] += ws.weight[i] * ws.scratch[i].rgb[c];
    r.depth_acc += ws.weight[i] * t;
    r.weight_acc += ws.weight[i];
    r.transmittance *= ws.att[i];
    r.taken = i + 1;
    if (r.transmittance < sampling.termination_eps) break;
  }
  return r;
}

// Reverse scan over a captured ray. For sample i:
//   dC/dsigma_i = delta * (T_i e_i c_i - sum_{j>i} w_j c_j - T_end bg)
//   dC/dc_i     = w_i
//   dO/dsigma_i = delta * (T_i e_i - sum_{j>i} w_j)
void backprop_ray(const RadianceField& field, const BackwardWorkspace& ws, int taken, double end_transmittance,
                  const Color3& background, const double* gc, double go, double delta, double* grid_grad,
                  double* decoder_grad) {
  Color3 suffix_color{end_transmittance * background[0], end_transmittance * background[1],
                      end_transmittance * background[2]};
  double suffix_weight = 0.0;
  for (int i = taken - 1; i >= 0; --i) {
    const auto& s = ws.scratch[i];
    if (!s.in_bounds) continue;  // zero density and zero gradient
    const double front = ws.t_before[i] * ws.att[i];
    double d_sigma = 0.0;
    double d_color[3];
    for (int c = 0; c < 3; ++c) {
      d_sigma += gc[c] * delta * (front * s.rgb[c] - suffix_color[c]);
      d_color[c] = gc[c] * ws.weight[i];
    }
    d_sigma += go * delta * (front - suffix_weight);
    suffix_weight += ws.weight[i];
    for (int c = 0; c < 3; ++c) suffix_color[c] += ws.weight[i] * s.rgb[c];
    if (d_sigma != 0.0 || d_color[0] != 0.0 || d_color[1] != 0.0 || d_color[2] != 0.0)
      field.backward_split(s, d_sigma, d_color, grid_grad, decoder_grad);
  }
}

}  // namespace

uint64_t RaySampling::digest() const {
  uint64_t h = fnv1a64(&n_samples, sizeof(n_samples));
  const auto mix_double = [&h](double v) {
    const uint64_t bits = std::bit_cast<uint64_t>(v);
    h = fnv1a64(&bits, sizeof(bits), h);
  };
  mix_double(near);
  mix_double(far);
  const uint32_t strat = stratified ? 1 : 0;
  h = fnv1a64(&strat, sizeof(strat), h);
  h = fnv1a64(&rng_state, sizeof(rng_state), h);
  mix_double(termination_eps);
  return h;
}

RenderOutput render(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                    const Color3& background) {
  if (!(sampling.near < sampling.far)) throw Error("render requires near < far");
  if (sampling.n_samples < 2) throw Error("render requires n_samples >= 2");
  validate_pose(pose);

  const int w = pose.intrinsics.width;
  const int h = pose.intrinsics.height;
  RenderOutput out;
  out.color = ImageF(w, h, 3);
  out.depth = ImageF(w, h, 1);
  out.opacity = ImageF(w, h, 1);
  out.sampling_digest = sampling.digest();

  const RaySet rays = generate_rays(pose);
  const int n = sampling.n_samples;
  const double delta = (sampling.far - sampling.near) / n;

  parallel_for(static_cast<int64_t>(w) * h, [&](int64_t begin, int64_t end, int) {
    RadianceField::QueryScratch scratch;
    for (int64_t r = begin; r < end; ++r) {
      const Vector3d& dir = rays.directions[r];
      double transmittance = 1.0;
      Color3 acc{0, 0, 0};
      double acc_depth = 0.0, acc_weight = 0.0;
      for (int i = 0; i < n; ++i) {
        const double u = sampling.stratified ? jitter01(sampling.rng_state, r, i) : 0.5;
        const double t = sampling.near + (i + u) * delta;
        const FieldSample s = field.query_capture(rays.origin + dir * t, scratch);
        const double att = std::exp(-s.density * delta);
        const double weight = transmittance * (1.0 - att);
        for (int c = 0; c < 3; ++c) acc[c] += weight * s.color[c];
        acc_depth += weight * t;
        acc_weight += weight;
        transmittance *= att;
        if (transmittance < sampling.termination_eps) break;
      }
      for (int c = 0; c < 3; ++c) out.color.data[r * 3 + c] = acc[c] + transmittance * background[c];
      out.depth.data[r] = acc_depth / std::max(acc_weight, 1e-6);
      out.opacity.data[r] = acc_weight;
    }
  });
  return out;
}

void render_backward(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                     const Color3& background, const ImageF& color_grad, const ImageF* opacity_grad,
                     uint64_t forward_digest, std::span<double> grad) {
  if (sampling.digest() != forward_digest)
    throw SamplingMismatch("render_backward sampling plan differs from the forward render");
  validate_pose(pose);
  const int w = pose.intrinsics.width;
  const int h = pose.intrinsics.height;
  if (color_grad.width != w || color_grad.height != h || color_grad.channels != 3)
    throw ShapeMismatch("color gradient image does not match the render size");
  if (opacity_grad &&
      (opacity_grad->width != w || opacity_grad->height != h || opacity_grad->channels != 1))
    throw ShapeMismatch("opacity gradient image does not match the render size");
  if (grad.size() != field.param_count()) throw ShapeMismatch("gradient buffer size mismatch");

  const RaySet rays = generate_rays(pose);
  const int n = sampling.n_samples;
  const double delta = (sampling.far - sampling.near) / n;
  const int64_t n_rays = static_cast<int64_t>(w) * h;

  const int workers = thread_count();
  std::vector<std::vector<double>> partials;
  if (workers > 1) partials.assign(workers, std::vector<double>(grad.size(), 0.0));

  parallel_for(n_rays, [&](int64_t begin, int64_t end, int worker) {
    std::span<double> acc = workers > 1 ? std::span<double>(partials[worker]) : grad;
    BackwardWorkspace ws(n, field.decoder_param_count());
    for (int64_t r = begin; r < end; ++r) {
      const double* gc = color_grad.data.data() + r * 3;
      const double go = opacity_grad ? opacity_grad->data[r] : 0.0;
      if (gc[0] == 0.0 && gc[1] == 0.0 && gc[2] == 0.0 && go == 0.0) continue;
      const MarchResult m = march_capture(field, rays.origin, rays.directions[r], sampling, r, delta, ws);
      backprop_ray(field, ws, m.taken, m.transmittance, background, gc, go, delta, acc.data(),
                   ws.decoder_grad.data());
    }
    double* dst = acc.data() + field.grid_param_count();
    for (size_t i = 0; i < ws.decoder_grad.size(); ++i) dst[i] += ws.decoder_grad[i];
  });

  if (workers > 1) {
    for (int t = 0; t < workers; ++t)
      for (size_t i = 0; i < grad.size(); ++i) grad[i] += partials[t][i];
  }
}

FusedStats render_sds_fused(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                            const Color3& background, const ImageF& target, double residual_scale, double omega,
                            std::span<double> grad) {
  if (!(sampling.near < sampling.far)) throw Error("render requires near < far");
  if (sampling.n_samples < 2) throw Error("render requires n_samples >= 2");
  validate_pose(pose);
  const int w = pose.intrinsics.width;
  const int h = pose.intrinsics.height;
  if (target.width != w || target.height != h || target.channels != 3)
    throw ShapeMismatch("target image does not match the render size");
  if (grad.size() != field.param_count()) throw ShapeMismatch("gradient buffer size mismatch");

  const RaySet rays = generate_rays(pose);
  const int n = sampling.n_samples;
  const double delta = (sampling.far - sampling.near) / n;
  const int64_t n_rays = static_cast<int64_t>(w) * h;

  const int workers = thread_count();
  std::vector<std::vector<double>> partials;
  if (workers > 1) partials.assign(workers, std::vector<double>(grad.size(), 0.0));
  std::vector<FusedStats> stats(std::max(workers, 1));

  parallel_for(n_rays, [&](int64_t begin, int64_t end, int worker) {
    std::span<double> acc = workers > 1 ? std::span<double>(partials[worker]) : grad;
    FusedStats& st = stats[worker];
    BackwardWorkspace ws(n, field.decoder_param_count());
    for (int64_t r = begin; r < end; ++r) {
      const MarchResult m = march_capture(field, rays.origin, rays.directions[r], sampling, r, delta, ws);
      double gc[3];
      for (int c = 0; c < 3; ++c) {
        const double color = m.color[c] + m.transmittance * background[c];
        const double residual = residual_scale * (color - target.data[r * 3 + c]);
        st.residual_sq_sum += residual * residual;
        gc[c] = omega * residual;
      }
      st.residual_count += 3;
      backprop_ray(field, ws, m.taken, m.transmittance, background, gc, 0.0, delta, acc.data(),
                   ws.decoder_grad.data());
    }
    double* dst = acc.data() + field.grid_param_count();
    for (size_t i = 0; i < ws.decoder_grad.size(); ++i) dst[i] += ws.decoder_grad[i];
  });

  if (workers > 1) {
    for (int t = 0; t < workers; ++t)
      for (size_t i = 0; i < grad.size(); ++i) grad[i] += partials[t][i];
  }
  FusedStats total;
  for (const auto& st : stats) {
    total.residual_sq_sum += st.residual_sq_sum;
    total.residual_count += st.residual_count;
  }
  return total;
}

}  // namespace roomgen
