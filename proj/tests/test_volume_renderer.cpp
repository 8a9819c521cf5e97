#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "roomgen/volume_renderer.hpp"

using namespace roomgen;

namespace {

constexpr double kPi = std::numbers::pi;

FieldConfig tiny_field_config(double bound = 4.0) {
  FieldConfig cfg;
  cfg.levels = 2;
  cfg.table_size = 1 << 8;
  cfg.feature_dim = 2;
  cfg.base_resolution = 4;
  cfg.max_resolution = 16;
  cfg.hidden_units = 16;
  cfg.bounds_min = Vector3d(-bound, -bound, -bound);
  cfg.bounds_max = Vector3d(bound, bound, bound);
  return cfg;
}

// Constant-density field: all parameters zero except the density output
// bias, so sigma = softplus(bias) and color = 0.5 everywhere in bounds.
RadianceField constant_field(double density, double bound = 4.0) {
  RadianceField field = RadianceField::zeros(tiny_field_config(bound));
  const double bias = std::log(std::exp(density) - 1.0);  // softplus inverse
  field.params_mut()[field.param_count() - 4] = static_cast<float>(bias);
  return field;
}

RadianceField empty_field(double bound = 4.0) {
  RadianceField field = RadianceField::zeros(tiny_field_config(bound));
  field.params_mut()[field.param_count() - 4] = -40.f;  // softplus(-40) ~ 4e-18
  return field;
}

CameraPose forward_pose(int size, double half_fov_deg = 45.0) {
  CameraPose pose;
  pose.intrinsics = {half_fov_deg * kPi / 180.0, size, size};
  return pose;
}

double render_loss(const RadianceField& field, const CameraPose& pose, const RaySampling& sampling,
                   const Color3& bg, const ImageF& target) {
  const RenderOutput out = render(field, pose, sampling, bg);
  double acc = 0.0;
  for (size_t i = 0; i < out.color.data.size(); ++i) {
    const double d = out.color.data[i] - target.data[i];
    acc += 0.5 * d * d;
  }
  return acc;
}

}  // namespace

TEST_CASE("zero-density field renders the background with zero opacity") {
  const RadianceField field = empty_field();
  const CameraPose pose = forward_pose(8);
  RaySampling sampling;
  sampling.far = 3.0;
  const Color3 bg{0.2, 0.5, 0.9};
  const RenderOutput out = render(field, pose, sampling, bg);
  for (int i = 0; i < 64; ++i) {
    CHECK(out.opacity.data[i] < 1e-12);
    CHECK(std::abs(out.color.data[i * 3 + 0] - 0.2) < 1e-12);
    CHECK(std::abs(out.color.data[i * 3 + 1] - 0.5) < 1e-12);
    CHECK(std::abs(out.color.data[i * 3 + 2] - 0.9) < 1e-12);
  }
}

TEST_CASE("homogeneous slab matches the closed-form transmittance") {
  // sigma = 1 over a ray segment of length 2, entirely inside the bounds.
  const RadianceField field = constant_field(1.0);
  CameraPose pose = forward_pose(9, 30.0);
  RaySampling sampling;
  sampling.near = 0.5;
  sampling.far = 2.5;
  sampling.n_samples = 64;
  sampling.stratified = true;
  sampling.rng_state = 99;
  sampling.termination_eps = 0.0;
  const Color3 bg{0.25, 0.25, 0.25};
  const RenderOutput out = render(field, pose, sampling, bg);

  // Center ray: optical depth exactly sigma * L = 2 (constant density, bin
  // widths sum to far - near). Off-center rays see the same depth along
  // their own parameter, so every pixel agrees.
  const double expect_opacity = 1.0 - std::exp(-2.0);
  for (size_t i = 0; i < out.opacity.data.size(); ++i) {
    CHECK(out.opacity.data[i] == doctest::Approx(expect_opacity).epsilon(1e-9));
    CHECK(out.color.data[i * 3] ==
          doctest::Approx(expect_opacity * 0.5 + std::exp(-2.0) * 0.25).epsilon(1e-9));
  }
}

TEST_CASE("weights plus final transmittance conserve to one") {
  // T is recovered through the public interface by rendering two
  // backgrounds: color(bg1) - color(bg0) = T * (bg1 - bg0).
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    RadianceField field(tiny_field_config(), 100 + trial);
    for (auto& p : field.params_mut()) p = static_cast<float>(rng.uniform(-0.4, 0.4));
    CameraPose pose;
    pose.rotation = rotation_from_yaw_pitch(rng.uniform(0, 2 * kPi), rng.uniform(-1.0, 1.0));
    pose.position = Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    pose.intrinsics = {45.0 * kPi / 180.0, 16, 16};  // 256 rays per trial
    RaySampling sampling;
    sampling.far = 6.0;
    sampling.rng_state = trial;
    sampling.termination_eps = 0.0;
    const RenderOutput black = render(field, pose, sampling, {0, 0, 0});
    const RenderOutput white = render(field, pose, sampling, {1, 1, 1});
    for (size_t i = 0; i < black.opacity.data.size(); ++i) {
      const double transmittance = white.color.data[i * 3] - black.color.data[i * 3];
      CHECK(std::abs(black.opacity.data[i] + transmittance - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("raising one sample's density never lowers opacity") {
  // A field whose bounds wrap exactly one sample position isolates that
  // sample; every other sample lands outside and contributes nothing.
  CameraPose pose = forward_pose(3, 20.0);
  RaySampling sampling;
  sampling.near = 0.5;
  sampling.far = 2.5;
  sampling.n_samples = 16;
  sampling.stratified = false;
  sampling.termination_eps = 0.0;
  // Sample index 7 of the center ray sits at x = 0.5 + (7 + 0.5) * 0.125.
  const double x7 = 0.5 + 7.5 * 0.125;
  double prev_opacity = -1.0;
  for (double density : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
    FieldConfig cfg = tiny_field_config();
    cfg.bounds_min = Vector3d(x7 - 0.01, -0.5, -0.5);
    cfg.bounds_max = Vector3d(x7 + 0.01, 0.5, 0.5);
    RadianceField field = RadianceField::zeros(cfg);
    field.params_mut()[field.param_count() - 4] = static_cast<float>(std::log(std::exp(density) - 1.0));
    const RenderOutput out = render(field, pose, sampling, {0, 0, 0});
    const double opacity = out.opacity.data[4];  // center pixel of 3x3
    CHECK(opacity > prev_opacity);
    prev_opacity = opacity;
  }
}

TEST_CASE("equal sampling state renders bitwise identically") {
  RadianceField field(tiny_field_config(), 42);
  Rng rng(6);
  for (auto& p : field.params_mut()) p = static_cast<float>(rng.uniform(-0.3, 0.3));
  const CameraPose pose = forward_pose(16);
  RaySampling sampling;
  sampling.far = 5.0;
  sampling.rng_state = 1234;
  const RenderOutput a = render(field, pose, sampling, {0.5, 0.5, 0.5});
  const RenderOutput b = render(field, pose, sampling, {0.5, 0.5, 0.5});
  CHECK(a.color.data == b.color.data);
  CHECK(a.depth.data == b.depth.data);
  CHECK(a.opacity.data == b.opacity.data);
  CHECK(a.sampling_digest == b.sampling_digest);

  RaySampling other = sampling;
  other.rng_state = 1235;
  const RenderOutput c = render(field, pose, other, {0.5, 0.5, 0.5});
  CHECK(c.color.data != a.color.data);
}

TEST_CASE("background changes barely affect fully opaque rays") {
  const RadianceField field = constant_field(40.0);  // opacity ~ 1 fast
  const CameraPose pose = forward_pose(8);
  RaySampling sampling;
  sampling.near = 0.2;
  sampling.far = 3.0;
  const RenderOutput a = render(field, pose, sampling, {0, 0, 0});
  const RenderOutput b = render(field, pose, sampling, {1, 1, 1});
  for (size_t i = 0; i < a.opacity.data.size(); ++i) {
    REQUIRE(a.opacity.data[i] > 0.999);
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(a.color.data[i * 3 + c] - b.color.data[i * 3 + c]) < 1e-3);
  }
}

TEST_CASE("render_backward: zero pixel gradients give zero parameter gradients") {
  RadianceField field(tiny_field_config(), 17);
  const CameraPose pose = forward_pose(4);
  RaySampling sampling;
  sampling.far = 3.0;
  const RenderOutput out = render(field, pose, sampling, {0.5, 0.5, 0.5});
  ImageF zero_grad(4, 4, 3);
  std::vector<double> grad(field.param_count(), 0.0);
  render_backward(field, pose, sampling, {0.5, 0.5, 0.5}, zero_grad, nullptr, out.sampling_digest, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("render_backward matches finite differences of an L2 loss") {
  FieldConfig cfg = tiny_field_config(2.0);
  RadianceField field(cfg, 55);
  Rng rng(56);
  for (auto& p : field.params_mut()) p = static_cast<float>(rng.uniform(-0.3, 0.3));

  const CameraPose pose = forward_pose(8);
  RaySampling sampling;
  sampling.near = 0.1;
  sampling.far = 3.2;
  sampling.n_samples = 24;
  sampling.rng_state = 7;
  sampling.termination_eps = 0.0;  // keep the loss smooth for the probe
  const Color3 bg{0.5, 0.5, 0.5};

  ImageF target(8, 8, 3);
  for (auto& v : target.data) v = rng.uniform(0.0, 1.0);

  const RenderOutput out = render(field, pose, sampling, bg);
  ImageF pixel_grad(8, 8, 3);
  for (size_t i = 0; i < pixel_grad.data.size(); ++i) pixel_grad.data[i] = out.color.data[i] - target.data[i];

  std::vector<double> grad(field.param_count(), 0.0);
  render_backward(field, pose, sampling, bg, pixel_grad, nullptr, out.sampling_digest, grad);

  auto params = field.params_mut();
  std::vector<size_t> indices;
  for (size_t i = 0; i < field.grid_param_count() && indices.size() < 10; i += 11)
    if (grad[i] != 0.0) indices.push_back(i);
  for (size_t i = field.grid_param_count(); i < field.param_count() && indices.size() < 20; i += 37)
    indices.push_back(i);
  REQUIRE(indices.size() >= 20);

  for (size_t idx : indices) {
    const float saved = params[idx];
    const double h = 1e-4;
    params[idx] = static_cast<float>(saved + h);
    const double hi_val = render_loss(field, pose, sampling, bg, target);
    const double hi = params[idx];
    params[idx] = static_cast<float>(saved - h);
    const double lo_val = render_loss(field, pose, sampling, bg, target);
    const double lo = params[idx];
    params[idx] = saved;
    const double fd = (hi_val - lo_val) / (hi - lo);
    const double tol = std::max(1e-3 * std::abs(fd), 1e-6);
    CHECK(std::abs(grad[idx] - fd) < tol);
  }
}

TEST_CASE("doubling pixel gradients exactly doubles parameter gradients") {
  RadianceField field(tiny_field_config(2.0), 60);
  Rng rng(61);
  for (auto& p : field.params_mut()) p = static_cast<float>(rng.uniform(-0.3, 0.3));
  const CameraPose pose = forward_pose(6);
  RaySampling sampling;
  sampling.far = 3.0;
  sampling.rng_state = 3;
  const RenderOutput out = render(field, pose, sampling, {0.5, 0.5, 0.5});

  ImageF g1(6, 6, 3), g2(6, 6, 3);
  for (size_t i = 0; i < g1.data.size(); ++i) {
    g1.data[i] = rng.uniform(-1.0, 1.0);
    g2.data[i] = 2.0 * g1.data[i];
  }
  std::vector<double> grad1(field.param_count(), 0.0), grad2(field.param_count(), 0.0);
  render_backward(field, pose, sampling, {0.5, 0.5, 0.5}, g1, nullptr, out.sampling_digest, grad1);
  render_backward(field, pose, sampling, {0.5, 0.5, 0.5}, g2, nullptr, out.sampling_digest, grad2);
  for (size_t i = 0; i < grad1.size(); ++i) CHECK(grad2[i] == 2.0 * grad1[i]);
}

TEST_CASE("render_backward rejects a mismatched sampling plan") {
  RadianceField field(tiny_field_config(), 2);
  const CameraPose pose = forward_pose(4);
  RaySampling sampling;
  sampling.far = 3.0;
  sampling.rng_state = 11;
  const RenderOutput out = render(field, pose, sampling, {0.5, 0.5, 0.5});
  RaySampling other = sampling;
  other.rng_state = 12;
  ImageF pixel_grad(4, 4, 3);
  std::vector<double> grad(field.param_count(), 0.0);
  CHECK_THROWS_AS(
      render_backward(field, pose, other, {0.5, 0.5, 0.5}, pixel_grad, nullptr, out.sampling_digest, grad),
      SamplingMismatch);
}

TEST_CASE("opacity gradients flow when requested") {
  RadianceField field(tiny_field_config(2.0), 70);
  Rng rng(71);
  for (auto& p : field.params_mut()) p = static_cast<float>(rng.uniform(-0.3, 0.3));
  const CameraPose pose = forward_pose(4);
  RaySampling sampling;
  sampling.far = 3.0;
  sampling.rng_state = 5;
  sampling.termination_eps = 0.0;
  const RenderOutput out = render(field, pose, sampling, {0.5, 0.5, 0.5});

  ImageF color_grad(4, 4, 3);  // zero
  ImageF op_grad(4, 4, 1);
  for (auto& v : op_grad.data) v = 1.0;
  std::vector<double> grad(field.param_count(), 0.0);
  render_backward(field, pose, sampling, {0.5, 0.5, 0.5}, color_grad, &op_grad, out.sampling_digest, grad);

  // Finite-difference the summed opacity against one decoder parameter.
  const size_t idx = field.param_count() - 4;  // density bias
  auto params = field.params_mut();
  const float saved = params[idx];
  const double h = 1e-4;
  const auto sum_opacity = [&] {
    const RenderOutput o = render(field, pose, sampling, {0.5, 0.5, 0.5});
    double acc = 0.0;
    for (double v : o.opacity.data) acc += v;
    return acc;
  };
  params[idx] = static_cast<float>(saved + h);
  const double hi_val = sum_opacity();
  const double hi = params[idx];
  params[idx] = static_cast<float>(saved - h);
  const double lo_val = sum_opacity();
  const double lo = params[idx];
  params[idx] = saved;
  const double fd = (hi_val - lo_val) / (hi - lo);
  CHECK(std::abs(grad[idx] - fd) < std::max(1e-3 * std::abs(fd), 1e-6));
}
