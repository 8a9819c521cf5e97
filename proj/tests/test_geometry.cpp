#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "roomgen/geometry.hpp"
#include "roomgen/rng.hpp"

using namespace roomgen;

namespace {

constexpr double kPi = std::numbers::pi;

CameraPose make_pose(double yaw, double pitch, const Vector3d& position, double half_fov_deg, int w, int h) {
  CameraPose pose;
  pose.rotation = rotation_from_yaw_pitch(yaw, pitch);
  pose.position = position;
  pose.intrinsics = {half_fov_deg * kPi / 180.0, w, h};
  return pose;
}

// Independent pinhole back-projection: camera frame is x forward, y up,
// z right; pixel centers at (i + 0.5, j + 0.5).
Vector3d reference_pixel_direction(const CameraPose& pose, double u, double v) {
  const double f = (pose.intrinsics.width / 2.0) / std::tan(pose.intrinsics.half_fov);
  Vector3d d(f, pose.intrinsics.height / 2.0 - v, u - pose.intrinsics.width / 2.0);
  d.normalize();
  return pose.rotation * d;
}

// Independent pinhole projection of a world direction into a camera.
bool reference_project(const CameraPose& pose, const Vector3d& dir, double* u, double* v) {
  const Vector3d d = pose.rotation.transpose() * dir;
  if (d.x() <= 0.0) return false;
  const double f = (pose.intrinsics.width / 2.0) / std::tan(pose.intrinsics.half_fov);
  *u = pose.intrinsics.width / 2.0 + f * d.z() / d.x();
  *v = pose.intrinsics.height / 2.0 - f * d.y() / d.x();
  return true;
}

}  // namespace

TEST_CASE("center pixel ray equals the camera forward axis") {
  // Odd image sizes put a pixel center exactly on the principal point.
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    const CameraPose pose = make_pose(rng.uniform(0, 2 * kPi), rng.uniform(-1.0, 1.0),
                                      Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
                                      rng.uniform(20.0, 70.0), 65, 65);
    const RaySet rays = generate_rays(pose);
    const Vector3d center = rays.directions[32 * 65 + 32];
    CHECK((center - pose.forward()).norm() < 1e-12);
  }
}

TEST_CASE("corner pixel at 45 degree half fov, against explicit back-projection") {
  const CameraPose pose = make_pose(0.0, 0.0, Vector3d::Zero(), 45.0, 64, 64);
  const RaySet rays = generate_rays(pose);
  // Corner pixel (0, 0): offsets are half a pixel inside the full +-W/2
  // span, so components approach (1, ~1, ~-1) before normalization.
  const Vector3d got = rays.directions[0];
  const Vector3d want = reference_pixel_direction(pose, 0.5, 0.5);
  CHECK((got - want).norm() < 1e-12);
  // Against the raw formula: f = 32, du = -31.5, dv = +31.5.
  const Vector3d unnormalized(32.0, 31.5, -31.5);
  CHECK((got - unnormalized.normalized()).norm() < 1e-12);
}

TEST_CASE("ray directions are unit and translation-invariant") {
  Rng rng(11);
  for (int k = 0; k < 10; ++k) {
    const double yaw = rng.uniform(0, 2 * kPi), pitch = rng.uniform(-1.2, 1.2);
    const double fov = rng.uniform(15.0, 75.0);
    const CameraPose a = make_pose(yaw, pitch, Vector3d::Zero(), fov, 17, 13);
    const CameraPose b = make_pose(yaw, pitch, Vector3d(0.3, -1.0, 2.0), fov, 17, 13);
    const RaySet ra = generate_rays(a);
    const RaySet rb = generate_rays(b);
    for (size_t i = 0; i < ra.directions.size(); ++i) {
      CHECK(std::abs(ra.directions[i].norm() - 1.0) < 1e-9);
      CHECK((ra.directions[i] - rb.directions[i]).norm() == 0.0);
    }
    CHECK(rb.origin == b.position);
  }
}

TEST_CASE("sample_rotation: yaw zero pitch zero faces world +x") {
  const Matrix3d r = rotation_from_yaw_pitch(0.0, 0.0);
  CHECK((r - Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sample_rotation: quarter turn is orthogonal to +x") {
  const Matrix3d r = rotation_from_yaw_pitch(kPi / 2, 0.0);
  const Vector3d fwd = r.col(0);
  CHECK(std::abs(fwd.dot(Vector3d::UnitX())) < 1e-15);
  CHECK(std::abs(std::abs(fwd.z()) - 1.0) < 1e-15);
}

TEST_CASE("sample_rotation: elevation equals pitch exactly") {
  // Oracle: elevation is asin of the forward axis' y component.
  const Matrix3d r = rotation_from_yaw_pitch(kPi / 4, kPi / 6);
  const double elevation = std::asin(r.col(0).y());
  CHECK(elevation == doctest::Approx(kPi / 6).epsilon(1e-12));
}

TEST_CASE("sample_rotation is orthonormal with det +1 and roll-free up") {
  Rng rng(23);
  for (int k = 0; k < 1000; ++k) {
    const Matrix3d r = rotation_from_yaw_pitch(rng.uniform(0, 2 * kPi), rng.uniform(-kPi / 2, kPi / 2));
    CHECK(is_rotation_matrix(r, 1e-9));
    CHECK(r.col(1).y() >= -1e-12);  // up keeps a non-negative world-up component
  }
}

TEST_CASE("correspondence_map: identity relation maps every pixel to itself") {
  const CameraPose pose = make_pose(0.7, -0.2, Vector3d(0.1, 0.2, 0.3), 45.0, 32, 24);
  const CorrespondenceMap map = correspondence_map(pose, pose);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      const auto& e = map.at(x, y);
      REQUIRE(e.in_bounds);
      CHECK(std::abs(e.u - (x + 0.5)) < 1e-6);
      CHECK(std::abs(e.v - (y + 0.5)) < 1e-6);
    }
}

TEST_CASE("correspondence_map: 90 degree yaw puts the source center out of bounds") {
  // The source forward axis sits 90 degrees from the target forward axis,
  // beyond the 45 degree half-FOV envelope.
  const CameraPose src = make_pose(0.0, 0.0, Vector3d::Zero(), 45.0, 33, 33);
  const CameraPose tgt = make_pose(kPi / 2, 0.0, Vector3d::Zero(), 45.0, 33, 33);
  const CorrespondenceMap map = correspondence_map(src, tgt);
  CHECK_FALSE(map.at(16, 16).in_bounds);
  const double angle = std::acos(src.forward().dot(tgt.forward()));
  CHECK(angle > tgt.intrinsics.half_fov);  // the oracle check itself
}

TEST_CASE("correspondence_map: 30 degree yaw center-pixel u matches 128 - 128 tan(30)") {
  const CameraPose src = make_pose(0.0, 0.0, Vector3d::Zero(), 45.0, 256, 256);
  const CameraPose tgt = make_pose(30.0 * kPi / 180.0, 0.0, Vector3d::Zero(), 45.0, 256, 256);
  const double expected_u = 128.0 - 128.0 * std::tan(30.0 * kPi / 180.0);  // ~54.1 px

  // Continuous-center projection through the independent formula.
  double u = 0, v = 0;
  REQUIRE(reference_project(tgt, src.forward(), &u, &v));
  CHECK(u == doctest::Approx(expected_u).epsilon(1e-12));

  // No pixel center sits exactly on the principal point of a 256-wide
  // image; the two straddling pixels bracket the expected value and their
  // midpoint lands on it to first order.
  const CorrespondenceMap map = correspondence_map(src, tgt);
  const auto& left = map.at(127, 127);
  const auto& right = map.at(128, 127);
  REQUIRE(left.in_bounds);
  REQUIRE(right.in_bounds);
  CHECK(left.u < expected_u);
  CHECK(right.u > expected_u);
  CHECK(std::abs(0.5 * (left.u + right.u) - expected_u) < 0.05);

  // And both directions agree with the independent projection everywhere.
  const CorrespondenceMap back = correspondence_map(tgt, src);
  for (int y = 0; y < 256; y += 37)
    for (int x = 0; x < 256; x += 41) {
      const Vector3d dir = reference_pixel_direction(tgt, x + 0.5, y + 0.5);
      double ru = 0, rv = 0;
      if (!reference_project(src, dir, &ru, &rv)) continue;
      const auto& entry = back.at(x, y);
      if (!entry.in_bounds) continue;
      CHECK(std::abs(entry.u - ru) < 1e-6);
      CHECK(std::abs(entry.v - rv) < 1e-6);
    }
}

TEST_CASE("correspondence_map requires coincident centers") {
  const CameraPose src = make_pose(0.0, 0.0, Vector3d::Zero(), 45.0, 16, 16);
  const CameraPose tgt = make_pose(0.0, 0.0, Vector3d(0.01, 0, 0), 45.0, 16, 16);
  CHECK_THROWS_AS(correspondence_map(src, tgt), CentersDiffer);
}

TEST_CASE("correspondence round-trip returns in-bounds pixels within half a pixel") {
  Rng rng(41);
  for (int k = 0; k < 100; ++k) {
    const Vector3d pos(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const CameraPose a = make_pose(rng.uniform(0, 2 * kPi), rng.uniform(-0.9, 0.9), pos, rng.uniform(30.0, 60.0),
                                   24, 24);
    const CameraPose b = make_pose(rng.uniform(0, 2 * kPi), rng.uniform(-0.9, 0.9), pos, rng.uniform(30.0, 60.0),
                                   24, 24);
    const CorrespondenceMap fwd = correspondence_map(a, b);
    const CorrespondenceMap bwd = correspondence_map(b, a);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        const auto& e = fwd.at(x, y);
        if (!e.in_bounds) continue;
        // Snap the continuous target coordinate to its containing pixel,
        // then map back and compare against that pixel's center.
        const int bx = std::min(static_cast<int>(e.u), 23);
        const int by = std::min(static_cast<int>(e.v), 23);
        const auto& r = bwd.at(bx, by);
        if (!r.in_bounds) continue;
        double cu = 0, cv = 0;
        REQUIRE(reference_project(a, reference_pixel_direction(b, bx + 0.5, by + 0.5), &cu, &cv));
        CHECK(std::abs(r.u - cu) < 1e-6);
        CHECK(std::abs(r.v - cv) < 1e-6);
      }
  }
}

TEST_CASE("round-trip through continuous coordinates is the identity") {
  // Project each source pixel into the target and straight back with the
  // independent formulas; the result must be the original pixel center.
  Rng rng(43);
  for (int k = 0; k < 100; ++k) {
    const CameraPose a =
        make_pose(rng.uniform(0, 2 * kPi), rng.uniform(-0.9, 0.9), Vector3d::Zero(), rng.uniform(30.0, 60.0), 16, 16);
    const CameraPose b =
        make_pose(rng.uniform(0, 2 * kPi), rng.uniform(-0.9, 0.9), Vector3d::Zero(), rng.uniform(30.0, 60.0), 16, 16);
    const CorrespondenceMap fwd = correspondence_map(a, b);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const auto& e = fwd.at(x, y);
        if (!e.in_bounds) continue;
        double u = 0, v = 0;
        REQUIRE(reference_project(a, reference_pixel_direction(b, e.u, e.v), &u, &v));
        CHECK(std::abs(u - (x + 0.5)) < 0.5);
        CHECK(std::abs(v - (y + 0.5)) < 0.5);
      }
  }
}

TEST_CASE("pose validation rejects non-orthonormal rotations") {
  CameraPose pose = make_pose(0.3, 0.1, Vector3d::Zero(), 45.0, 8, 8);
  pose.rotation(0, 0) += 1e-3;
  CHECK_THROWS_AS(validate_pose(pose), Error);
}
