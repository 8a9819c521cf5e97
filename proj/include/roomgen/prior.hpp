#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "roomgen/geometry.hpp"
#include "roomgen/image.hpp"
#include "roomgen/oracle_room.hpp"
#include "roomgen/volume_renderer.hpp"

namespace roomgen {

// Variance-preserving schedule x_t = alpha(t) x + sigma(t) eps with
// alpha(t) = cos(pi t / 2), sigma(t) = sin(pi t / 2).
struct NoiseSchedule {
  static constexpr double kSigmaFloor = 1e-3;

  double alpha(double t) const { return std::cos(0.5 * M_PI * t); }
  double sigma(double t) const { return std::sin(0.5 * M_PI * t); }
  double residual_scale(double t) const { return alpha(t) / std::max(sigma(t), kSigmaFloor); }
};

struct GuidanceConfig {
  std::string negative_prompt_meta;
  double guidance_scale = 0.0;
};

// One scoring request: the batch's rendered views, the poses the prior
// should reason with (equivalent poses in stage 2, real poses otherwise),
// the shared timestep, and per-view unit-variance noise.
struct ScoreQuery {
  std::span<const RenderOutput> renders;
  std::span<const CameraPose> poses;
  double t = 0.0;
  std::span<const ImageF> noise;
  std::string prompt_meta;
  GuidanceConfig guidance;
};

// Per-view predicted-noise residuals (eps_hat - eps), image-shaped.
struct ScoreResponse {
  std::vector<ImageF> residuals;
};

class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual ScoreResponse score(const ScoreQuery& query) const = 0;

  // Pixel-local fast path. When supported, the view's residual factors as
  // scale * (render - target) per pixel, which lets the optimizer fuse the
  // render and backward passes. Default: unsupported.
  virtual bool pixel_local_target(const CameraPose& /*pose*/, double /*t*/, ImageF* /*target*/,
                                  double* /*scale*/) const {
    return false;
  }
};

// Analytic stand-in for a pretrained scene prior: the denoised estimate at
// a pose is the oracle room's ground truth there, so the residual reduces
// to alpha/max(sigma, floor) * (render - ground_truth). Exactly zero when
// the render matches the room, for any t and eps.
class OracleScoreProvider : public ScoreProvider {
 public:
  OracleScoreProvider(RoomSpec room, NoiseSchedule schedule = {}) : room_(room), schedule_(schedule) {}
  ScoreResponse score(const ScoreQuery& query) const override;
  bool pixel_local_target(const CameraPose& pose, double t, ImageF* target, double* scale) const override;

  const RoomSpec& room() const { return room_; }

 private:
  RoomSpec room_;
  NoiseSchedule schedule_;
};

// Projection weights of the correspondence-aware attention, square over
// the feature dimension.
struct CaaWeights {
  Eigen::MatrixXd wq, wk, wv;

  static CaaWeights identity(int dim) {
    CaaWeights w;
    w.wq = Eigen::MatrixXd::Identity(dim, dim);
    w.wk = Eigen::MatrixXd::Identity(dim, dim);
    w.wv = Eigen::MatrixXd::Identity(dim, dim);
    return w;
  }
};

// Correspondence-aware attention over per-pixel feature grids. For each
// source pixel: queries are projected source features; keys/values come
// from the (2r+1)^2 neighborhood around the mapped location in every
// target view; softmax runs jointly over all in-bounds candidates. Pixels
// with no in-bounds correspondence pass their own feature through.
// weight_sums, when given, receives the per-pixel softmax mass (1 where
// candidates exist, 0 otherwise).
ImageF caa_attention(const ImageF& src_features, std::span<const ImageF> target_features,
                     std::span<const CorrespondenceMap> maps, const CaaWeights& weights, int neighborhood_radius,
                     std::vector<double>* weight_sums = nullptr);

// Multi-view consistency score built from caa_attention: each view's
// residual is (feature - attended feature) on a coarse grid, replicated
// back to pixel resolution. Requires all query poses to share a center.
class CaaConsistencyProvider : public ScoreProvider {
 public:
  CaaConsistencyProvider(int grid_size, int neighborhood_radius, CaaWeights weights)
      : grid_size_(grid_size), radius_(neighborhood_radius), weights_(std::move(weights)) {}
  explicit CaaConsistencyProvider(int grid_size = 16, int neighborhood_radius = 1)
      : CaaConsistencyProvider(grid_size, neighborhood_radius, CaaWeights::identity(3)) {}

  ScoreResponse score(const ScoreQuery& query) const override;

 private:
  int grid_size_;
  int radius_;
  CaaWeights weights_;
};

// Weighted sum of providers, with optional classifier-free-style guidance
// against a negative provider:
//   residual = pos + guidance_scale * (pos - neg).
class CompositeProvider : public ScoreProvider {
 public:
  void add(std::shared_ptr<const ScoreProvider> provider, double weight) {
    providers_.emplace_back(std::move(provider), weight);
  }
  void set_negative(std::shared_ptr<const ScoreProvider> provider) { negative_ = std::move(provider); }

  ScoreResponse score(const ScoreQuery& query) const override;
  // Local iff every member is local and no negative-guidance branch is
  // configured; the weighted targets then combine into one.
  bool pixel_local_target(const CameraPose& pose, double t, ImageF* target, double* scale) const override;

 private:
  std::vector<std::pair<std::shared_ptr<const ScoreProvider>, double>> providers_;
  std::shared_ptr<const ScoreProvider> negative_;
};

}  // namespace roomgen
