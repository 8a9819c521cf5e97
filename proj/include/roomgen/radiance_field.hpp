#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "roomgen/errors.hpp"
#include "roomgen/geometry.hpp"
#include "roomgen/rng.hpp"

namespace roomgen {

// Multi-resolution hash-grid encoder plus a small ReLU decoder. Parameters
// are stored as float32 (the checkpoint format) and promoted to double for
// all math, so finite-difference checks see a smooth double-precision path.
//
// Parameter layout, in order:
//   per level l: table_size x feature_dim floats
//   W1 [hidden x in], b1 [hidden], W2 [hidden x hidden], b2 [hidden],
//   W3 [4 x hidden], b3 [4]
// Decoder input is the level-major concatenation of interpolated features.
// Output 0 is density through softplus; outputs 1..3 are RGB through a
// logistic squash.

struct FieldConfig {
  int levels = 8;
  int table_size = 1 << 14;  // power of two
  int feature_dim = 2;
  int base_resolution = 16;
  int max_resolution = 256;
  int hidden_units = 32;
  Vector3d bounds_min{-2.25, -2.25, -2.25};
  Vector3d bounds_max{2.25, 2.25, 2.25};
  double density_bias_init = -2.0;  // starts the field nearly empty
};

struct FieldSample {
  double density = 0.0;               // 1/m, >= 0
  std::array<double, 3> color{0, 0, 0};
};

class RadianceField {
 public:
  static constexpr int kMaxLevels = 16;
  static constexpr int kMaxFeatureDim = 4;
  static constexpr int kMaxHidden = 64;
  static constexpr int kMaxInputDim = kMaxLevels * kMaxFeatureDim;

  // Spatial hash primes (Instant-NGP convention), fixed for reproducible
  // addressing: h = (ix * 1) xor (iy * 2654435761) xor (iz * 805459861).
  static constexpr uint32_t kHashPrimeY = 2654435761u;
  static constexpr uint32_t kHashPrimeZ = 805459861u;

  RadianceField(const FieldConfig& cfg, uint64_t init_seed);

  // All-zero parameters; handy for constructing closed-form test fields.
  static RadianceField zeros(const FieldConfig& cfg);

  const FieldConfig& config() const { return cfg_; }
  int level_resolution(int level) const { return level_res_[level]; }
  size_t param_count() const { return params_.size(); }
  size_t grid_param_count() const { return grid_count_; }
  std::span<const float> params() const { return params_; }
  std::span<float> params_mut() { return params_; }

  FieldSample query_one(const Vector3d& p) const;
  void query(std::span<const Vector3d> points, std::span<FieldSample> out) const;

  // Captured forward state for one point; enough to backprop without
  // re-running the encoder or decoder.
  struct QueryScratch {
    double pos01[3];
    double feat[kMaxInputDim];
    double h1[kMaxHidden];
    double h2[kMaxHidden];
    double sigma;
    double rgb[3];
    bool in_bounds;
  };

  FieldSample query_capture(const Vector3d& p, QueryScratch& scratch) const;

  // Accumulates d(loss)/d(params) given upstream gradients with respect to
  // this sample's density and color. grad must have param_count entries.
  void backward_from_scratch(const QueryScratch& scratch, double d_density, const double d_color[3],
                             std::span<double> grad) const;

  // Same, but decoder gradients land in a separate dense buffer indexed
  // from the first decoder parameter. Callers keep that buffer hot across
  // many samples and flush once; the per-sample decoder gradient is dense
  // while the grid gradient is sparse.
  void backward_split(const QueryScratch& scratch, double d_density, const double d_color[3],
                      double* grid_grad, double* decoder_grad) const;

  size_t decoder_param_count() const { return params_.size() - grid_count_; }

  // Convenience single-point backward (recomputes the forward pass).
  void query_backward(const Vector3d& p, double d_density, const double d_color[3], std::span<double> grad) const;

  // Independent immutable snapshot. Plain value copy; named for intent.
  RadianceField freeze_copy() const { return *this; }

  // Throws if any parameter is non-finite.
  void check_finite() const;

 private:
  RadianceField(const FieldConfig& cfg);

  FieldConfig cfg_;
  int in_dim_ = 0;
  size_t grid_count_ = 0;
  size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;  // offsets
  std::array<int, kMaxLevels> level_res_{};
  std::vector<float> params_;
};

}  // namespace roomgen
