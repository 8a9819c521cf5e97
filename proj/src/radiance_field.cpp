#include "roomgen/radiance_field.hpp"

#include <cmath>

namespace roomgen {

namespace {

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Reduction kernels with a fixed 4-chain summation order; the independent
// accumulators let the compiler keep the float->double dot products in
// vector registers without reassociating a single serial chain.
inline double dot_fd(const float* __restrict a, const double* __restrict b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy_fd(double s, const float* __restrict a, double* __restrict y, int n) {
  for (int i = 0; i < n; ++i) y[i] += s * static_cast<double>(a[i]);
}

inline void axpy_dd(double s, const double* __restrict a, double* __restrict y, int n) {
  for (int i = 0; i < n; ++i) y[i] += s * a[i];
}

}  // namespace

RadianceField::RadianceField(const FieldConfig& cfg) : cfg_(cfg) {
  if (cfg.levels < 1 || cfg.levels > kMaxLevels) throw Error("field levels out of range");
  if (cfg.feature_dim < 1 || cfg.feature_dim > kMaxFeatureDim) throw Error("field feature_dim out of range");
  if (cfg.hidden_units < 1 || cfg.hidden_units > kMaxHidden) throw Error("field hidden_units out of range");
  if ((cfg.table_size & (cfg.table_size - 1)) != 0 || cfg.table_size <= 0)
    throw Error("field table_size must be a power of two");
  if (cfg.base_resolution < 1 || cfg.max_resolution < cfg.base_resolution)
    throw Error("field resolutions must satisfy 1 <= base <= max");
  for (int i = 0; i < 3; ++i)
    if (!(cfg.bounds_min[i] < cfg.bounds_max[i])) throw Error("field bounds must be a nonempty box");

  // Geometric progression of resolutions, strictly increasing.
  const double growth =
      cfg.levels > 1 ? std::exp(std::log(static_cast<double>(cfg.max_resolution) / cfg.base_resolution) /
                                (cfg.levels - 1))
                     : 1.0;
  int prev = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    int r = static_cast<int>(std::lround(cfg.base_resolution * std::pow(growth, l)));
    if (r <= prev) r = prev + 1;
    level_res_[l] = r;
    prev = r;
  }

  in_dim_ = cfg.levels * cfg.feature_dim;
  grid_count_ = static_cast<size_t>(cfg.levels) * cfg.table_size * cfg.feature_dim;
  const int h = cfg.hidden_units;
  w1_ = grid_count_;
  b1_ = w1_ + static_cast<size_t>(h) * in_dim_;
  w2_ = b1_ + h;
  b2_ = w2_ + static_cast<size_t>(h) * h;
  w3_ = b2_ + h;
  b3_ = w3_ + static_cast<size_t>(4) * h;
  params_.assign(b3_ + 4, 0.f);
}

RadianceField::RadianceField(const FieldConfig& cfg, uint64_t init_seed) : RadianceField(cfg) {
  Rng rng(init_seed);
  for (size_t i = 0; i < grid_count_; ++i) params_[i] = static_cast<float>(rng.uniform(-1e-4, 1e-4));
  const int h = cfg_.hidden_units;
  const auto he_uniform = [&](size_t off, size_t count, int fan_in) {
    const double s = std::sqrt(6.0 / fan_in);
    for (size_t i = 0; i < count; ++i) params_[off + i] = static_cast<float>(rng.uniform(-s, s));
  };
  he_uniform(w1_, static_cast<size_t>(h) * in_dim_, in_dim_);
  he_uniform(w2_, static_cast<size_t>(h) * h, h);
  he_uniform(w3_, static_cast<size_t>(4) * h, h);
  params_[b3_ + 0] = static_cast<float>(cfg_.density_bias_init);
}

RadianceField RadianceField::zeros(const FieldConfig& cfg) { return RadianceField(cfg); }

FieldSample RadianceField::query_one(const Vector3d& p) const {
  QueryScratch scratch;
  return query_capture(p, scratch);
}

void RadianceField::query(std::span<const Vector3d> points, std::span<FieldSample> out) const {
  QueryScratch scratch;
  for (size_t i = 0; i < points.size(); ++i) out[i] = query_capture(points[i], scratch);
}

FieldSample RadianceField::query_capture(const Vector3d& p, QueryScratch& scratch) const {
  scratch.in_bounds = true;
  for (int a = 0; a < 3; ++a) {
    const double x = (p[a] - cfg_.bounds_min[a]) / (cfg_.bounds_max[a] - cfg_.bounds_min[a]);
    if (x < 0.0 || x > 1.0) scratch.in_bounds = false;
    scratch.pos01[a] = x;
  }
  if (!scratch.in_bounds) {
    scratch.sigma = 0.0;
    scratch.rgb[0] = scratch.rgb[1] = scratch.rgb[2] = 0.0;
    return FieldSample{};
  }

  const int fdim = cfg_.feature_dim;
  const uint32_t mask = static_cast<uint32_t>(cfg_.table_size - 1);
  const float* grid = params_.data();
  for (int l = 0; l < cfg_.levels; ++l) {
    const int res = level_res_[l];
    uint32_t i0[3];
    double fr[3];
    for (int a = 0; a < 3; ++a) {
      const double s = scratch.pos01[a] * res;
      int idx = static_cast<int>(s);
      if (idx > res - 1) idx = res - 1;
      i0[a] = static_cast<uint32_t>(idx);
      fr[a] = s - idx;
    }
    // All corner addresses first; the gathers then overlap.
    uint32_t hash[8];
    double w[8];
    for (int corner = 0; corner < 8; ++corner) {
      const uint32_t cx = i0[0] + (corner & 1);
      const uint32_t cy = i0[1] + ((corner >> 1) & 1);
      const uint32_t cz = i0[2] + ((corner >> 2) & 1);
      hash[corner] = (cx ^ (cy * kHashPrimeY) ^ (cz * kHashPrimeZ)) & mask;
      w[corner] = ((corner & 1) ? fr[0] : 1.0 - fr[0]) * (((corner >> 1) & 1) ? fr[1] : 1.0 - fr[1]) *
                  (((corner >> 2) & 1) ? fr[2] : 1.0 - fr[2]);
    }
    const float* table = grid + static_cast<size_t>(l) * cfg_.table_size * fdim;
    double acc[kMaxFeatureDim] = {0, 0, 0, 0};
    for (int corner = 0; corner < 8; ++corner) {
      const float* entry = table + static_cast<size_t>(hash[corner]) * fdim;
      for (int f = 0; f < fdim; ++f) acc[f] += w[corner] * entry[f];
    }
    for (int f = 0; f < fdim; ++f) scratch.feat[l * fdim + f] = acc[f];
  }

  const int h = cfg_.hidden_units;
  const float* w1 = params_.data() + w1_;
  const float* bias1 = params_.data() + b1_;
  for (int j = 0; j < h; ++j)
    scratch.h1[j] = std::max(0.0, bias1[j] + dot_fd(w1 + static_cast<size_t>(j) * in_dim_, scratch.feat, in_dim_));
  const float* w2 = params_.data() + w2_;
  const float* bias2 = params_.data() + b2_;
  for (int j = 0; j < h; ++j)
    scratch.h2[j] = std::max(0.0, bias2[j] + dot_fd(w2 + static_cast<size_t>(j) * h, scratch.h1, h));
  const float* w3 = params_.data() + w3_;
  const float* bias3 = params_.data() + b3_;
  double zout[4];
  for (int o = 0; o < 4; ++o) zout[o] = bias3[o] + dot_fd(w3 + static_cast<size_t>(o) * h, scratch.h2, h);

  FieldSample sample;
  scratch.sigma = softplus(zout[0]);
  sample.density = scratch.sigma;
  for (int c = 0; c < 3; ++c) {
    scratch.rgb[c] = logistic(zout[1 + c]);
    sample.color[c] = scratch.rgb[c];
  }
  return sample;
}

void RadianceField::backward_split(const QueryScratch& scratch, double d_density, const double d_color[3],
                                   double* grid_grad, double* decoder_grad) const {
  if (!scratch.in_bounds) return;

  // Output activations: softplus'(z) = 1 - exp(-softplus(z)); logistic'
  // from the stored output value.
  double dz[4];
  dz[0] = d_density * (-std::expm1(-scratch.sigma));
  for (int c = 0; c < 3; ++c) dz[1 + c] = d_color[c] * scratch.rgb[c] * (1.0 - scratch.rgb[c]);

  const int h = cfg_.hidden_units;
  const float* w3 = params_.data() + w3_;
  double dh2[kMaxHidden];
  for (int j = 0; j < h; ++j) dh2[j] = 0.0;
  for (int o = 0; o < 4; ++o) {
    const double d = dz[o];
    if (d == 0.0) continue;
    axpy_dd(d, scratch.h2, decoder_grad + (w3_ - w1_) + static_cast<size_t>(o) * h, h);
    axpy_fd(d, w3 + static_cast<size_t>(o) * h, dh2, h);
    decoder_grad[(b3_ - w1_) + o] += d;
  }

  const float* w2 = params_.data() + w2_;
  double dh1[kMaxHidden];
  for (int j = 0; j < h; ++j) dh1[j] = 0.0;
  for (int j = 0; j < h; ++j) {
    if (scratch.h2[j] <= 0.0 || dh2[j] == 0.0) continue;
    const double d = dh2[j];
    axpy_dd(d, scratch.h1, decoder_grad + (w2_ - w1_) + static_cast<size_t>(j) * h, h);
    axpy_fd(d, w2 + static_cast<size_t>(j) * h, dh1, h);
    decoder_grad[(b2_ - w1_) + j] += d;
  }

  double dfeat[kMaxInputDim];
  for (int i = 0; i < in_dim_; ++i) dfeat[i] = 0.0;
  const float* w1 = params_.data() + w1_;
  for (int j = 0; j < h; ++j) {
    if (scratch.h1[j] <= 0.0 || dh1[j] == 0.0) continue;
    const double d = dh1[j];
    axpy_dd(d, scratch.feat, decoder_grad + static_cast<size_t>(j) * in_dim_, in_dim_);
    axpy_fd(d, w1 + static_cast<size_t>(j) * in_dim_, dfeat, in_dim_);
    decoder_grad[(b1_ - w1_) + j] += d;
  }

  const int fdim = cfg_.feature_dim;
  const uint32_t mask = static_cast<uint32_t>(cfg_.table_size - 1);
  for (int l = 0; l < cfg_.levels; ++l) {
    const int res = level_res_[l];
    uint32_t i0[3];
    double fr[3];
    for (int a = 0; a < 3; ++a) {
      const double s = scratch.pos01[a] * res;
      int idx = static_cast<int>(s);
      if (idx > res - 1) idx = res - 1;
      i0[a] = static_cast<uint32_t>(idx);
      fr[a] = s - idx;
    }
    double* gtable = grid_grad + static_cast<size_t>(l) * cfg_.table_size * fdim;
    const double* df = dfeat + l * fdim;
    for (int corner = 0; corner < 8; ++corner) {
      const uint32_t cx = i0[0] + (corner & 1);
      const uint32_t cy = i0[1] + ((corner >> 1) & 1);
      const uint32_t cz = i0[2] + ((corner >> 2) & 1);
      const double wx = (corner & 1) ? fr[0] : 1.0 - fr[0];
      const double wy = ((corner >> 1) & 1) ? fr[1] : 1.0 - fr[1];
      const double wz = ((corner >> 2) & 1) ? fr[2] : 1.0 - fr[2];
      const double w = wx * wy * wz;
      const uint32_t hash = (cx ^ (cy * kHashPrimeY) ^ (cz * kHashPrimeZ)) & mask;
      double* entry = gtable + static_cast<size_t>(hash) * fdim;
      for (int f = 0; f < fdim; ++f) entry[f] += w * df[f];
    }
  }
}

void RadianceField::backward_from_scratch(const QueryScratch& scratch, double d_density, const double d_color[3],
                                          std::span<double> grad) const {
  backward_split(scratch, d_density, d_color, grad.data(), grad.data() + w1_);
}

void RadianceField::query_backward(const Vector3d& p, double d_density, const double d_color[3],
                                   std::span<double> grad) const {
  QueryScratch scratch;
  query_capture(p, scratch);
  backward_from_scratch(scratch, d_density, d_color, grad);
}

void RadianceField::check_finite() const {
  for (float v : params_)
    if (!std::isfinite(v)) throw NonFiniteGradient("field parameter became non-finite");
}

}  // namespace roomgen
