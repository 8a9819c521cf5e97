#include "roomgen/prior.hpp"

#include <cmath>

namespace roomgen {

namespace {

void check_query(const ScoreQuery& query) {
  if (query.renders.size() != query.poses.size())
    throw ShapeMismatch("score query renders/poses length mismatch");
  if (!query.noise.empty() && query.noise.size() != query.renders.size())
    throw ShapeMismatch("score query noise length mismatch");
}

}  // namespace

ScoreResponse OracleScoreProvider::score(const ScoreQuery& query) const {
  check_query(query);
  ScoreResponse response;
  response.residuals.reserve(query.renders.size());
  const double scale = schedule_.residual_scale(query.t);
  for (size_t v = 0; v < query.renders.size(); ++v) {
    const ImageF& rendered = query.renders[v].color;
    const ImageF truth = oracle_image(room_, query.poses[v]);
    if (!rendered.same_shape(truth)) throw ShapeMismatch("render does not match oracle image shape");
    ImageF residual(rendered.width, rendered.height, 3);
    for (size_t i = 0; i < residual.data.size(); ++i)
      residual.data[i] = scale * (rendered.data[i] - truth.data[i]);
    response.residuals.push_back(std::move(residual));
  }
  return response;
}

bool OracleScoreProvider::pixel_local_target(const CameraPose& pose, double t, ImageF* target,
                                             double* scale) const {
  *target = oracle_image(room_, pose);
  *scale = schedule_.residual_scale(t);
  return true;
}

ImageF caa_attention(const ImageF& src_features, std::span<const ImageF> target_features,
                     std::span<const CorrespondenceMap> maps, const CaaWeights& weights, int neighborhood_radius,
                     std::vector<double>* weight_sums) {
  const int dim = src_features.channels;
  if (weights.wq.rows() != dim || weights.wq.cols() != dim || weights.wk.rows() != dim ||
      weights.wk.cols() != dim || weights.wv.rows() != dim || weights.wv.cols() != dim)
    throw ShapeMismatch("attention weights do not match the feature dimension");
  if (target_features.size() != maps.size())
    throw ShapeMismatch("one correspondence map per target view is required");
  for (size_t l = 0; l < target_features.size(); ++l) {
    if (target_features[l].channels != dim) throw ShapeMismatch("target feature dimension mismatch");
    if (maps[l].src_width != src_features.width || maps[l].src_height != src_features.height ||
        maps[l].tgt_width != target_features[l].width || maps[l].tgt_height != target_features[l].height)
      throw ShapeMismatch("correspondence map size does not match the feature grids");
  }

  ImageF out(src_features.width, src_features.height, dim);
  if (weight_sums) weight_sums->assign(static_cast<size_t>(src_features.width) * src_features.height, 0.0);

  Eigen::VectorXd f(dim), q(dim), value(dim);
  struct Candidate {
    double logit;
    const double* feature;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(target_features.size() * (2 * neighborhood_radius + 1) * (2 * neighborhood_radius + 1));

  for (int y = 0; y < src_features.height; ++y) {
    for (int x = 0; x < src_features.width; ++x) {
      for (int c = 0; c < dim; ++c) f[c] = src_features.at(x, y, c);
      q.noalias() = weights.wq * f;

      candidates.clear();
      double max_logit = -std::numeric_limits<double>::infinity();
      for (size_t l = 0; l < target_features.size(); ++l) {
        const auto& entry = maps[l].at(x, y);
        if (!entry.in_bounds) continue;
        const ImageF& tgt = target_features[l];
        // Snap the continuous location to its containing pixel.
        const int tx = std::clamp(static_cast<int>(std::floor(entry.u)), 0, tgt.width - 1);
        const int ty = std::clamp(static_cast<int>(std::floor(entry.v)), 0, tgt.height - 1);
        for (int dy = -neighborhood_radius; dy <= neighborhood_radius; ++dy) {
          const int ny = ty + dy;
          if (ny < 0 || ny >= tgt.height) continue;
          for (int dx = -neighborhood_radius; dx <= neighborhood_radius; ++dx) {
            const int nx = tx + dx;
            if (nx < 0 || nx >= tgt.width) continue;
            const double* feat = &tgt.data[(static_cast<size_t>(ny) * tgt.width + nx) * dim];
            double logit = 0.0;
            for (int a = 0; a < dim; ++a) {
              double k = 0.0;
              for (int b = 0; b < dim; ++b) k += weights.wk(a, b) * feat[b];
              logit += q[a] * k;
            }
            max_logit = std::max(max_logit, logit);
            candidates.push_back({logit, feat});
          }
        }
      }

      double* dst = &out.data[(static_cast<size_t>(y) * out.width + x) * dim];
      if (candidates.empty()) {
        for (int c = 0; c < dim; ++c) dst[c] = src_features.at(x, y, c);
        continue;
      }
      double denom = 0.0;
      value.setZero();
      for (const auto& cand : candidates) {
        const double w = std::exp(cand.logit - max_logit);
        denom += w;
        for (int a = 0; a < dim; ++a) {
          double v = 0.0;
          for (int b = 0; b < dim; ++b) v += weights.wv(a, b) * cand.feature[b];
          value[a] += w * v;
        }
      }
      for (int c = 0; c < dim; ++c) dst[c] = value[c] / denom;
      if (weight_sums) (*weight_sums)[static_cast<size_t>(y) * out.width + x] = 1.0;
    }
  }
  return out;
}

ScoreResponse CaaConsistencyProvider::score(const ScoreQuery& query) const {
  check_query(query);
  const size_t n = query.renders.size();
  ScoreResponse response;
  response.residuals.reserve(n);

  if (n == 1) {
    const ImageF& img = query.renders[0].color;
    response.residuals.emplace_back(img.width, img.height, img.channels);
    return response;
  }

  for (size_t v = 1; v < n; ++v)
    if ((query.poses[v].position - query.poses[0].position).norm() >= 1e-6)
      throw CentersDiffer("CAA consistency requires a shared camera center across the batch");

  // Downsampled feature grids and grid-resolution poses.
  std::vector<ImageF> features(n);
  std::vector<CameraPose> grid_poses(n);
  for (size_t v = 0; v < n; ++v) {
    features[v] = box_downsample(query.renders[v].color, grid_size_, grid_size_);
    grid_poses[v] = query.poses[v];
    grid_poses[v].intrinsics = query.poses[v].intrinsics.with_size(grid_size_, grid_size_);
  }

  for (size_t v = 0; v < n; ++v) {
    std::vector<ImageF> targets;
    std::vector<CorrespondenceMap> maps;
    targets.reserve(n - 1);
    maps.reserve(n - 1);
    for (size_t u = 0; u < n; ++u) {
      if (u == v) continue;
      targets.push_back(features[u]);
      maps.push_back(correspondence_map(grid_poses[v], grid_poses[u]));
    }
    const ImageF attended = caa_attention(features[v], targets, maps, weights_, radius_);
    ImageF grid_residual(grid_size_, grid_size_, features[v].channels);
    for (size_t i = 0; i < grid_residual.data.size(); ++i)
      grid_residual.data[i] = features[v].data[i] - attended.data[i];
    response.residuals.push_back(
        block_upsample(grid_residual, query.renders[v].color.width, query.renders[v].color.height));
  }
  return response;
}

bool CompositeProvider::pixel_local_target(const CameraPose& pose, double t, ImageF* target,
                                           double* scale) const {
  if (negative_) return false;
  double total_scale = 0.0;
  ImageF combined;
  for (const auto& [provider, weight] : providers_) {
    ImageF part;
    double part_scale = 0.0;
    if (!provider->pixel_local_target(pose, t, &part, &part_scale)) return false;
    const double c = weight * part_scale;
    if (combined.data.empty()) {
      combined = ImageF(part.width, part.height, part.channels);
    } else if (!combined.same_shape(part)) {
      return false;
    }
    for (size_t i = 0; i < part.data.size(); ++i) combined.data[i] += c * part.data[i];
    total_scale += c;
  }
  if (total_scale == 0.0) return false;
  for (auto& v : combined.data) v /= total_scale;
  *target = std::move(combined);
  *scale = total_scale;
  return true;
}

ScoreResponse CompositeProvider::score(const ScoreQuery& query) const {
  check_query(query);
  if (providers_.empty()) throw Error("composite provider has no members");

  ScoreResponse total;
  bool first = true;
  for (const auto& [provider, weight] : providers_) {
    ScoreResponse part = provider->score(query);
    if (first) {
      total.residuals = std::move(part.residuals);
      for (auto& img : total.residuals)
        for (auto& v : img.data) v *= weight;
      first = false;
    } else {
      if (part.residuals.size() != total.residuals.size())
        throw ShapeMismatch("composite providers returned differing view counts");
      for (size_t v = 0; v < part.residuals.size(); ++v) {
        if (!part.residuals[v].same_shape(total.residuals[v]))
          throw ShapeMismatch("composite providers returned differing residual shapes");
        for (size_t i = 0; i < part.residuals[v].data.size(); ++i)
          total.residuals[v].data[i] += weight * part.residuals[v].data[i];
      }
    }
  }

  if (negative_ && query.guidance.guidance_scale != 0.0) {
    const ScoreResponse neg = negative_->score(query);
    const double s = query.guidance.guidance_scale;
    for (size_t v = 0; v < total.residuals.size(); ++v)
      for (size_t i = 0; i < total.residuals[v].data.size(); ++i) {
        const double pos = total.residuals[v].data[i];
        total.residuals[v].data[i] = pos + s * (pos - neg.residuals[v].data[i]);
      }
  }
  return total;
}

}  // namespace roomgen
