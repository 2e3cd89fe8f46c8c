#include "geoflow/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"
#include "geoflow/warp.hpp"

namespace geoflow::reward {

void RewardConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(eps_num > 0.0)) throw ConfigError("eps_num must be positive");
  if (pair_stride < 1) throw ConfigError("pair_stride must be >= 1");
  if (gating == GatingMode::kThreshold && !(gating_threshold > 0.0 && gating_threshold < 1.0)) {
    throw ConfigError("gating threshold must lie in (0, 1)");
  }
  if (feature_patch < 1) throw ConfigError("feature_patch must be >= 1");
}

void to_json(nlohmann::json& j, const RewardConfig& c) {
  const char* gating = c.gating == GatingMode::kOff         ? "off"
                       : c.gating == GatingMode::kThreshold ? "threshold"
                                                            : "weighted";
  j = {{"lambda", c.lambda},
       {"eps_num", c.eps_num},
       {"pair_stride", c.pair_stride},
       {"confidence_gating", gating},
       {"gating_threshold", c.gating_threshold},
       {"feature_patch", c.feature_patch},
       {"depth_warp", c.depth_warp == DepthWarpMode::kForwardSplat ? "forward_splat"
                                                                   : "flow_sample"}};
}

void from_json(const nlohmann::json& j, RewardConfig& c) {
  c = RewardConfig{};
  c.lambda = j.value("lambda", c.lambda);
  c.eps_num = j.value("eps_num", c.eps_num);
  c.pair_stride = j.value("pair_stride", c.pair_stride);
  c.gating_threshold = j.value("gating_threshold", c.gating_threshold);
  c.feature_patch = j.value("feature_patch", c.feature_patch);
  if (j.contains("confidence_gating")) {
    const auto& g = j.at("confidence_gating");
    if (g.is_number()) {
      c.gating = GatingMode::kThreshold;
      c.gating_threshold = g.get<double>();
    } else {
      const auto s = g.get<std::string>();
      if (s == "off") c.gating = GatingMode::kOff;
      else if (s == "threshold") c.gating = GatingMode::kThreshold;
      else if (s == "weighted") c.gating = GatingMode::kWeighted;
      else throw ConfigError("unknown confidence_gating \"" + s + "\"");
    }
  }
  if (j.contains("depth_warp")) {
    const auto s = j.at("depth_warp").get<std::string>();
    if (s == "forward_splat") c.depth_warp = DepthWarpMode::kForwardSplat;
    else if (s == "flow_sample") c.depth_warp = DepthWarpMode::kFlowSample;
    else throw ConfigError("unknown depth_warp \"" + s + "\"");
  }
  c.validate();
}

TensorGrid normalized_epe(const TensorGrid& flow_pred, const TensorGrid& flow_rigid, double eps) {
  check_image_shape(flow_pred, 2, "flow_pred");
  check_image_shape(flow_rigid, 2, "flow_rigid");
  if (flow_pred.dims() != flow_rigid.dims()) throw ShapeError("normalized_epe: flow dims differ");
  if (!(eps > 0.0)) throw DomainError("normalized_epe: eps must be positive");
  const std::size_t h = flow_pred.height();
  const std::size_t w = flow_pred.width();
  TensorGrid out(DType::kF64, {h, w});
  auto dst = out.f64();
  for (std::size_t p = 0; p < h * w; ++p) {
    const double px = flow_pred.get(2 * p), py = flow_pred.get(2 * p + 1);
    const double rx = flow_rigid.get(2 * p), ry = flow_rigid.get(2 * p + 1);
    dst[p] = std::hypot(px - rx, py - ry) / (std::hypot(px, py) + std::hypot(rx, ry) + eps);
  }
  return out;
}

TensorGrid relative_depth_error(const TensorGrid& depth_warped, const TensorGrid& depth_next,
                                double eps, const ValidityMask& valid) {
  check_image_shape(depth_warped, 1, "depth_warped");
  check_image_shape(depth_next, 1, "depth_next");
  if (depth_warped.height() != depth_next.height() || depth_warped.width() != depth_next.width() ||
      valid.height() != depth_next.height() || valid.width() != depth_next.width()) {
    throw ShapeError("relative_depth_error: dims differ");
  }
  if (!(eps > 0.0)) throw DomainError("relative_depth_error: eps must be positive");
  TensorGrid out(DType::kF64, {depth_next.height(), depth_next.width()});
  auto dst = out.f64();
  for (std::size_t p = 0; p < dst.size(); ++p) {
    if (!valid.get(p)) {
      dst[p] = kHoleSentinel;
      continue;
    }
    const double next = depth_next.get(p);
    dst[p] = std::abs(depth_warped.get(p) - next) / (next + eps);
  }
  return out;
}

TensorGrid geo_quality(const TensorGrid& epe_map, const TensorGrid& depth_error_map) {
  if (epe_map.dims() != depth_error_map.dims()) throw ShapeError("geo_quality: dims differ");
  TensorGrid out(DType::kF64, epe_map.dims());
  auto dst = out.f64();
  for (std::size_t p = 0; p < dst.size(); ++p) {
    const double e = epe_map.get(p);
    const double d = depth_error_map.get(p);
    if (e < 0.0 || d < 0.0) {
      dst[p] = 0.0;
      continue;
    }
    dst[p] = (1.0 - std::min(e, 1.0)) * (1.0 - std::min(d, 1.0));
  }
  return out;
}

namespace {

// Aggregation weight per pixel; 0 outside the effective valid set.
TensorGrid pixel_weights(const ValidityMask& omega, const TensorGrid* confidence,
                         const RewardConfig& config) {
  TensorGrid weights(DType::kF64, {omega.height(), omega.width()});
  auto w = weights.f64();
  if (confidence != nullptr && (confidence->height() != omega.height() ||
                                confidence->width() != omega.width())) {
    throw ShapeError("confidence dims differ from the valid mask");
  }
  for (std::size_t p = 0; p < w.size(); ++p) {
    if (!omega.get(p)) continue;
    if (confidence == nullptr || config.gating == GatingMode::kOff) {
      w[p] = 1.0;
    } else if (config.gating == GatingMode::kThreshold) {
      w[p] = confidence->get(p) >= config.gating_threshold ? 1.0 : 0.0;
    } else {
      w[p] = std::clamp(confidence->get(p), 0.0, 1.0);
    }
  }
  return weights;
}

double weighted_geo(const TensorGrid& quality, const TensorGrid& weights) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t p = 0; p < quality.size(); ++p) {
    const double w = weights.get(p);
    if (w == 0.0) continue;
    num += w * quality.get(p);
    den += w;
  }
  if (!(den > 0.0)) throw EmptyMaskError("r_geo: no valid pixels (empty omega)");
  return std::clamp(num / den, 0.0, 1.0) - 1.0;
}

}  // namespace

double r_geo(const TensorGrid& quality, const ValidityMask& omega, const TensorGrid* confidence,
             const RewardConfig& config) {
  check_image_shape(quality, 1, "quality");
  if (quality.height() != omega.height() || quality.width() != omega.width()) {
    throw ShapeError("r_geo: quality and omega dims differ");
  }
  return weighted_geo(quality, pixel_weights(omega, confidence, config));
}

double r_dino(const TensorGrid& features_warped, const TensorGrid& features_target,
              std::span<const double> weights) {
  if (features_warped.dims() != features_target.dims() || features_warped.rank() != 3) {
    throw ShapeError("r_dino: feature grids must share h x w x C dims");
  }
  const std::size_t patches = features_warped.height() * features_warped.width();
  const std::size_t c = features_warped.channels();
  if (weights.size() != patches) throw ShapeError("r_dino: one weight per patch expected");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t p = 0; p < patches; ++p) {
    if (weights[p] == 0.0) continue;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double a = features_warped.get(p * c + k);
      const double b = features_target.get(p * c + k);
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
    const double cosine = (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
    num += weights[p] * (1.0 - std::clamp(cosine, -1.0, 1.0));
    den += weights[p];
  }
  if (!(den > 0.0)) throw EmptyMaskError("r_dino: no valid patches");
  return -num / den;
}

double r_dino(const TensorGrid& features_warped, const TensorGrid& features_target,
              const ValidityMask& patch_mask) {
  std::vector<double> weights(patch_mask.size());
  for (std::size_t p = 0; p < weights.size(); ++p) weights[p] = patch_mask.get(p) ? 1.0 : 0.0;
  return r_dino(features_warped, features_target, weights);
}

TensorGrid reference_features(const TensorGrid& image, std::size_t patch) {
  check_image_shape(image, 3, "image");
  if (patch == 0 || patch > std::min(image.height(), image.width())) {
    throw ConfigError("feature patch size must be in [1, min(H, W)]");
  }
  const TensorGrid img = image.to_unit_f64();
  const auto px = img.f64();
  const std::size_t w = image.width();
  const std::size_t ph = image.height() / patch;
  const std::size_t pw = image.width() / patch;
  TensorGrid out(DType::kF64, {ph, pw, kFeatureChannels});
  auto feat = out.f64();
  const double n = static_cast<double>(patch * patch);
  const double bin_width = std::numbers::pi / 6.0;

  parallel_for(ph, [&](std::size_t py) {
    std::vector<double> lum(patch * patch);
    for (std::size_t pxi = 0; pxi < pw; ++pxi) {
      double* f = &feat[(py * pw + pxi) * kFeatureChannels];
      double sum[3] = {0, 0, 0};
      double sq[3] = {0, 0, 0};
      for (std::size_t dy = 0; dy < patch; ++dy) {
        for (std::size_t dx = 0; dx < patch; ++dx) {
          const std::size_t i = ((py * patch + dy) * w + pxi * patch + dx) * 3;
          for (int c = 0; c < 3; ++c) {
            sum[c] += px[i + c];
            sq[c] += px[i + c] * px[i + c];
          }
          lum[dy * patch + dx] = 0.299 * px[i] + 0.587 * px[i + 1] + 0.114 * px[i + 2];
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double mean = sum[c] / n;
        f[c] = mean;
        f[3 + c] = std::sqrt(std::max(0.0, sq[c] / n - mean * mean));
      }
      auto at = [&](std::size_t y, std::size_t x) { return lum[y * patch + x]; };
      for (std::size_t y = 0; y < patch; ++y) {
        for (std::size_t x = 0; x < patch; ++x) {
          double gx = 0.0, gy = 0.0;
          if (patch > 1) {
            const std::size_t x0 = x == 0 ? 0 : x - 1, x1 = x + 1 == patch ? x : x + 1;
            const std::size_t y0 = y == 0 ? 0 : y - 1, y1 = y + 1 == patch ? y : y + 1;
            gx = (at(y, x1) - at(y, x0)) / static_cast<double>(x1 - x0);
            gy = (at(y1, x) - at(y0, x)) / static_cast<double>(y1 - y0);
          }
          const double mag = std::hypot(gx, gy);
          if (mag == 0.0) continue;
          double angle = std::atan2(gy, gx);
          if (angle < 0.0) angle += std::numbers::pi;
          const auto bin = std::min<std::size_t>(5, static_cast<std::size_t>(angle / bin_width));
          f[6 + bin] += mag / n;
        }
      }
    }
  });
  return out;
}

namespace {

void require_finite(const TensorGrid& g, const char* stage) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g.get(i))) {
      throw NumericError(std::string("score_pair: non-finite value in stage ") + stage);
    }
  }
}

void require_finite(double v, const char* stage) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("score_pair: non-finite value in stage ") + stage);
  }
}

// Target-grid feature warp for predictor-supplied features: each target
// patch centre follows the backward flow into the source feature grid.
struct FeatureWarp {
  TensorGrid warped;
  std::vector<double> in_bounds;
};

FeatureWarp warp_features(const TensorGrid& source, const TensorGrid& flow_bwd,
                          std::size_t image_h, std::size_t image_w) {
  const std::size_t fh = source.height();
  const std::size_t fw = source.width();
  const std::size_t c = source.channels();
  const double sy = static_cast<double>(image_h) / static_cast<double>(fh);
  const double sx = static_cast<double>(image_w) / static_cast<double>(fw);
  FeatureWarp r{TensorGrid(DType::kF64, {fh, fw, c}), std::vector<double>(fh * fw, 0.0)};
  auto dst = r.warped.f64();
  double d[2];
  for (std::size_t y = 0; y < fh; ++y) {
    for (std::size_t x = 0; x < fw; ++x) {
      const double cy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double cx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      bilinear_sample_into(flow_bwd, cx, cy, d);
      const bool ok = bilinear_sample_into(source, static_cast<double>(x) + d[0] / sx,
                                           static_cast<double>(y) + d[1] / sy,
                                           dst.subspan((y * fw + x) * c, c));
      r.in_bounds[y * fw + x] = ok ? 1.0 : 0.0;
    }
  }
  return r;
}

double patch_mean(const TensorGrid& map, std::size_t py, std::size_t px, std::size_t patch) {
  double s = 0.0;
  for (std::size_t dy = 0; dy < patch; ++dy) {
    for (std::size_t dx = 0; dx < patch; ++dx) {
      s += map.at(py * patch + dy, px * patch + dx);
    }
  }
  return s / static_cast<double>(patch * patch);
}

}  // namespace

double composite(double lambda, double r_geo, double r_dino) {
  return lambda * r_geo + (1.0 - lambda) * r_dino;
}

PairScore score_pair(const PairInputs& in, const RewardConfig& config) {
  config.validate();
  check_image_shape(in.image_a, 3, "image_a");
  check_image_shape(in.image_b, 3, "image_b");
  check_image_shape(in.depth_a, 1, "depth_a");
  check_image_shape(in.depth_b, 1, "depth_b");
  check_image_shape(in.flow_fwd, 2, "flow_fwd");
  check_image_shape(in.flow_bwd, 2, "flow_bwd");
  const std::size_t h = in.image_a.height();
  const std::size_t w = in.image_a.width();
  for (const TensorGrid* g : {&in.image_b, &in.depth_a, &in.depth_b, &in.flow_fwd, &in.flow_bwd}) {
    if (g->height() != h || g->width() != w) throw ShapeError("score_pair: inconsistent H x W");
  }
  for (const TensorGrid* g : {&in.image_a, &in.image_b, &in.depth_a, &in.depth_b, &in.flow_fwd,
                              &in.flow_bwd}) {
    check_finite(*g, "score_pair input");
  }
  in.E_a.validate();
  in.E_b.validate();

  PairScore s;
  const RelativeTransform T = relative_transform(in.E_a, in.E_b);

  // Structural term.
  const RigidFlow rigid = rigid_flow(in.depth_a, in.K_a, in.K_b, T);
  require_finite(rigid.flow, "rigid_flow");
  s.epe_map = normalized_epe(in.flow_fwd, rigid.flow, config.eps_num);
  require_finite(s.epe_map, "normalized_epe");

  ValidityMask depth_valid(h, w);
  if (config.depth_warp == DepthWarpMode::kForwardSplat) {
    const DepthReprojection rep = reproject_depth(in.depth_a, in.K_a, in.K_b, T);
    for (std::size_t p = 0; p < h * w; ++p) {
      depth_valid.set(p, rep.coverage.get(p) && in.depth_b.get(p) > 0.0);
    }
    s.depth_error_map = relative_depth_error(rep.depth, in.depth_b, config.eps_num, depth_valid);
  } else {
    TensorGrid predicted(DType::kF64, {h, w});
    TensorGrid observed(DType::kF64, {h, w});
    double sample = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        if (!rigid.valid.get(p)) continue;
        const Eigen::Vector3d q = T.apply(
            unproject({static_cast<double>(x), static_cast<double>(y)}, in.depth_a.get(p), in.K_a));
        const bool ok = bilinear_sample_into(
            in.depth_b, static_cast<double>(x) + in.flow_fwd.get(2 * p),
            static_cast<double>(y) + in.flow_fwd.get(2 * p + 1), {&sample, 1});
        if (!ok || !(sample > 0.0)) continue;
        predicted.set(p, q.z());
        observed.set(p, sample);
        depth_valid.set(p, true);
      }
    }
    s.depth_error_map = relative_depth_error(predicted, observed, config.eps_num, depth_valid);
  }
  require_finite(s.depth_error_map, "relative_depth_error");

  s.quality_map = geo_quality(s.epe_map, s.depth_error_map);
  s.omega = rigid.valid & depth_valid;
  if (in.fwd_valid) s.omega = s.omega & *in.fwd_valid;
  const TensorGrid* conf_a = in.confidence_a ? &*in.confidence_a : nullptr;
  s.weight_map = pixel_weights(s.omega, conf_a, config);
  ValidityMask effective(h, w);
  for (std::size_t p = 0; p < h * w; ++p) effective.set(p, s.weight_map.get(p) > 0.0);
  s.omega = effective;
  s.valid_fraction = static_cast<double>(s.omega.count()) / static_cast<double>(h * w);
  s.r_geo = weighted_geo(s.quality_map, s.weight_map);
  require_finite(s.r_geo, "r_geo");

  // Semantic term.
  const std::size_t patch = config.feature_patch;
  if (in.features_a && in.features_b) {
    const FeatureWarp fw = warp_features(*in.features_a, in.flow_bwd, h, w);
    std::vector<double> weights = fw.in_bounds;
    if (in.confidence_b && config.gating != GatingMode::kOff) {
      const double sy = static_cast<double>(h) / static_cast<double>(in.features_b->height());
      const double sx = static_cast<double>(w) / static_cast<double>(in.features_b->width());
      for (std::size_t y = 0; y < in.features_b->height(); ++y) {
        for (std::size_t x = 0; x < in.features_b->width(); ++x) {
          const double c = in.confidence_b->at(
              std::min(h - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) * sy)),
              std::min(w - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) * sx)));
          double& wt = weights[y * in.features_b->width() + x];
          wt *= config.gating == GatingMode::kWeighted ? c : (c >= config.gating_threshold ? 1.0 : 0.0);
        }
      }
    }
    s.r_dino = r_dino(fw.warped, *in.features_b, weights);
  } else {
    const WarpResult warp = backward_warp(in.image_a.to_unit_f64(), in.flow_bwd);
    require_finite(warp.warped, "backward_warp");
    const TensorGrid feat_w = reference_features(warp.warped, patch);
    const TensorGrid feat_t = reference_features(in.image_b, patch);
    const std::size_t ph = feat_w.height();
    const std::size_t pw = feat_w.width();
    std::vector<double> weights(ph * pw, 0.0);
    for (std::size_t py = 0; py < ph; ++py) {
      for (std::size_t px = 0; px < pw; ++px) {
        bool all = true;
        for (std::size_t dy = 0; dy < patch && all; ++dy) {
          for (std::size_t dx = 0; dx < patch && all; ++dx) {
            const std::size_t p = (py * patch + dy) * w + px * patch + dx;
            all = warp.mask.get(p) && (!in.bwd_valid || in.bwd_valid->get(p));
          }
        }
        if (!all) continue;
        double wt = 1.0;
        if (in.confidence_b && config.gating != GatingMode::kOff) {
          const double c = patch_mean(*in.confidence_b, py, px, patch);
          wt = config.gating == GatingMode::kWeighted ? c : (c >= config.gating_threshold ? 1.0 : 0.0);
        }
        weights[py * pw + px] = wt;
      }
    }
    s.r_dino = r_dino(feat_w, feat_t, weights);
  }
  require_finite(s.r_dino, "r_dino");
  s.r_pair = composite(config.lambda, s.r_geo, s.r_dino);
  require_finite(s.r_pair, "r_pair");
  return s;
}

namespace {

// mask sampled at the nearest pixel of u + flow(u); false off the grid.
ValidityMask lookup_mask(const ValidityMask& mask, const TensorGrid& flow) {
  const std::size_t h = flow.height(), w = flow.width();
  ValidityMask out(h, w, false);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = std::round(static_cast<double>(x) + flow.at(y, x, 0));
      const double py = std::round(static_cast<double>(y) + flow.at(y, x, 1));
      if (px < 0.0 || py < 0.0 || px >= static_cast<double>(w) || py >= static_cast<double>(h)) continue;
      out.set(y, x, mask.get(static_cast<std::size_t>(py), static_cast<std::size_t>(px)));
    }
  }
  return out;
}

}  // namespace

PairInputs pair_inputs(const VideoInputs& v, int tau, int stride) {
  const auto n = static_cast<int>(v.frame_count());
  if (tau < 0 || stride < 1 || tau + stride >= n) throw InputError("pair index out of range");
  if (v.depths.size() != v.frames.size() || v.intrinsics.size() != v.frames.size() ||
      v.extrinsics.size() != v.frames.size()) {
    throw InputError("video: per-frame depth/camera counts differ from frame count");
  }
  if (static_cast<int>(v.flow_fwd.size()) < n - 1 || static_cast<int>(v.flow_bwd.size()) < n - 1) {
    throw InputError("video: expected one forward and one backward flow per consecutive pair");
  }
  const auto a = static_cast<std::size_t>(tau);
  const auto b = static_cast<std::size_t>(tau + stride);
  PairInputs in;
  in.image_a = v.frames[a];
  in.image_b = v.frames[b];
  in.depth_a = v.depths[a];
  in.depth_b = v.depths[b];
  in.K_a = v.intrinsics[a];
  in.K_b = v.intrinsics[b];
  in.E_a = v.extrinsics[a];
  in.E_b = v.extrinsics[b];
  const bool fwd_masks = !v.flow_fwd_valid.empty();
  const bool bwd_masks = !v.flow_bwd_valid.empty();
  if ((fwd_masks && static_cast<int>(v.flow_fwd_valid.size()) < n - 1) ||
      (bwd_masks && static_cast<int>(v.flow_bwd_valid.size()) < n - 1)) {
    throw InputError("video: flow validity masks must cover every consecutive pair");
  }
  if (stride == 1) {
    in.flow_fwd = v.flow_fwd[a];
    in.flow_bwd = v.flow_bwd[a];
    if (fwd_masks) in.fwd_valid = v.flow_fwd_valid[a];
    if (bwd_masks) in.bwd_valid = v.flow_bwd_valid[a];
  } else {
    const ValidityMask all(v.frames[a].height(), v.frames[a].width(), true);
    FlowComposition fwd{v.flow_fwd[a].cast(DType::kF64), fwd_masks ? v.flow_fwd_valid[a] : all};
    for (std::size_t k = a + 1; k < b; ++k) {
      if (fwd_masks) fwd.valid = fwd.valid & lookup_mask(v.flow_fwd_valid[k], fwd.flow);
      const auto next = compose_flow(fwd.flow, v.flow_fwd[k]);
      fwd.flow = next.flow;
      fwd.valid = fwd.valid & next.valid;
    }
    FlowComposition bwd{v.flow_bwd[b - 1].cast(DType::kF64),
                        bwd_masks ? v.flow_bwd_valid[b - 1] : all};
    for (std::size_t k = b - 1; k-- > a;) {
      if (bwd_masks) bwd.valid = bwd.valid & lookup_mask(v.flow_bwd_valid[k], bwd.flow);
      const auto next = compose_flow(bwd.flow, v.flow_bwd[k]);
      bwd.flow = next.flow;
      bwd.valid = bwd.valid & next.valid;
    }
    in.flow_fwd = std::move(fwd.flow);
    in.flow_bwd = std::move(bwd.flow);
    in.fwd_valid = std::move(fwd.valid);
    in.bwd_valid = std::move(bwd.valid);
  }
  if (!v.features.empty()) {
    in.features_a = v.features.at(a);
    in.features_b = v.features.at(b);
  }
  if (!v.confidence.empty()) {
    in.confidence_a = v.confidence.at(a);
    in.confidence_b = v.confidence.at(b);
  }
  return in;
}

VideoScore score_video(const VideoInputs& video, const RewardConfig& config) {
  config.validate();
  const int n = static_cast<int>(video.frame_count());
  const int stride = config.pair_stride;
  if (n < stride + 1) {
    throw InputError("score_video: need at least pair_stride + 1 = " +
                     std::to_string(stride + 1) + " frames, got " + std::to_string(n));
  }
  VideoScore out;
  for (int tau = 0; tau + stride < n; ++tau) out.taus.push_back(tau);
  out.pairs.resize(out.taus.size());
  parallel_for(out.taus.size(), [&](std::size_t i) {
    out.pairs[i] = score_pair(pair_inputs(video, out.taus[i], stride), config);
  });
  double sum = 0.0;
  for (const auto& p : out.pairs) sum += p.r_pair;
  out.r_video = sum / static_cast<double>(out.pairs.size());
  return out;
}

nlohmann::json video_report(const VideoScore& score, const RewardConfig& config) {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < score.pairs.size(); ++i) {
    const auto& p = score.pairs[i];
    pairs.push_back({{"tau", score.taus[i]},
                     {"r_geo", p.r_geo},
                     {"r_dino", p.r_dino},
                     {"r_pair", p.r_pair},
                     {"valid_fraction", p.valid_fraction}});
  }
  return {{"pairs", pairs}, {"r_video", score.r_video}, {"config", config}};
}

}  // namespace geoflow::reward
