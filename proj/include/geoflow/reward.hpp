#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoflow/camera.hpp"
#include "geoflow/tensor.hpp"

namespace geoflow::reward {

enum class GatingMode {
  kOff,        // confidence ignored
  kThreshold,  // pixels below the threshold leave the valid set
  kWeighted,   // confidence becomes the per-pixel weight
};

enum class DepthWarpMode {
  kForwardSplat,  // z-buffered reprojection of source depth into the target
  kFlowSample,    // transformed source depth vs. target depth sampled along the flow
};

struct RewardConfig {
  double lambda = 0.5;
  double eps_num = 1.5;
  int pair_stride = 1;
  GatingMode gating = GatingMode::kWeighted;
  double gating_threshold = 0.5;
  std::size_t feature_patch = 8;
  DepthWarpMode depth_warp = DepthWarpMode::kForwardSplat;

  void validate() const;
};

void to_json(nlohmann::json& j, const RewardConfig& c);
void from_json(const nlohmann::json& j, RewardConfig& c);

// Marks hole pixels in a relative depth error map. Never a valid error value.
inline constexpr double kHoleSentinel = -1.0;

// Per-pixel |F_pred - F_rig| / (|F_pred| + |F_rig| + eps). Not clamped.
TensorGrid normalized_epe(const TensorGrid& flow_pred, const TensorGrid& flow_rigid, double eps);

// |D_warp - D_next| / (D_next + eps) where `valid` holds, kHoleSentinel elsewhere.
TensorGrid relative_depth_error(const TensorGrid& depth_warped, const TensorGrid& depth_next,
                                double eps, const ValidityMask& valid);

// (1 - min(epe, 1)) * (1 - min(depth_err, 1)); 0 at sentinel pixels.
TensorGrid geo_quality(const TensorGrid& epe_map, const TensorGrid& depth_error_map);

// Weighted mean of Q over omega, shifted to [-1, 0]. With kThreshold the
// caller's omega is further restricted to confidence >= threshold; with
// kWeighted the confidence is the weight. Throws EmptyMaskError when no
// weight survives.
double r_geo(const TensorGrid& quality, const ValidityMask& omega,
             const TensorGrid* confidence, const RewardConfig& config);

// Patch-wise cosine distance reward in [-2, 0]. `weights` has one entry per
// patch (binary mask or confidence-scaled). Zero-norm features count as
// cosine 0.
double r_dino(const TensorGrid& features_warped, const TensorGrid& features_target,
              std::span<const double> weights);
double r_dino(const TensorGrid& features_warped, const TensorGrid& features_target,
              const ValidityMask& patch_mask);

// lambda r_geo + (1 - lambda) r_dino.
double composite(double lambda, double r_geo, double r_dino);

// Deterministic 12-channel patch descriptor: mean RGB, RGB standard
// deviation, and a 6-bin luminance gradient-orientation histogram (magnitude
// weighted, per-pixel normalised). Gradients use only pixels inside the
// patch. Images whose sides are not multiples of `patch` are cropped to the
// largest multiple.
inline constexpr std::size_t kFeatureChannels = 12;
TensorGrid reference_features(const TensorGrid& image, std::size_t patch);

struct PairInputs {
  TensorGrid image_a, image_b;  // H x W x 3, u8 or float in [0, 1]
  TensorGrid depth_a, depth_b;  // H x W metres, <= 0 means unavailable
  Intrinsics K_a, K_b;
  PoseSE3 E_a, E_b;
  TensorGrid flow_fwd;  // a -> b, source-anchored
  TensorGrid flow_bwd;  // b -> a, target-anchored (drives the image warp)
  std::optional<TensorGrid> features_a, features_b;  // predictor features (h x w x C)
  std::optional<TensorGrid> confidence_a, confidence_b;
  std::optional<ValidityMask> fwd_valid, bwd_valid;  // e.g. from flow composition
};

struct PairScore {
  double r_geo = 0.0;
  double r_dino = 0.0;
  double r_pair = 0.0;
  double valid_fraction = 0.0;
  TensorGrid epe_map;
  TensorGrid depth_error_map;
  TensorGrid quality_map;
  TensorGrid weight_map;  // per-pixel aggregation weight, 0 outside omega
  ValidityMask omega;
};

PairScore score_pair(const PairInputs& inputs, const RewardConfig& config);

struct VideoInputs {
  std::vector<TensorGrid> frames;
  std::vector<TensorGrid> depths;
  std::vector<Intrinsics> intrinsics;
  std::vector<PoseSE3> extrinsics;
  std::vector<TensorGrid> flow_fwd;  // [tau]: tau -> tau+1
  std::vector<TensorGrid> flow_bwd;  // [tau]: tau+1 -> tau
  std::vector<TensorGrid> features;    // optional, one per frame
  std::vector<TensorGrid> confidence;  // optional, one per frame
  // Optional per-pair flow validity (e.g. occlusion masks), aligned with flow_fwd/flow_bwd.
  std::vector<ValidityMask> flow_fwd_valid, flow_bwd_valid;

  std::size_t frame_count() const { return frames.size(); }
};

struct VideoScore {
  std::vector<int> taus;
  std::vector<PairScore> pairs;
  double r_video = 0.0;
};

// Pair inputs for (tau, tau + stride), composing consecutive flows.
PairInputs pair_inputs(const VideoInputs& video, int tau, int stride);
VideoScore score_video(const VideoInputs& video, const RewardConfig& config);

nlohmann::json video_report(const VideoScore& score, const RewardConfig& config);

}  // namespace geoflow::reward
