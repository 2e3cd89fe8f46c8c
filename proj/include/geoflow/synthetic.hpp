#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "geoflow/camera.hpp"
#include "geoflow/reward.hpp"
#include "geoflow/tensor.hpp"

namespace geoflow::synth {

enum class GeometryKind { kFrontoParallel, kInclined, kTwoPlane };

// Background surface in world coordinates. The main plane satisfies
// normal . X = normal . (0, 0, depth). Two-plane scenes add a nearer
// fronto-parallel slab at z = relief_depth inside relief_rect (world x0, y0,
// x1, y1).
struct Geometry {
  GeometryKind kind = GeometryKind::kFrontoParallel;
  double depth = 2.0;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double relief_depth = 1.5;
  std::array<double, 4> relief_rect = {-0.2, -0.2, 0.2, 0.2};
};

// Fronto-parallel textured quad translating rigidly by `velocity` per frame.
struct MovingObject {
  Eigen::Vector3d center = Eigen::Vector3d(0.0, 0.0, 1.2);
  Eigen::Vector2d half_size = Eigen::Vector2d(0.12, 0.12);
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  std::uint64_t texture_seed = 99;
};

struct SceneSpec {
  Geometry geometry;
  std::uint64_t texture_seed = 1;
  double texture_scale = 6.0;  // lattice cells per metre at the base octave
  int octaves = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  Intrinsics intrinsics{100.0, 100.0, 31.5, 31.5};
  std::vector<PoseSE3> camera_path{PoseSE3::identity(), PoseSE3::identity()};
  std::optional<MovingObject> moving_object;

  void validate() const;
};

struct PerturbationSpec {
  double wobble_px = 0.0;  // background only; the moving object stays rigid
  double texture_drift_px = 0.0;
  double object_morph = 1.0;
  double depth_noise_rel = 0.0;
  // Route the wobble field into the flow tensors instead of the appearance.
  bool corrupt_flow = false;

  void validate() const;
  bool is_identity() const;
};

struct RenderedPair {
  TensorGrid image_a, image_b;    // f64 H x W x 3 in [0, 1]
  TensorGrid depth_a, depth_b;    // f64 H x W, camera z in metres
  TensorGrid flow_fwd, flow_bwd;  // f64 H x W x 2
  ValidityMask fwd_visible, bwd_visible;  // correspondence inside the other view and unoccluded
  ValidityMask object_a, object_b;        // moving-object pixels
  TensorGrid confidence_a, confidence_b;  // f64 H x W, all ones
  Intrinsics K;
  PoseSE3 pose_a, pose_b;

  SceneSpec spec;
  int frame_index = 0;
};

RenderedPair render_pair(const SceneSpec& spec, int frame_index);

// Renders a single frame image at the given pose/object state (used by
// perturbations and the CLI frame dump).
TensorGrid render_frame(const SceneSpec& spec, int frame_index);

// Smooth divergence-free H x W x 2 field whose largest vector has length
// `amplitude`.
TensorGrid wobble_field(std::size_t height, std::size_t width, double amplitude,
                        std::uint64_t seed);

// Ground-truth tensors wired into the reward's pair inputs. The visibility
// masks travel as the flow validity channel.
reward::PairInputs to_pair_inputs(const RenderedPair& pair);

RenderedPair inject_perturbation(const RenderedPair& pair, const PerturbationSpec& p,
                                 std::uint64_t seed);

// Whole camera path as a video. Frame k >= 1 carries the perturbation with
// its own wobble field, texture drift k * texture_drift_px (so each
// consecutive pair sees one step of drift), and the object morph on odd
// frames only. Depth noise is drawn independently per frame. Flows and
// visibility stay clean unless corrupt_flow routes the wobble into them.
struct RenderedVideo {
  std::vector<TensorGrid> frames, depths;
  std::vector<TensorGrid> flow_fwd, flow_bwd;  // [k]: k -> k+1 and k+1 -> k
  std::vector<ValidityMask> valid_fwd, valid_bwd;
  std::vector<ValidityMask> object_masks;      // per frame
  std::vector<PoseSE3> poses;
  Intrinsics K;
};

RenderedVideo render_video(const SceneSpec& spec, const PerturbationSpec& p, std::uint64_t seed);

// Toy generator output: z = (wobble, drift, morph, camera speed) raw values.
inline constexpr std::size_t kLatentDim = 4;

struct LatentRanges {
  double wobble_px = 4.0;
  double drift_px = 2.0;
  double morph_extra = 0.5;
  double camera_tx = 0.2;
};

// Monotone map raw -> [0, 1): tanh(softplus(raw)).
double squash(double raw);

struct DecodedLatent {
  PerturbationSpec perturbation;
  double camera_tx = 0.0;
};

DecodedLatent decode_parameters(std::span<const double> z, const LatentRanges& ranges = {});

RenderedPair decode_latent(std::span<const double> z, const SceneSpec& scene_template,
                           std::uint64_t seed = 0, const LatentRanges& ranges = {});

// Ready-made scenes used by tests, the CLI defaults and the GRPO toy.
SceneSpec default_scene(GeometryKind kind = GeometryKind::kFrontoParallel);
SceneSpec grpo_template();

void to_json(nlohmann::json& j, const SceneSpec& spec);
void from_json(const nlohmann::json& j, SceneSpec& spec);
void to_json(nlohmann::json& j, const PerturbationSpec& p);
void from_json(const nlohmann::json& j, PerturbationSpec& p);

}  // namespace geoflow::synth
