#include "geoflow/synthetic.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"
#include "geoflow/rng.hpp"

namespace geoflow::synth {

namespace {

enum class Surface { kBackground, kRelief, kObject };

struct Hit {
  double depth = 0.0;  // camera z
  Eigen::Vector3d world;
  Surface surface = Surface::kBackground;
};

// Everything that varies between the clean and perturbed render of a frame.
struct FrameState {
  PoseSE3 pose;
  Eigen::Vector3d object_center = Eigen::Vector3d::Zero();
  double object_scale = 1.0;
  double texture_drift = 0.0;  // metres along the background texture u axis
};

double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::uint64_t ch) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix)));
  h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(iy) + 0x51ED27ull));
  h = splitmix64(h + ch);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double f) { return f * f * (3.0 - 2.0 * f); }

// Multi-octave value noise, RGB in [0, 1].
Eigen::Vector3d value_noise(std::uint64_t seed, double u, double v, double scale,
                            int octaves) {
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double amplitude = 1.0;
  double total = 0.0;
  double freq = scale;
  for (int o = 0; o < octaves; ++o) {
    const double x = u * freq;
    const double y = v * freq;
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx0);
    const auto iy = static_cast<std::int64_t>(fy0);
    const double sx = smooth(x - fx0);
    const double sy = smooth(y - fy0);
    const std::uint64_t oseed = splitmix64(seed + 0x1000ull * static_cast<std::uint64_t>(o));
    for (std::uint64_t c = 0; c < 3; ++c) {
      const double v00 = lattice_value(oseed, ix, iy, c);
      const double v10 = lattice_value(oseed, ix + 1, iy, c);
      const double v01 = lattice_value(oseed, ix, iy + 1, c);
      const double v11 = lattice_value(oseed, ix + 1, iy + 1, c);
      const double top = v00 + (v10 - v00) * sx;
      const double bottom = v01 + (v11 - v01) * sx;
      acc[static_cast<int>(c)] += amplitude * (top + (bottom - top) * sy);
    }
    total += amplitude;
    amplitude *= 0.5;
    freq *= 2.0;
  }
  return acc / total;
}

class SceneRenderer {
 public:
  explicit SceneRenderer(const SceneSpec& spec) : spec_(spec) {
    const auto& g = spec_.geometry;
    normal_ = g.normal.normalized();
    offset_ = normal_.dot(Eigen::Vector3d(0.0, 0.0, g.depth));
    // Texture basis on the main plane.
    Eigen::Vector3d e1 = Eigen::Vector3d::UnitY().cross(normal_);
    if (e1.norm() < 1e-9) e1 = Eigen::Vector3d::UnitX();
    tex_u_ = e1.normalized();
    tex_v_ = normal_.cross(tex_u_);
  }

  FrameState state(int frame) const {
    FrameState s;
    s.pose = spec_.camera_path.at(static_cast<std::size_t>(frame));
    if (spec_.moving_object) {
      s.object_center = spec_.moving_object->center +
                        static_cast<double>(frame) * spec_.moving_object->velocity;
    }
    return s;
  }

  std::optional<Hit> cast(const FrameState& s, double px, double py,
                          bool with_object = true) const {
    const Intrinsics& K = spec_.intrinsics;
    const Eigen::Vector3d dir_cam((px - K.cx) / K.fx, (py - K.cy) / K.fy, 1.0);
    const Eigen::Vector3d origin = -(s.pose.R.transpose() * s.pose.t);
    const Eigen::Vector3d dir = s.pose.R.transpose() * dir_cam;

    std::optional<Hit> best;
    auto consider = [&](double scale, Surface surface) {
      if (!(scale > kMinDepth) || !std::isfinite(scale)) return;
      if (best && scale >= best->depth) return;
      best = Hit{scale, origin + scale * dir, surface};
    };

    const double denom = normal_.dot(dir);
    if (std::abs(denom) > 1e-12) {
      consider((offset_ - normal_.dot(origin)) / denom, Surface::kBackground);
    }
    if (spec_.geometry.kind == GeometryKind::kTwoPlane && std::abs(dir.z()) > 1e-12) {
      const double scale = (spec_.geometry.relief_depth - origin.z()) / dir.z();
      const Eigen::Vector3d p = origin + scale * dir;
      const auto& r = spec_.geometry.relief_rect;
      if (p.x() >= r[0] && p.x() <= r[2] && p.y() >= r[1] && p.y() <= r[3]) {
        consider(scale, Surface::kRelief);
      }
    }
    if (with_object && spec_.moving_object && std::abs(dir.z()) > 1e-12) {
      const auto& obj = *spec_.moving_object;
      const double scale = (s.object_center.z() - origin.z()) / dir.z();
      const Eigen::Vector3d p = origin + scale * dir;
      const Eigen::Vector3d local = (p - s.object_center) / s.object_scale;
      if (std::abs(local.x()) <= obj.half_size.x() && std::abs(local.y()) <= obj.half_size.y()) {
        consider(scale, Surface::kObject);
      }
    }
    return best;
  }

  Eigen::Vector3d shade(const FrameState& s, const Hit& hit) const {
    switch (hit.surface) {
      case Surface::kObject: {
        const Eigen::Vector3d local = (hit.world - s.object_center) / s.object_scale;
        const Eigen::Vector3d c = value_noise(spec_.moving_object->texture_seed, local.x(),
                                              local.y(), 2.0 * spec_.texture_scale,
                                              spec_.octaves);
        // Warm tint keeps the object distinct from the background.
        return Eigen::Vector3d(0.35 + 0.65 * c.x(), 0.2 + 0.5 * c.y(), 0.1 + 0.3 * c.z());
      }
      case Surface::kRelief:
        return value_noise(spec_.texture_seed + 7919, hit.world.x() + s.texture_drift,
                           hit.world.y(), spec_.texture_scale, spec_.octaves);
      case Surface::kBackground:
      default:
        return value_noise(spec_.texture_seed, hit.world.dot(tex_u_) + s.texture_drift,
                           hit.world.dot(tex_v_), spec_.texture_scale, spec_.octaves);
    }
  }

  // Renders an image; `offsets` (H x W x 2, optional) displaces the sampled
  // pixel location on the background surfaces only. The object stays rigid.
  TensorGrid render_image(const FrameState& s, const TensorGrid* offsets) const {
    const std::size_t h = spec_.height;
    const std::size_t w = spec_.width;
    TensorGrid img(DType::kF64, {h, w, 3});
    auto out = img.f64();
    parallel_for(h, [&](std::size_t y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        const double px = static_cast<double>(x);
        const double py = static_cast<double>(y);
        auto hit = cast(s, px, py);
        if (offsets != nullptr && hit && hit->surface != Surface::kObject) {
          hit = cast(s, px + offsets->get(2 * p), py + offsets->get(2 * p + 1), false);
        }
        if (!hit) throw SpecError("ray misses the scene geometry");
        const Eigen::Vector3d c = shade(s, *hit);
        for (int ch = 0; ch < 3; ++ch) out[3 * p + static_cast<std::size_t>(ch)] = c[ch];
      }
    });
    return img;
  }

  struct FlowField {
    TensorGrid depth, flow;
    ValidityMask visible, object;
  };

  // Depth of frame `src` plus the exact displacement of every pixel to frame
  // `dst`, following the object's rigid motion where it is hit.
  FlowField flow(const FrameState& src, const FrameState& dst) const {
    const std::size_t h = spec_.height;
    const std::size_t w = spec_.width;
    FlowField f{TensorGrid(DType::kF64, {h, w}), TensorGrid(DType::kF64, {h, w, 2}),
                ValidityMask(h, w), ValidityMask(h, w)};
    auto depth = f.depth.f64();
    auto flow = f.flow.f64();
    const double max_x = static_cast<double>(w - 1);
    const double max_y = static_cast<double>(h - 1);
    parallel_for(h, [&](std::size_t y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        const auto hit = cast(src, static_cast<double>(x), static_cast<double>(y));
        if (!hit) throw SpecError("ray misses the scene geometry");
        depth[p] = hit->depth;
        Eigen::Vector3d moved = hit->world;
        if (hit->surface == Surface::kObject) {
          moved += dst.object_center - src.object_center;
          f.object.set(p, true);
        }
        const Eigen::Vector3d cam = dst.pose.apply(moved);
        if (cam.z() <= kMinDepth) continue;
        const Eigen::Vector2d target = project(cam, spec_.intrinsics);
        // Differencing two projections keeps a frozen world at exactly zero.
        const Eigen::Vector2d source = project(src.pose.apply(hit->world), spec_.intrinsics);
        flow[2 * p] = target.x() - source.x();
        flow[2 * p + 1] = target.y() - source.y();
        if (target.x() < 0.0 || target.x() > max_x || target.y() < 0.0 || target.y() > max_y) {
          continue;
        }
        const auto back = cast(dst, target.x(), target.y());
        f.visible.set(p, back && back->surface == hit->surface &&
                             std::abs(back->depth - cam.z()) <= 1e-7 * (1.0 + cam.z()));
      }
    });
    return f;
  }

  const SceneSpec& spec() const { return spec_; }

 private:
  const SceneSpec& spec_;
  Eigen::Vector3d normal_;
  double offset_ = 0.0;
  Eigen::Vector3d tex_u_, tex_v_;
};

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

void SceneSpec::validate() const {
  if (height < 32 || width < 32) throw SpecError("scene resolution must be at least 32x32");
  intrinsics.validate();
  if (camera_path.size() < 2) throw SpecError("camera_path needs at least two poses");
  if (camera_path.size() > 16) throw SpecError("camera_path is limited to 16 frames");
  for (const auto& pose : camera_path) pose.validate();
  if (octaves < 1) throw SpecError("octaves must be >= 1");
  if (!(texture_scale > 0.0)) throw SpecError("texture_scale must be positive");
  if (!(geometry.depth > 0.0)) throw SpecError("geometry depth must be positive");
  if (geometry.normal.norm() < 1e-9) throw SpecError("geometry normal must be non-zero");
  if (geometry.kind == GeometryKind::kTwoPlane && !(geometry.relief_depth > 0.0)) {
    throw SpecError("relief_depth must be positive");
  }
  for (const auto& pose : camera_path) {
    const Eigen::Vector3d centre = -(pose.R.transpose() * pose.t);
    const Eigen::Vector3d n = geometry.normal.normalized();
    const double side = n.dot(centre) - n.dot(Eigen::Vector3d(0.0, 0.0, geometry.depth));
    if (side >= 0.0) throw SpecError("camera is inside or behind the scene geometry");
    if (geometry.kind == GeometryKind::kTwoPlane && centre.z() >= geometry.relief_depth) {
      throw SpecError("camera is inside the relief geometry");
    }
    if (moving_object && centre.z() >= moving_object->center.z()) {
      throw SpecError("camera is behind the moving object plane");
    }
  }
}

void PerturbationSpec::validate() const {
  if (wobble_px < 0.0 || texture_drift_px < 0.0 || depth_noise_rel < 0.0) {
    throw ConfigError("perturbation amplitudes must be >= 0");
  }
  if (!(object_morph > 0.0)) throw ConfigError("object_morph must be positive");
}

bool PerturbationSpec::is_identity() const {
  return wobble_px == 0.0 && texture_drift_px == 0.0 && object_morph == 1.0 &&
         depth_noise_rel == 0.0;
}

TensorGrid render_frame(const SceneSpec& spec, int frame_index) {
  spec.validate();
  if (frame_index < 0 || static_cast<std::size_t>(frame_index) >= spec.camera_path.size()) {
    throw SpecError("frame index outside the camera path");
  }
  SceneRenderer renderer(spec);
  return renderer.render_image(renderer.state(frame_index), nullptr);
}

RenderedPair render_pair(const SceneSpec& spec, int frame_index) {
  spec.validate();
  if (frame_index < 0 || static_cast<std::size_t>(frame_index) + 1 >= spec.camera_path.size()) {
    throw SpecError("frame index needs a following frame in the camera path");
  }
  SceneRenderer renderer(spec);
  const FrameState a = renderer.state(frame_index);
  const FrameState b = renderer.state(frame_index + 1);

  RenderedPair pair;
  pair.image_a = renderer.render_image(a, nullptr);
  pair.image_b = renderer.render_image(b, nullptr);
  auto fwd = renderer.flow(a, b);
  auto bwd = renderer.flow(b, a);
  pair.depth_a = std::move(fwd.depth);
  pair.depth_b = std::move(bwd.depth);
  pair.flow_fwd = std::move(fwd.flow);
  pair.flow_bwd = std::move(bwd.flow);
  pair.fwd_visible = std::move(fwd.visible);
  pair.bwd_visible = std::move(bwd.visible);
  pair.object_a = std::move(fwd.object);
  pair.object_b = std::move(bwd.object);
  pair.confidence_a = TensorGrid(DType::kF64, {spec.height, spec.width});
  for (auto& v : pair.confidence_a.f64()) v = 1.0;
  pair.confidence_b = pair.confidence_a;
  pair.K = spec.intrinsics;
  pair.pose_a = a.pose;
  pair.pose_b = b.pose;
  pair.spec = spec;
  pair.frame_index = frame_index;
  return pair;
}

TensorGrid wobble_field(std::size_t height, std::size_t width, double amplitude,
                        std::uint64_t seed) {
  TensorGrid field(DType::kF64, {height, width, 2});
  if (amplitude == 0.0) return field;
  // Stream function psi = sum_k a_k sin(kx x + ky y + phase); the field
  // (d psi/dy, -d psi/dx) is divergence-free.
  constexpr int kModes = 4;
  Rng rng = make_rng(seed, {0x77AB});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * 3.14159265358979323846;
  struct Mode { double kx, ky, phase, weight; };
  std::array<Mode, kModes> modes{};
  for (auto& m : modes) {
    const double angle = two_pi * unit(rng);
    const double cycles = 0.5 + 1.5 * unit(rng);  // cycles across the image
    const double k = two_pi * cycles / static_cast<double>(std::max(height, width));
    m = {k * std::cos(angle), k * std::sin(angle), two_pi * unit(rng), 0.5 + unit(rng)};
  }
  auto data = field.f64();
  double peak = 0.0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double dx = 0.0;
      double dy = 0.0;
      for (const auto& m : modes) {
        const double c = m.weight * std::cos(m.kx * static_cast<double>(x) +
                                             m.ky * static_cast<double>(y) + m.phase);
        dx += m.ky * c;
        dy -= m.kx * c;
      }
      const std::size_t p = y * width + x;
      data[2 * p] = dx;
      data[2 * p + 1] = dy;
      peak = std::max(peak, std::hypot(dx, dy));
    }
  }
  const double scale = peak > 0.0 ? amplitude / peak : 0.0;
  for (auto& v : data) v *= scale;
  return field;
}

reward::PairInputs to_pair_inputs(const RenderedPair& pair) {
  reward::PairInputs in;
  in.image_a = pair.image_a;
  in.image_b = pair.image_b;
  in.depth_a = pair.depth_a;
  in.depth_b = pair.depth_b;
  in.K_a = in.K_b = pair.K;
  in.E_a = pair.pose_a;
  in.E_b = pair.pose_b;
  in.flow_fwd = pair.flow_fwd;
  in.flow_bwd = pair.flow_bwd;
  in.confidence_a = pair.confidence_a;
  in.confidence_b = pair.confidence_b;
  in.fwd_valid = pair.fwd_visible;
  in.bwd_valid = pair.bwd_visible;
  return in;
}

RenderedPair inject_perturbation(const RenderedPair& pair, const PerturbationSpec& p,
                                 std::uint64_t seed) {
  p.validate();
  RenderedPair out = pair;
  if (p.is_identity()) return out;

  const SceneSpec& spec = pair.spec;
  const bool reshade = (p.wobble_px > 0.0 && !p.corrupt_flow) || p.texture_drift_px > 0.0 ||
                       (p.object_morph != 1.0 && spec.moving_object.has_value());
  const TensorGrid wobble = wobble_field(spec.height, spec.width, p.wobble_px, seed);
  if (reshade) {
    SceneRenderer renderer(spec);
    FrameState b = renderer.state(pair.frame_index + 1);
    // Drift is specified in pixels at the reference plane depth.
    b.texture_drift = p.texture_drift_px * spec.geometry.depth / spec.intrinsics.fx;
    b.object_scale = p.object_morph;
    const bool displace = p.wobble_px > 0.0 && !p.corrupt_flow;
    out.image_b = renderer.render_image(b, displace ? &wobble : nullptr);
  }
  if (p.wobble_px > 0.0 && p.corrupt_flow) {
    auto fwd = out.flow_fwd.f64();
    auto bwd = out.flow_bwd.f64();
    const auto w = wobble.f64();
    for (std::size_t i = 0; i < w.size(); ++i) {
      fwd[i] += w[i];
      bwd[i] -= w[i];
    }
  }
  if (p.depth_noise_rel > 0.0) {
    Rng rng = make_rng(seed, {0xD3E7});
    std::normal_distribution<double> normal(0.0, p.depth_noise_rel);
    for (auto& v : out.depth_a.f64()) v *= std::exp(normal(rng));
    for (auto& v : out.depth_b.f64()) v *= std::exp(normal(rng));
  }
  return out;
}

RenderedVideo render_video(const SceneSpec& spec, const PerturbationSpec& p, std::uint64_t seed) {
  spec.validate();
  p.validate();
  const std::size_t n = spec.camera_path.size();
  RenderedVideo v;
  v.K = spec.intrinsics;
  v.poses = spec.camera_path;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    RenderedPair pair = render_pair(spec, static_cast<int>(k));
    if (k == 0) {
      v.frames.push_back(pair.image_a);
      v.depths.push_back(pair.depth_a);
      v.object_masks.push_back(pair.object_a);
    }
    if (p.corrupt_flow && p.wobble_px > 0.0) {
      PerturbationSpec flow_only;
      flow_only.wobble_px = p.wobble_px;
      flow_only.corrupt_flow = true;
      pair = inject_perturbation(pair, flow_only, derive_seed(seed, {k, 0xF10}));
    }
    const std::size_t frame = k + 1;
    PerturbationSpec pk;
    pk.wobble_px = p.corrupt_flow ? 0.0 : p.wobble_px;
    pk.texture_drift_px = p.texture_drift_px * static_cast<double>(frame);
    pk.object_morph = frame % 2 == 1 ? p.object_morph : 1.0;
    v.frames.push_back(pk.is_identity()
                           ? pair.image_b
                           : inject_perturbation(pair, pk, derive_seed(seed, {frame})).image_b);
    v.depths.push_back(pair.depth_b);
    v.object_masks.push_back(pair.object_b);
    v.flow_fwd.push_back(std::move(pair.flow_fwd));
    v.flow_bwd.push_back(std::move(pair.flow_bwd));
    v.valid_fwd.push_back(std::move(pair.fwd_visible));
    v.valid_bwd.push_back(std::move(pair.bwd_visible));
  }
  if (p.depth_noise_rel > 0.0) {
    for (std::size_t k = 0; k < v.depths.size(); ++k) {
      Rng rng = make_rng(seed, {k, 0xD3E7});
      std::normal_distribution<double> normal(0.0, p.depth_noise_rel);
      for (auto& d : v.depths[k].f64()) d *= std::exp(normal(rng));
    }
  }
  return v;
}

double squash(double raw) { return std::tanh(softplus(raw)); }

DecodedLatent decode_parameters(std::span<const double> z, const LatentRanges& ranges) {
  if (z.size() != kLatentDim) {
    throw ShapeError("decode_latent: expected a " + std::to_string(kLatentDim) +
                     "-vector, got " + std::to_string(z.size()));
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw NumericError("decode_latent: non-finite latent");
  }
  DecodedLatent d;
  d.perturbation.wobble_px = ranges.wobble_px * squash(z[0]);
  d.perturbation.texture_drift_px = ranges.drift_px * squash(z[1]);
  d.perturbation.object_morph = 1.0 + ranges.morph_extra * squash(z[2]);
  d.camera_tx = ranges.camera_tx * squash(z[3]);
  return d;
}

RenderedPair decode_latent(std::span<const double> z, const SceneSpec& scene_template,
                           std::uint64_t seed, const LatentRanges& ranges) {
  const DecodedLatent d = decode_parameters(z, ranges);
  SceneSpec spec = scene_template;
  spec.camera_path = {PoseSE3::identity(), PoseSE3::translation(d.camera_tx, 0.0, 0.0)};
  return inject_perturbation(render_pair(spec, 0), d.perturbation, seed);
}

SceneSpec default_scene(GeometryKind kind) {
  SceneSpec spec;
  spec.geometry.kind = kind;
  switch (kind) {
    case GeometryKind::kFrontoParallel:
      break;
    case GeometryKind::kInclined:
      spec.geometry.normal = Eigen::Vector3d(0.25, -0.2, 1.0).normalized();
      break;
    case GeometryKind::kTwoPlane:
      spec.geometry.relief_depth = 1.5;
      spec.geometry.relief_rect = {-0.25, -0.15, 0.1, 0.2};
      break;
  }
  return spec;
}

SceneSpec grpo_template() {
  SceneSpec spec = default_scene(GeometryKind::kFrontoParallel);
  spec.texture_seed = 11;
  MovingObject obj;
  obj.center = Eigen::Vector3d(-0.05, 0.02, 1.2);
  obj.half_size = Eigen::Vector2d(0.15, 0.12);
  obj.velocity = Eigen::Vector3d(0.024, 0.0, 0.0);
  spec.moving_object = obj;
  return spec;
}

// ---- JSON ----

namespace {

std::string geometry_name(GeometryKind k) {
  switch (k) {
    case GeometryKind::kFrontoParallel: return "fronto_parallel";
    case GeometryKind::kInclined: return "inclined";
    case GeometryKind::kTwoPlane: return "two_plane";
  }
  return "fronto_parallel";
}

GeometryKind geometry_from_name(const std::string& s) {
  if (s == "fronto_parallel") return GeometryKind::kFrontoParallel;
  if (s == "inclined") return GeometryKind::kInclined;
  if (s == "two_plane") return GeometryKind::kTwoPlane;
  throw ConfigError("unknown geometry kind \"" + s + "\"");
}

Eigen::Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

nlohmann::json pose_json(const PoseSE3& p) {
  const auto m = p.to_row_major();
  return nlohmann::json(std::vector<double>(m.begin(), m.end()));
}

}  // namespace

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json::object();
  j["geometry"] = {{"kind", geometry_name(s.geometry.kind)},
                   {"depth", s.geometry.depth},
                   {"normal", {s.geometry.normal.x(), s.geometry.normal.y(), s.geometry.normal.z()}},
                   {"relief_depth", s.geometry.relief_depth},
                   {"relief_rect", s.geometry.relief_rect}};
  j["texture_seed"] = s.texture_seed;
  j["texture_scale"] = s.texture_scale;
  j["octaves"] = s.octaves;
  j["resolution"] = {s.height, s.width};
  j["intrinsics"] = s.intrinsics.to_array();
  auto path = nlohmann::json::array();
  for (const auto& p : s.camera_path) path.push_back(pose_json(p));
  j["camera_path"] = path;
  if (s.moving_object) {
    const auto& o = *s.moving_object;
    j["moving_object"] = {{"center", {o.center.x(), o.center.y(), o.center.z()}},
                          {"half_size", {o.half_size.x(), o.half_size.y()}},
                          {"velocity", {o.velocity.x(), o.velocity.y(), o.velocity.z()}},
                          {"texture_seed", o.texture_seed}};
  }
}

// Accepts either an explicit "camera_path" (3x4 row-major world-to-camera
// matrices) or a "camera_motion" generator: {"frames": n,
// "translation_per_frame": [x, y, z], "rotation_per_frame": [rx, ry, rz]}.
void from_json(const nlohmann::json& j, SceneSpec& s) {
  s = SceneSpec{};
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    s.geometry.kind = geometry_from_name(g.value("kind", std::string("fronto_parallel")));
    s.geometry.depth = g.value("depth", s.geometry.depth);
    if (g.contains("normal")) s.geometry.normal = vec3(g.at("normal"));
    s.geometry.relief_depth = g.value("relief_depth", s.geometry.relief_depth);
    if (g.contains("relief_rect")) {
      s.geometry.relief_rect = g.at("relief_rect").get<std::array<double, 4>>();
    }
  }
  s.texture_seed = j.value("texture_seed", s.texture_seed);
  s.texture_scale = j.value("texture_scale", s.texture_scale);
  s.octaves = j.value("octaves", s.octaves);
  if (j.contains("resolution")) {
    const auto r = j.at("resolution").get<std::vector<std::size_t>>();
    if (r.size() != 2) throw ConfigError("resolution must be [height, width]");
    s.height = r[0];
    s.width = r[1];
    s.intrinsics.cx = (static_cast<double>(s.width) - 1.0) / 2.0;
    s.intrinsics.cy = (static_cast<double>(s.height) - 1.0) / 2.0;
  }
  if (j.contains("intrinsics")) {
    s.intrinsics = Intrinsics::from_span(j.at("intrinsics").get<std::vector<double>>());
  }
  if (j.contains("camera_path")) {
    s.camera_path.clear();
    for (const auto& p : j.at("camera_path")) {
      s.camera_path.push_back(PoseSE3::from_row_major(p.get<std::vector<double>>()));
    }
  } else if (j.contains("camera_motion")) {
    const auto& m = j.at("camera_motion");
    const int frames = m.value("frames", 2);
    const Eigen::Vector3d dt = m.contains("translation_per_frame")
                                   ? vec3(m.at("translation_per_frame"))
                                   : Eigen::Vector3d::Zero();
    const Eigen::Vector3d dr = m.contains("rotation_per_frame")
                                   ? vec3(m.at("rotation_per_frame"))
                                   : Eigen::Vector3d::Zero();
    s.camera_path.clear();
    for (int f = 0; f < frames; ++f) {
      s.camera_path.push_back(PoseSE3::from_rotation_vector(f * dr, f * dt));
    }
  }
  if (j.contains("moving_object") && !j.at("moving_object").is_null()) {
    const auto& o = j.at("moving_object");
    MovingObject obj;
    if (o.contains("center")) obj.center = vec3(o.at("center"));
    if (o.contains("half_size")) {
      const auto hs = o.at("half_size").get<std::vector<double>>();
      if (hs.size() != 2) throw ConfigError("half_size must be a 2-vector");
      obj.half_size = {hs[0], hs[1]};
    }
    if (o.contains("velocity")) obj.velocity = vec3(o.at("velocity"));
    obj.texture_seed = o.value("texture_seed", obj.texture_seed);
    s.moving_object = obj;
  }
}

void to_json(nlohmann::json& j, const PerturbationSpec& p) {
  j = {{"wobble_px", p.wobble_px},
       {"texture_drift_px", p.texture_drift_px},
       {"object_morph", p.object_morph},
       {"depth_noise_rel", p.depth_noise_rel},
       {"corrupt_flow", p.corrupt_flow}};
}

void from_json(const nlohmann::json& j, PerturbationSpec& p) {
  p = PerturbationSpec{};
  p.wobble_px = j.value("wobble_px", p.wobble_px);
  p.texture_drift_px = j.value("texture_drift_px", p.texture_drift_px);
  p.object_morph = j.value("object_morph", p.object_morph);
  p.depth_noise_rel = j.value("depth_noise_rel", p.depth_noise_rel);
  p.corrupt_flow = j.value("corrupt_flow", p.corrupt_flow);
  p.validate();
}

}  // namespace geoflow::synth
