#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "geoflow/errors.hpp"
#include "geoflow/reward.hpp"
#include "geoflow/synthetic.hpp"

using namespace geoflow;
using namespace geoflow::reward;

namespace {

TensorGrid flow_const(std::size_t h, std::size_t w, double dx, double dy) {
  TensorGrid g(DType::kF64, {h, w, 2});
  for (std::size_t p = 0; p < h * w; ++p) {
    g.set(2 * p, dx);
    g.set(2 * p + 1, dy);
  }
  return g;
}

TensorGrid scalar_map(std::size_t h, std::size_t w, std::vector<double> v) {
  TensorGrid g(DType::kF64, {h, w});
  for (std::size_t i = 0; i < v.size(); ++i) g.set(i, v[i]);
  return g;
}

ValidityMask all_valid(std::size_t h, std::size_t w) {
  ValidityMask m(h, w);
  for (std::size_t p = 0; p < h * w; ++p) m.set(p, true);
  return m;
}

TensorGrid features(std::size_t h, std::size_t w, std::size_t c,
                    const std::function<double(std::size_t, std::size_t)>& f) {
  TensorGrid g(DType::kF64, {h, w, c});
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t k = 0; k < c; ++k) g.set(p * c + k, f(p, k));
  return g;
}

synth::SceneSpec panning_scene(synth::GeometryKind kind) {
  auto spec = synth::default_scene(kind);
  spec.camera_path = {PoseSE3::identity(), PoseSE3::translation(0.06, 0.01, 0.0)};
  return spec;
}

VideoInputs video_from(const synth::SceneSpec& spec) {
  VideoInputs v;
  const int n = static_cast<int>(spec.camera_path.size());
  for (int tau = 0; tau + 1 < n; ++tau) {
    const auto pair = synth::render_pair(spec, tau);
    if (tau == 0) {
      v.frames.push_back(pair.image_a);
      v.depths.push_back(pair.depth_a);
      v.extrinsics.push_back(pair.pose_a);
      v.intrinsics.push_back(pair.K);
    }
    v.frames.push_back(pair.image_b);
    v.depths.push_back(pair.depth_b);
    v.extrinsics.push_back(pair.pose_b);
    v.intrinsics.push_back(pair.K);
    v.flow_fwd.push_back(pair.flow_fwd);
    v.flow_bwd.push_back(pair.flow_bwd);
  }
  return v;
}

}  // namespace

TEST_CASE("normalized EPE worked values") {
  auto zero = normalized_epe(flow_const(2, 2, 3, -1), flow_const(2, 2, 3, -1), 1.5);
  for (double v : zero.f64()) CHECK(v == 0.0);

  auto a = normalized_epe(flow_const(1, 1, 6, 0), flow_const(1, 1, 4, 0), 1.0);
  CHECK(a.get(0) == doctest::Approx(2.0 / 11.0).epsilon(1e-12));
  auto b = normalized_epe(flow_const(1, 1, 3, 4), flow_const(1, 1, 0, 0), 1.0);
  CHECK(b.get(0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));

  CHECK_THROWS_AS(normalized_epe(flow_const(1, 2, 0, 0), flow_const(2, 1, 0, 0), 1.0), ShapeError);
}

TEST_CASE("relative depth error and hole sentinel") {
  ValidityMask valid(1, 3);
  valid.set(0, true);
  valid.set(1, true);
  auto e = relative_depth_error(scalar_map(1, 3, {2.0, 2.2, 5.0}), scalar_map(1, 3, {2.0, 2.0, 1.0}),
                                1.0, valid);
  CHECK(e.get(0) == 0.0);
  CHECK(e.get(1) == doctest::Approx(0.2 / 3.0).epsilon(1e-12));
  CHECK(e.get(2) == kHoleSentinel);
}

TEST_CASE("geometric quality product and clamp") {
  auto q = geo_quality(scalar_map(1, 4, {0.0, 1.7, 2.0 / 11.0, 0.3}),
                       scalar_map(1, 4, {0.0, 0.4, 0.2 / 3.0, kHoleSentinel}));
  CHECK(q.get(0) == 1.0);
  CHECK(q.get(1) == 0.0);
  CHECK(q.get(2) == doctest::Approx((9.0 / 11.0) * (14.0 / 15.0)).epsilon(1e-12));
  CHECK(q.get(2) == doctest::Approx(0.76364).epsilon(1e-5));
  CHECK(q.get(3) == 0.0);
}

TEST_CASE("r_geo aggregation examples") {
  RewardConfig cfg;
  CHECK(r_geo(scalar_map(1, 2, {1.0, 1.0}), all_valid(1, 2), nullptr, cfg) == 0.0);
  CHECK(r_geo(scalar_map(1, 2, {0.5, 0.5}), all_valid(1, 2), nullptr, cfg) == -0.5);
  CHECK(r_geo(scalar_map(1, 3, {1.0, 0.5, 0.0}), all_valid(1, 3), nullptr, cfg) ==
        doctest::Approx(-0.5).epsilon(1e-15));
  CHECK_THROWS_AS(r_geo(scalar_map(1, 2, {1.0, 1.0}), ValidityMask(1, 2), nullptr, cfg),
                  EmptyMaskError);
}

TEST_CASE("r_geo gating modes") {
  const auto q = scalar_map(1, 4, {1.0, 0.0, 0.5, 0.25});
  const auto conf = scalar_map(1, 4, {1.0, 0.2, 0.6, 0.0});
  RewardConfig cfg;
  cfg.gating = GatingMode::kThreshold;
  cfg.gating_threshold = 0.5;
  CHECK(r_geo(q, all_valid(1, 4), &conf, cfg) == doctest::Approx(0.75 - 1.0));
  cfg.gating = GatingMode::kWeighted;
  CHECK(r_geo(q, all_valid(1, 4), &conf, cfg) == doctest::Approx((1.0 + 0.3) / 1.8 - 1.0));
  cfg.gating = GatingMode::kOff;
  CHECK(r_geo(q, all_valid(1, 4), &conf, cfg) == doctest::Approx(1.75 / 4.0 - 1.0));
}

TEST_CASE("gating soundness: sub-threshold pixels never affect r_geo") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RewardConfig cfg;
  cfg.gating = GatingMode::kThreshold;
  cfg.gating_threshold = 0.4;
  for (int trial = 0; trial < 50; ++trial) {
    TensorGrid q(DType::kF64, {8, 8}), conf(DType::kF64, {8, 8});
    for (std::size_t p = 0; p < 64; ++p) {
      q.set(p, u(rng));
      conf.set(p, u(rng));
    }
    conf.set(0, 0.9);
    TensorGrid zeroed = q;
    for (std::size_t p = 0; p < 64; ++p)
      if (conf.get(p) < cfg.gating_threshold) zeroed.set(p, 0.0);
    CHECK(r_geo(q, all_valid(8, 8), &conf, cfg) == r_geo(zeroed, all_valid(8, 8), &conf, cfg));
  }
}

TEST_CASE("r_dino examples") {
  const std::size_t h = 2, w = 2, c = 4;
  auto base = features(h, w, c, [](std::size_t p, std::size_t k) { return 1.0 + p + 0.5 * k; });
  CHECK(r_dino(base, base, all_valid(h, w)) == doctest::Approx(0.0).epsilon(1e-15));

  auto e0 = features(h, w, c, [](std::size_t, std::size_t k) { return k == 0 ? 1.0 : 0.0; });
  auto e1 = features(h, w, c, [](std::size_t, std::size_t k) { return k == 1 ? 2.0 : 0.0; });
  CHECK(r_dino(e0, e1, all_valid(h, w)) == -1.0);

  auto half = features(h, w, c, [](std::size_t p, std::size_t k) {
    return p < 2 ? (k == 0 ? 1.0 : 0.0) : (k == 1 ? 1.0 : 0.0);
  });
  CHECK(r_dino(e0, half, all_valid(h, w)) == doctest::Approx(-0.5).epsilon(1e-15));

  auto zero = features(h, w, c, [](std::size_t, std::size_t) { return 0.0; });
  CHECK(r_dino(zero, base, all_valid(h, w)) == -1.0);
  CHECK(r_dino(e0, features(h, w, c, [](std::size_t, std::size_t k) { return k == 0 ? -1.0 : 0.0; }),
               all_valid(h, w)) == -2.0);

  CHECK_THROWS_AS(r_dino(base, base, ValidityMask(h, w)), EmptyMaskError);
}

TEST_CASE("reference features of a constant image") {
  TensorGrid img(DType::kF64, {16, 24, 3});
  for (auto& v : img.f64()) v = 0.4;
  const auto f = reference_features(img, 8);
  REQUIRE(f.dims() == std::vector<std::size_t>{2, 3, kFeatureChannels});
  for (std::size_t p = 0; p < 6; ++p) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(f.get(p * 12 + k) == doctest::Approx(0.4));
    for (std::size_t k = 3; k < 12; ++k) CHECK(f.get(p * 12 + k) == doctest::Approx(0.0));
  }
  CHECK(r_dino(f, reference_features(img, 8), all_valid(2, 3)) == doctest::Approx(0.0));
}

TEST_CASE("reference features: stripe texture shifted by one period") {
  const std::size_t h = 32, w = 48, period = 8;
  auto stripes = [&](double shift) {
    TensorGrid img(DType::kF64, {h, w, 3});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double s = 0.5 + 0.4 * std::sin(2.0 * M_PI * (x + shift) / period);
        img.set(y, x, 0, s);
        img.set(y, x, 1, 0.5 * s);
        img.set(y, x, 2, 1.0 - s);
      }
    return img;
  };
  const auto a = reference_features(stripes(0.0), 8);
  const auto b = reference_features(stripes(static_cast<double>(period)), 8);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.get(i) - b.get(i)));
  CHECK(worst < 1e-6);
  CHECK(r_dino(a, b, all_valid(a.height(), a.width())) == doctest::Approx(0.0).epsilon(1e-6));
  // histogram picks up the horizontal gradient
  CHECK(a.get(6) > 0.0);
}

TEST_CASE("reference features crop and reject oversize patches") {
  TensorGrid img(DType::kF64, {20, 17, 3});
  CHECK(reference_features(img, 8).dims() == std::vector<std::size_t>{2, 2, 12});
  CHECK_THROWS_AS(reference_features(img, 18), ConfigError);
  CHECK_THROWS_AS(reference_features(img, 0), ConfigError);
}

TEST_CASE("score_pair on a static clean scene is the optimum") {
  const auto pair = synth::render_pair(synth::default_scene(), 0);
  const auto s = score_pair(synth::to_pair_inputs(pair), RewardConfig{});
  CHECK(std::abs(s.r_geo) < 1e-6);
  CHECK(std::abs(s.r_dino) < 1e-6);
  CHECK(std::abs(s.r_pair) < 1e-6);
  CHECK(s.valid_fraction == 1.0);
}

TEST_CASE("score_pair on a clean translating scene is the optimum") {
  auto spec = synth::default_scene();
  spec.camera_path = {PoseSE3::identity(), PoseSE3::translation(0.1, 0.0, 0.0)};
  const auto s = score_pair(synth::to_pair_inputs(synth::render_pair(spec, 0)), RewardConfig{});
  CHECK(std::abs(s.r_pair) < 1e-6);
  CHECK(s.valid_fraction < 1.0);
}

TEST_CASE("wobble 0.5 px scores strictly below clean") {
  const auto pair = synth::render_pair(synth::default_scene(), 0);
  synth::PerturbationSpec p;
  p.wobble_px = 0.5;
  const double clean = score_pair(synth::to_pair_inputs(pair), {}).r_pair;
  const double wobbly = score_pair(synth::to_pair_inputs(synth::inject_perturbation(pair, p, 3)), {}).r_pair;
  CHECK(wobbly < clean);
}

TEST_CASE("composite is affine in lambda") {
  synth::PerturbationSpec p;
  p.wobble_px = 1.0;
  p.corrupt_flow = true;
  const auto pair = synth::inject_perturbation(
      synth::render_pair(panning_scene(synth::GeometryKind::kTwoPlane), 0), p, 5);
  const auto in = synth::to_pair_inputs(pair);
  RewardConfig cfg;
  std::vector<PairScore> s;
  for (double lambda : {0.0, 0.5, 1.0}) {
    cfg.lambda = lambda;
    s.push_back(score_pair(in, cfg));
  }
  CHECK(s[0].r_pair == s[0].r_dino);
  CHECK(s[2].r_pair == s[2].r_geo);
  const double slope = s[0].r_geo - s[0].r_dino;
  CHECK(s[1].r_pair == doctest::Approx(s[0].r_pair + 0.5 * slope).epsilon(1e-14));
  CHECK(s[0].r_geo < -1e-4);

  // worked value
  cfg.lambda = 0.5;
  CHECK(cfg.lambda * -0.2 + (1.0 - cfg.lambda) * -0.4 == doctest::Approx(-0.3).epsilon(1e-15));
}

TEST_CASE("r_geo equals brute-force mean over emitted maps") {
  for (auto kind : {synth::GeometryKind::kFrontoParallel, synth::GeometryKind::kInclined,
                    synth::GeometryKind::kTwoPlane}) {
    synth::PerturbationSpec p;
    p.wobble_px = 1.5;
    p.corrupt_flow = true;
    p.depth_noise_rel = 0.05;
    const auto pair = synth::inject_perturbation(synth::render_pair(panning_scene(kind), 0), p, 9);
    const auto s = score_pair(synth::to_pair_inputs(pair), RewardConfig{});
    double num = 0.0, den = 0.0;
    std::size_t in_omega = 0;
    for (std::size_t px = 0; px < s.quality_map.size(); ++px) {
      if (!s.omega.get(px)) {
        CHECK(s.weight_map.get(px) == 0.0);
        continue;
      }
      ++in_omega;
      num += s.weight_map.get(px) * s.quality_map.get(px);
      den += s.weight_map.get(px);
    }
    CHECK(std::abs(num / den - 1.0 - s.r_geo) <= 1e-12);
    CHECK(s.valid_fraction == static_cast<double>(in_omega) / s.quality_map.size());
  }
}

TEST_CASE("reward bounds hold on random inputs") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0), f(-6.0, 6.0), d(-0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 32, w = 40;
    PairInputs in;
    in.image_a = TensorGrid(DType::kF64, {h, w, 3});
    in.image_b = TensorGrid(DType::kF64, {h, w, 3});
    for (auto& v : in.image_a.f64()) v = u(rng);
    for (auto& v : in.image_b.f64()) v = u(rng);
    in.depth_a = TensorGrid(DType::kF64, {h, w});
    in.depth_b = TensorGrid(DType::kF64, {h, w});
    for (auto& v : in.depth_a.f64()) v = d(rng);
    for (auto& v : in.depth_b.f64()) v = d(rng);
    in.flow_fwd = TensorGrid(DType::kF64, {h, w, 2});
    in.flow_bwd = TensorGrid(DType::kF64, {h, w, 2});
    for (auto& v : in.flow_fwd.f64()) v = f(rng);
    for (auto& v : in.flow_bwd.f64()) v = f(rng);
    in.K_a = in.K_b = Intrinsics{40.0, 40.0, 20.0, 16.0};
    in.E_a = PoseSE3::identity();
    in.E_b = PoseSE3::from_rotation_vector({0.02, -0.01, 0.03}, {0.05, 0.0, 0.02});
    try {
      const auto s = score_pair(in, RewardConfig{});
      CHECK(s.r_geo >= -1.0);
      CHECK(s.r_geo <= 0.0);
      CHECK(s.r_dino >= -2.0);
      CHECK(s.r_dino <= 0.0);
      for (double q : s.quality_map.f64()) {
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
      }
    } catch (const EmptyMaskError&) {
      // random flows can push every patch out of frame; that is a legal outcome
    }
  }
}

TEST_CASE("score_pair rejects inconsistent inputs") {
  auto in = synth::to_pair_inputs(synth::render_pair(synth::default_scene(), 0));
  auto bad = in;
  bad.depth_b = TensorGrid(DType::kF64, {10, 10});
  CHECK_THROWS_AS(score_pair(bad, {}), ShapeError);
  bad = in;
  bad.flow_fwd.set(5, std::nan(""));
  CHECK_THROWS_AS(score_pair(bad, {}), NumericError);
  bad = in;
  for (auto& v : bad.depth_a.f64()) v = -1.0;
  CHECK_THROWS_AS(score_pair(bad, {}), EmptyMaskError);
}

TEST_CASE("score_video aggregation") {
  auto spec = synth::default_scene(synth::GeometryKind::kTwoPlane);
  spec.camera_path = {PoseSE3::identity(), PoseSE3::translation(0.04, 0.0, 0.0),
                      PoseSE3::translation(0.09, 0.01, 0.0)};
  auto video = video_from(spec);
  RewardConfig cfg;

  SUBCASE("two frames give the single pair score") {
    VideoInputs two = video;
    two.frames.resize(2);
    two.depths.resize(2);
    two.intrinsics.resize(2);
    two.extrinsics.resize(2);
    two.flow_fwd.resize(1);
    two.flow_bwd.resize(1);
    const auto vs = score_video(two, cfg);
    REQUIRE(vs.pairs.size() == 1);
    CHECK(vs.r_video == vs.pairs[0].r_pair);
  }
  SUBCASE("r_video is the mean of pair scores") {
    // make the pairs differ by corrupting the second frame's appearance
    video.frames[1] = synth::inject_perturbation(synth::render_pair(spec, 0),
                                                 {.wobble_px = 2.0}, 4).image_b;
    const auto vs = score_video(video, cfg);
    REQUIRE(vs.pairs.size() == 2);
    CHECK(vs.pairs[0].r_pair != vs.pairs[1].r_pair);
    CHECK(vs.r_video == (vs.pairs[0].r_pair + vs.pairs[1].r_pair) / 2.0);
    CHECK(vs.taus == std::vector<int>{0, 1});
  }
  SUBCASE("stride composes flows") {
    cfg.pair_stride = 2;
    const auto vs = score_video(video, cfg);
    REQUIRE(vs.pairs.size() == 1);
    CHECK(std::abs(vs.pairs[0].r_geo) < 1e-3);
    cfg.pair_stride = 3;
    CHECK_THROWS_AS(score_video(video, cfg), InputError);
  }
  SUBCASE("three identical frames are static") {
    auto still = video_from(synth::default_scene());
    still.frames.push_back(still.frames[0]);
    still.depths.push_back(still.depths[0]);
    still.intrinsics.push_back(still.intrinsics[0]);
    still.extrinsics.push_back(still.extrinsics[0]);
    still.flow_fwd.push_back(still.flow_fwd[0]);
    still.flow_bwd.push_back(still.flow_bwd[0]);
    const auto vs = score_video(still, RewardConfig{});
    CHECK(vs.pairs.size() == 2);
    CHECK(std::abs(vs.r_video) < 1e-6);
  }
  SUBCASE("report layout") {
    const auto vs = score_video(video, cfg);
    const auto j = video_report(vs, cfg);
    CHECK(j["pairs"].size() == 2);
    CHECK(j["pairs"][1]["tau"] == 1);
    CHECK(j["r_video"].get<double>() == vs.r_video);
    CHECK(j["config"]["lambda"] == 0.5);
  }
}

TEST_CASE("reward config JSON round trip and validation") {
  RewardConfig c;
  c.lambda = 0.25;
  c.gating = GatingMode::kThreshold;
  c.gating_threshold = 0.3;
  nlohmann::json j = c;
  const auto back = j.get<RewardConfig>();
  CHECK(back.lambda == 0.25);
  CHECK(back.gating == GatingMode::kThreshold);
  CHECK(back.gating_threshold == 0.3);
  CHECK(nlohmann::json({{"confidence_gating", 0.7}}).get<RewardConfig>().gating_threshold == 0.7);
  RewardConfig bad;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.pair_stride = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
