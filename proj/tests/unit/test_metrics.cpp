#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "geoflow/errors.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/synthetic.hpp"

using namespace geoflow;
using namespace geoflow::metrics;

namespace {

TensorGrid constant_flow(std::size_t h, std::size_t w, double fx, double fy) {
  TensorGrid f(DType::kF64, {h, w, 2});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      f.set(y, x, 0, fx);
      f.set(y, x, 1, fy);
    }
  }
  return f;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& t) {
  Eigen::Matrix3d m;
  m << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  return m;
}

// F for x_b = R x_a + t between cameras with the given intrinsics.
Eigen::Matrix3d analytic_f(const Eigen::Matrix3d& Ka, const Eigen::Matrix3d& Kb,
                           const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  return Kb.inverse().transpose() * skew(t) * R * Ka.inverse();
}

double alignment(Eigen::Matrix3d a, Eigen::Matrix3d b) {
  a /= a.norm();
  b /= b.norm();
  return std::abs((a.array() * b.array()).sum());
}

double sampson_oracle(const Eigen::Matrix3d& F, const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
  const Eigen::Vector3d p(u.x(), u.y(), 1.0), q(v.x(), v.y(), 1.0);
  const double e = q.transpose() * F * p;
  const Eigen::Vector3d l = F * p, m = F.transpose() * q;
  return e * e / (l(0) * l(0) + l(1) * l(1) + m(0) * m(0) + m(1) * m(1));
}

struct RandomView {
  Eigen::Matrix3d K, R;
  Eigen::Vector3d t;
  CorrespondenceSet pairs;
};

// Random 3-D points in front of camera a, seen by a randomly posed camera b.
RandomView random_view(std::uint64_t seed, std::size_t n) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomView v;
  v.K << 120, 0, 64, 0, 110, 48, 0, 0, 1;
  const Eigen::Vector3d rotvec(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
  v.R = Eigen::AngleAxisd(rotvec.norm(), rotvec.normalized()).toRotationMatrix();
  v.t = Eigen::Vector3d(0.3 * u(rng), 0.3 * u(rng), 0.1 * u(rng));
  if (v.t.norm() < 0.05) v.t.x() += 0.1;
  v.pairs.source = CorrespondenceSource::kSyntheticGT;
  while (v.pairs.size() < n) {
    const Eigen::Vector3d X(u(rng), u(rng), 3.0 + u(rng));
    const Eigen::Vector3d Y = v.R * X + v.t;
    if (Y.z() < 0.5) continue;
    v.pairs.a.push_back((v.K * X).hnormalized());
    v.pairs.b.push_back((v.K * Y).hnormalized());
  }
  return v;
}

}  // namespace

TEST_CASE("flow-grid correspondences") {
  const auto zero = constant_flow(32, 32, 0.0, 0.0);
  const auto c = sample_correspondences(zero, 8);
  REQUIRE(c.size() == 16);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.a[i] == c.b[i]);
  CHECK(c.a.front() == Eigen::Vector2d(4, 4));

  SUBCASE("a quarter masked out") {
    ValidityMask m(32, 32, true);
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) m.set(y, x, false);
    }
    const auto d = sample_correspondences(zero, 1, &m);
    CHECK(d.size() == 768);
    for (const auto& p : d.a) CHECK(m.get(static_cast<std::size_t>(p.y()), static_cast<std::size_t>(p.x())));
  }

  SUBCASE("moving object excluded") {
    auto spec = synth::default_scene();
    spec.moving_object = synth::MovingObject{};
    spec.moving_object->velocity = Eigen::Vector3d(0.03, 0.0, 0.0);
    const auto pair = synth::render_pair(spec, 0);
    ValidityMask background(64, 64, true);
    std::size_t expected = 0;
    for (std::size_t y = 0; y < 64; ++y) {
      for (std::size_t x = 0; x < 64; ++x) {
        const bool bg = !pair.object_a.get(y, x) && !pair.object_b.get(y, x);
        background.set(y, x, bg);
        if (bg && y % 2 == 1 && x % 2 == 1) ++expected;
      }
    }
    CHECK(pair.object_a.count() > 0);
    const auto d = sample_correspondences(pair.flow_fwd, 2, &background);
    CHECK(d.size() == expected);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.a[i] == d.b[i]);
  }

  SUBCASE("out-of-bounds targets dropped") {
    const auto shifted = sample_correspondences(constant_flow(32, 32, 10.0, 0.0), 8);
    CHECK(shifted.size() == 12);
  }

  CHECK_THROWS_AS(sample_correspondences(constant_flow(8, 8, 0, 0), 16), InsufficientDataError);
  CHECK_THROWS_AS(sample_correspondences(zero, 0), ConfigError);
}

TEST_CASE("eight-point on a rendered two-plane scene") {
  auto spec = synth::default_scene(synth::GeometryKind::kTwoPlane);
  spec.camera_path = {PoseSE3::identity(), PoseSE3::translation(0.1, 0.0, 0.0)};
  const auto pair = synth::render_pair(spec, 0);
  const auto c = sample_correspondences(pair.flow_fwd, 3, &pair.fwd_visible);
  const auto F = eight_point(c);
  const auto T = relative_transform(pair.pose_a, pair.pose_b);
  const Eigen::Matrix3d K = pair.K.matrix();
  CHECK(alignment(F, analytic_f(K, K, T.R, T.t)) > 0.9999);
  CHECK(sampson_error(F, c).mean < 1e-10);

  SUBCASE("a single plane is degenerate") {
    auto flat = synth::default_scene();
    flat.camera_path = spec.camera_path;
    const auto p = synth::render_pair(flat, 0);
    CHECK_THROWS_AS(eight_point(sample_correspondences(p.flow_fwd, 3, &p.fwd_visible)), DegeneracyError);
  }
}

TEST_CASE("eight-point degeneracies and output form") {
  CorrespondenceSet still;
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 30; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    still.a.push_back(p);
    still.b.push_back(p);
  }
  CHECK_THROWS_AS(eight_point(still), DegeneracyError);

  CorrespondenceSet few;
  few.a.assign(7, Eigen::Vector2d(1, 2));
  few.b = few.a;
  CHECK_THROWS_AS(eight_point(few), InsufficientDataError);

  const auto v = random_view(4, 60);
  const auto F = eight_point(v.pairs);
  CHECK(std::abs(F.norm() - 1.0) < 1e-12);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(F);
  CHECK(svd.singularValues()(2) < 1e-9);
}

TEST_CASE("eight-point recovers F for random poses") {
  int recovered = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = random_view(100 + seed, 60);
    const Eigen::Matrix3d Fa = analytic_f(v.K, v.K, v.R, v.t);
    // epipolar identity with the analytic F, scale-free
    for (std::size_t i = 0; i < v.pairs.size(); ++i) {
      const double e = v.pairs.b[i].homogeneous().dot(Fa / Fa.norm() * v.pairs.a[i].homogeneous());
      CHECK(std::abs(e) < 1e-9);
    }
    const auto F = eight_point(v.pairs);
    if (alignment(F, Fa) > 0.9999) ++recovered;
    CHECK(sampson_error(F, v.pairs).mean < 1e-10);
  }
  CHECK(recovered == 20);
}

TEST_CASE("scaling pixel coordinates scales Sampson errors by four") {
  auto v = random_view(7, 80);
  Rng rng = make_rng(8);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (auto& p : v.pairs.b) p += Eigen::Vector2d(noise(rng), noise(rng));
  CorrespondenceSet scaled = v.pairs;
  for (auto& p : scaled.a) p *= 2.0;
  for (auto& p : scaled.b) p *= 2.0;
  const auto F1 = eight_point(v.pairs);
  const auto F2 = eight_point(scaled);
  CHECK((F1 - F2).norm() > 1e-3);
  for (std::size_t i = 0; i < v.pairs.size(); ++i) {
    const double e1 = sampson_oracle(F1, v.pairs.a[i], v.pairs.b[i]);
    const double e2 = sampson_oracle(F2, scaled.a[i], scaled.b[i]);
    CHECK(std::abs(e2 - 4.0 * e1) < 1e-9);
  }
}

TEST_CASE("Sampson error") {
  Eigen::Matrix3d F;
  F << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  CorrespondenceSet c;
  c.a = {Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)};
  c.b = {Eigen::Vector2d(5, 0), Eigen::Vector2d(0, 1)};
  const auto r = sampson_error(F, c);
  CHECK(r.per_pair[0] == 0.0);
  CHECK(std::abs(r.per_pair[1] - 0.5) < 1e-12);
  CHECK(r.mean == doctest::Approx(0.25));

  SUBCASE("guarded denominators are skipped and counted") {
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
    G(0, 0) = 1.0;
    CorrespondenceSet d;
    d.a = {Eigen::Vector2d(0, 3), Eigen::Vector2d(1, 0)};
    d.b = {Eigen::Vector2d(0, 2), Eigen::Vector2d(2, 0)};
    const auto s = sampson_error(G, d);
    CHECK(s.skipped == 1);
    CHECK(s.scored == 1);
    CHECK(std::isnan(s.per_pair[0]));
    CHECK(std::abs(s.mean - 0.8) < 1e-12);
    d.a.resize(1);
    d.b.resize(1);
    CHECK_THROWS_AS(sampson_error(G, d), InsufficientDataError);
  }

  SUBCASE("nonnegative, and zero on the epipolar line") {
    const auto v = random_view(11, 40);
    Rng rng = make_rng(12);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Matrix3d R = Eigen::Matrix3d::NullaryExpr([&] { return n(rng); });
    CorrespondenceSet on;
    for (std::size_t i = 0; i < v.pairs.size(); ++i) {
      CHECK(sampson_oracle(R, v.pairs.a[i], v.pairs.b[i]) >= 0.0);
      CHECK(sampson_error(R, v.pairs).per_pair[i] >= 0.0);
      // slide b along its epipolar line l = R a
      const Eigen::Vector3d l = R * v.pairs.a[i].homogeneous();
      const double x = v.pairs.b[i].x();
      on.a.push_back(v.pairs.a[i]);
      on.b.emplace_back(x, -(l(0) * x + l(2)) / l(1));
    }
    for (double e : sampson_error(R, on).per_pair) CHECK(e < 1e-12);
  }
}

TEST_CASE("dynamic degree") {
  std::vector<TensorGrid> zero{constant_flow(4, 4, 0, 0)};
  CHECK(dynamic_degree(zero) == 0.0);
  std::vector<TensorGrid> c{constant_flow(4, 6, 3, 4), constant_flow(4, 6, -3, 4)};
  CHECK(dynamic_degree(c) == doctest::Approx(5.0).epsilon(1e-15));
  auto half = constant_flow(4, 4, 0, 0);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 4; ++x) half.set(y, x, 0, 2.0);
  }
  CHECK(dynamic_degree(std::vector<TensorGrid>{half}) == 1.0);
  CHECK_THROWS_AS(dynamic_degree(std::vector<TensorGrid>{}), InputError);
}
