#include "geoflow/camera.hpp"

#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"

namespace geoflow {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw DomainError("intrinsics: focal lengths must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw DomainError("intrinsics: principal point must be finite");
  }
}

Intrinsics Intrinsics::from_span(std::span<const double> v) {
  if (v.size() != 4) throw ShapeError("intrinsics: expected 4 values (fx, fy, cx, cy)");
  Intrinsics K{v[0], v[1], v[2], v[3]};
  K.validate();
  return K;
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

PoseSE3 PoseSE3::translation(double x, double y, double z) {
  PoseSE3 p;
  p.t = Eigen::Vector3d(x, y, z);
  return p;
}

PoseSE3 PoseSE3::from_rotation_vector(const Eigen::Vector3d& rotvec,
                                      const Eigen::Vector3d& t) {
  PoseSE3 p;
  const double angle = rotvec.norm();
  if (angle > 0.0) p.R = Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
  p.t = t;
  return p;
}

PoseSE3 PoseSE3::from_row_major(std::span<const double> v) {
  if (v.size() != 12) throw ShapeError("extrinsics: expected 3x4 row-major values");
  PoseSE3 p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.R(r, c) = v[4 * r + c];
    p.t(r) = v[4 * r + 3];
  }
  p.validate();
  return p;
}

std::array<double, 12> PoseSE3::to_row_major() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[4 * r + c] = R(r, c);
    out[4 * r + 3] = t(r);
  }
  return out;
}

PoseSE3 PoseSE3::compose(const PoseSE3& inner) const {
  PoseSE3 p;
  p.R = R * inner.R;
  p.t = R * inner.t + t;
  return p;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 p;
  p.R = R.transpose();
  p.t = -(p.R * t);
  return p;
}

void PoseSE3::validate() const {
  if (!R.allFinite() || !t.allFinite()) throw DomainError("pose: non-finite entries");
  const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw DomainError("pose: rotation is not orthonormal");
  if (std::abs(R.determinant() - 1.0) > 1e-9) throw DomainError("pose: det(R) != +1");
}

Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double depth,
                          const Intrinsics& K) {
  if (!std::isfinite(depth) || depth <= 0.0) {
    throw DomainError("unproject: depth must be positive and finite");
  }
  return {depth * (pixel.x() - K.cx) / K.fx, depth * (pixel.y() - K.cy) / K.fy, depth};
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const Intrinsics& K) {
  if (!(point.z() > kMinDepth)) throw DomainError("project: point is behind the camera");
  return {K.fx * point.x() / point.z() + K.cx, K.fy * point.y() / point.z() + K.cy};
}

RelativeTransform relative_transform(const PoseSE3& from, const PoseSE3& to) {
  return to.compose(from.inverse());
}

RigidFlow rigid_flow(const TensorGrid& depth, const Intrinsics& K_src,
                     const Intrinsics& K_dst, const RelativeTransform& T) {
  check_image_shape(depth, 1, "depth");
  K_src.validate();
  K_dst.validate();
  const std::size_t h = depth.height();
  const std::size_t w = depth.width();
  RigidFlow r{TensorGrid(DType::kF64, {h, w, 2}), ValidityMask(h, w)};
  auto flow = r.flow.f64();
  parallel_for(h, [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const double d = depth.get(p);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Eigen::Vector2d u(static_cast<double>(x), static_cast<double>(y));
      const Eigen::Vector3d q = T.apply(unproject(u, d, K_src));
      if (q.z() <= kMinDepth) continue;
      const Eigen::Vector2d target = project(q, K_dst);
      flow[2 * p] = target.x() - u.x();
      flow[2 * p + 1] = target.y() - u.y();
      r.valid.set(p, true);
    }
  });
  return r;
}

DepthReprojection reproject_depth(const TensorGrid& depth, const Intrinsics& K_src,
                                  const Intrinsics& K_dst, const RelativeTransform& T) {
  check_image_shape(depth, 1, "depth");
  K_src.validate();
  K_dst.validate();
  const std::size_t h = depth.height();
  const std::size_t w = depth.width();
  DepthReprojection r{TensorGrid(DType::kF64, {h, w}), ValidityMask(h, w)};
  auto out = r.depth.f64();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double d = depth.get(y * w + x);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Eigen::Vector3d q =
          T.apply(unproject({static_cast<double>(x), static_cast<double>(y)}, d, K_src));
      if (q.z() <= kMinDepth) continue;
      const Eigen::Vector2d target = project(q, K_dst);
      const double tx = std::floor(target.x() + 0.5);
      const double ty = std::floor(target.y() + 0.5);
      if (tx < 0.0 || ty < 0.0 || tx >= static_cast<double>(w) ||
          ty >= static_cast<double>(h)) {
        continue;
      }
      const std::size_t cell = static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx);
      if (!r.coverage.get(cell) || q.z() < out[cell]) {
        out[cell] = q.z();
        r.coverage.set(cell, true);
      }
    }
  }
  return r;
}

}  // namespace geoflow
