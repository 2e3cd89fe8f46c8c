#pragma once

#include <array>
#include <span>

#include <Eigen/Core>

#include "geoflow/tensor.hpp"

namespace geoflow {

// Points transformed to z <= kMinDepth are treated as invalid (behind or on
// the camera plane).
inline constexpr double kMinDepth = 1e-6;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
  std::array<double, 4> to_array() const { return {fx, fy, cx, cy}; }
  static Intrinsics from_span(std::span<const double> v);
  Eigen::Matrix3d matrix() const;
};

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct PoseSE3 {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 translation(double x, double y, double z);
  // Rotation vector (axis * angle, radians) plus translation.
  static PoseSE3 from_rotation_vector(const Eigen::Vector3d& rotvec,
                                      const Eigen::Vector3d& t);
  // 3x4 row-major [R | t].
  static PoseSE3 from_row_major(std::span<const double> values);
  std::array<double, 12> to_row_major() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return R * x + t; }
  // (*this) after `inner`: x -> R (R_in x + t_in) + t.
  PoseSE3 compose(const PoseSE3& inner) const;
  PoseSE3 inverse() const;
  // Throws DomainError unless R is orthonormal with det +1 (within 1e-9).
  void validate() const;
};

// Maps camera-a coordinates to camera-b coordinates.
using RelativeTransform = PoseSE3;

Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double depth,
                          const Intrinsics& K);
Eigen::Vector2d project(const Eigen::Vector3d& point, const Intrinsics& K);

// T = E_b * E_a^{-1}.
RelativeTransform relative_transform(const PoseSE3& from, const PoseSE3& to);

struct RigidFlow {
  TensorGrid flow;  // f64 H x W x 2, zero where invalid
  ValidityMask valid;
};

// Camera-induced displacement of every source pixel. Pixels with depth <= 0
// or a transformed depth <= kMinDepth are invalid.
RigidFlow rigid_flow(const TensorGrid& depth, const Intrinsics& K_src,
                     const Intrinsics& K_dst, const RelativeTransform& T);

struct DepthReprojection {
  TensorGrid depth;        // f64 H x W on the target grid, 0 where uncovered
  ValidityMask coverage;   // false on holes (no source pixel landed there)
};

// Forward splat of source depth into the target view. Each valid source pixel
// writes its transformed z into the nearest target cell; collisions keep the
// nearest surface, with ties resolved by row-major traversal order.
DepthReprojection reproject_depth(const TensorGrid& depth, const Intrinsics& K_src,
                                  const Intrinsics& K_dst, const RelativeTransform& T);

}  // namespace geoflow
