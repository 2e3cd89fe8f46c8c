#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "geoflow/tensor.hpp"

namespace geoflow::metrics {

enum class CorrespondenceSource { kFlowSampled, kSyntheticGT };

// Pixel coordinates follow the projection convention: pixel (x, y) has its
// centre at integer (x, y).
struct CorrespondenceSet {
  std::vector<Eigen::Vector2d> a;
  std::vector<Eigen::Vector2d> b;
  CorrespondenceSource source = CorrespondenceSource::kFlowSampled;

  std::size_t size() const { return a.size(); }
};

// Grid points u = (step/2 + i step, step/2 + j step) paired with u + F(u).
// Pairs are dropped when the nearest pixel of u' falls outside the image or
// when the mask rejects u or the nearest pixel of u'. Throws
// InsufficientDataError below 8 survivors.
CorrespondenceSet sample_correspondences(const TensorGrid& flow, std::size_t grid_step,
                                         const ValidityMask* static_mask = nullptr);

// Normalized eight-point estimate, rank 2, unit Frobenius norm, sign fixed so
// the largest-magnitude entry is positive. Throws DegeneracyError when the
// design matrix has rank < 8 (e.g. no parallax, or all points on one plane).
Eigen::Matrix3d eight_point(const CorrespondenceSet& pairs);

struct SampsonResult {
  std::vector<double> per_pair;  // NaN for skipped pairs
  double mean = 0.0;             // over scored pairs
  std::size_t scored = 0;
  std::size_t skipped = 0;       // denominator below 1e-18
};

// Squared first-order geometric distance to the epipolar constraint, in
// pixels^2. Throws InsufficientDataError when no pair can be scored.
SampsonResult sampson_error(const Eigen::Matrix3d& F, const CorrespondenceSet& pairs);

// Mean flow magnitude in pixels over every pixel of every field.
double dynamic_degree(std::span<const TensorGrid> flows);

}  // namespace geoflow::metrics
