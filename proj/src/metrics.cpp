#include "geoflow/metrics.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "geoflow/errors.hpp"

namespace geoflow::metrics {

namespace {

void check_flow(const TensorGrid& flow) {
  if (flow.rank() != 3 || flow.channels() != 2) throw ShapeError("flow must be H x W x 2");
  if (!flow.is_float()) throw TypeError("flow must be floating point");
}

// Similarity taking the points to centroid 0 and mean distance sqrt(2).
Eigen::Matrix3d hartley(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  if (!(d > 0.0)) throw DegeneracyError("eight_point: all points coincide");
  const double s = std::sqrt(2.0) / d;
  Eigen::Matrix3d T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

}  // namespace

CorrespondenceSet sample_correspondences(const TensorGrid& flow, std::size_t grid_step,
                                         const ValidityMask* static_mask) {
  check_flow(flow);
  if (grid_step < 1) throw ConfigError("grid_step must be >= 1");
  const std::size_t h = flow.height(), w = flow.width();
  if (static_mask && (static_mask->height() != h || static_mask->width() != w)) {
    throw ShapeError("static mask does not match the flow");
  }
  CorrespondenceSet out;
  for (std::size_t y = grid_step / 2; y < h; y += grid_step) {
    for (std::size_t x = grid_step / 2; x < w; x += grid_step) {
      const double fx = flow.at(y, x, 0), fy = flow.at(y, x, 1);
      if (!std::isfinite(fx) || !std::isfinite(fy)) continue;
      const Eigen::Vector2d u(static_cast<double>(x), static_cast<double>(y));
      const Eigen::Vector2d v = u + Eigen::Vector2d(fx, fy);
      const double rx = std::round(v.x()), ry = std::round(v.y());
      if (rx < 0.0 || ry < 0.0 || rx >= static_cast<double>(w) || ry >= static_cast<double>(h)) continue;
      if (static_mask) {
        if (!static_mask->get(y, x)) continue;
        if (!static_mask->get(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx))) continue;
      }
      out.a.push_back(u);
      out.b.push_back(v);
    }
  }
  if (out.size() < 8) {
    throw InsufficientDataError("sample_correspondences: " + std::to_string(out.size()) +
                                " pairs survive, need 8");
  }
  return out;
}

Eigen::Matrix3d eight_point(const CorrespondenceSet& pairs) {
  const std::size_t n = pairs.size();
  if (pairs.b.size() != n) throw ShapeError("eight_point: unpaired correspondences");
  if (n < 8) throw InsufficientDataError("eight_point: need at least 8 pairs");
  for (std::size_t i = 0; i < n; ++i) {
    if (!pairs.a[i].allFinite() || !pairs.b[i].allFinite()) {
      throw NumericError("eight_point: non-finite coordinate");
    }
  }
  const Eigen::Matrix3d Ta = hartley(pairs.a), Tb = hartley(pairs.b);
  Eigen::MatrixXd A(n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = Ta * pairs.a[i].homogeneous();
    const Eigen::Vector3d q = Tb * pairs.b[i].homogeneous();
    // q^T F p = 0, F row-major
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) A(static_cast<Eigen::Index>(i), 3 * r + c) = q(r) * p(c);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 8 || sv(7) <= 1e-9 * sv(0)) {
    throw DegeneracyError("eight_point: design matrix rank < 8 (no parallax or planar scene)");
  }
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Eigen::Matrix3d Fn;
  Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = fsvd.singularValues();
  s(2) = 0.0;
  Fn = fsvd.matrixU() * s.asDiagonal() * fsvd.matrixV().transpose();

  Eigen::Matrix3d F = Tb.transpose() * Fn * Ta;
  F /= F.norm();
  Eigen::Index r = 0, c = 0;
  F.cwiseAbs().maxCoeff(&r, &c);
  if (F(r, c) < 0.0) F = -F;
  return F;
}

SampsonResult sampson_error(const Eigen::Matrix3d& F, const CorrespondenceSet& pairs) {
  if (!F.allFinite()) throw NumericError("sampson_error: non-finite F");
  if (pairs.b.size() != pairs.a.size()) throw ShapeError("sampson_error: unpaired correspondences");
  SampsonResult r;
  r.per_pair.assign(pairs.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Eigen::Vector3d u = pairs.a[i].homogeneous();
    const Eigen::Vector3d v = pairs.b[i].homogeneous();
    const Eigen::Vector3d Fu = F * u;
    const Eigen::Vector3d Ftv = F.transpose() * v;
    const double den = Fu(0) * Fu(0) + Fu(1) * Fu(1) + Ftv(0) * Ftv(0) + Ftv(1) * Ftv(1);
    if (den < 1e-18) {
      ++r.skipped;
      continue;
    }
    const double num = v.dot(Fu);
    r.per_pair[i] = num * num / den;
    sum += r.per_pair[i];
    ++r.scored;
  }
  if (r.scored == 0) throw InsufficientDataError("sampson_error: no pair could be scored");
  r.mean = sum / static_cast<double>(r.scored);
  return r;
}

double dynamic_degree(std::span<const TensorGrid> flows) {
  if (flows.empty()) throw InputError("dynamic_degree: need at least one flow field");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& f : flows) {
    check_flow(f);
    for (std::size_t y = 0; y < f.height(); ++y) {
      for (std::size_t x = 0; x < f.width(); ++x) {
        sum += std::hypot(f.at(y, x, 0), f.at(y, x, 1));
        ++count;
      }
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace geoflow::metrics
