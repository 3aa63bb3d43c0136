#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "trep/errors.hpp"

namespace trep {

/// World-to-camera rigid transform: x_cam = R * x_world + t.
template <typename Scalar = double>
struct CameraPose {
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  Vector3 center() const { return -rotation.transpose() * translation; }
  Vector3 to_camera(const Vector3& world) const { return rotation * world + translation; }

  /// Pose of a camera at `center` with the given world-to-camera rotation.
  static CameraPose from_center(const Matrix3& rotation, const Vector3& center) {
    return {rotation, -rotation * center};
  }
};

template <typename Scalar = double>
struct Intrinsics {
  Scalar fx = 1, fy = 1, cx = 0, cy = 0;

  Eigen::Matrix<Scalar, 3, 3> matrix() const {
    Eigen::Matrix<Scalar, 3, 3> k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
  /// Pixel to normalized image coordinates.
  Eigen::Matrix<Scalar, 2, 1> normalize(const Eigen::Matrix<Scalar, 2, 1>& pix) const {
    return {(pix.x() - cx) / fx, (pix.y() - cy) / fy};
  }
};

using Pose = CameraPose<double>;
using Camera = Intrinsics<double>;
using Point3 = Eigen::Vector3d;
using Pixel = Eigen::Vector2d;

/// Pinhole projection; throws BehindCamera when depth <= 0.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project(const CameraPose<Scalar>& pose, const Intrinsics<Scalar>& k,
                                    const Eigen::Matrix<Scalar, 3, 1>& point) {
  const Eigen::Matrix<Scalar, 3, 1> c = pose.to_camera(point);
  if (!(c.z() > Scalar(0))) throw BehindCamera("point has non-positive depth");
  return {k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy};
}

/// Relative motion a -> b: x_b = R_ab x_a + t_ab.
template <typename Scalar>
CameraPose<Scalar> relative_pose(const CameraPose<Scalar>& a, const CameraPose<Scalar>& b) {
  CameraPose<Scalar> rel;
  rel.rotation = b.rotation * a.rotation.transpose();
  rel.translation = b.translation - rel.rotation * a.translation;
  return rel;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Pixel-space fundamental matrix between two calibrated views sharing `k`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> fundamental_from_poses(const CameraPose<Scalar>& a, const CameraPose<Scalar>& b,
                                                   const Intrinsics<Scalar>& k) {
  const CameraPose<Scalar> rel = relative_pose(a, b);
  if (rel.translation.norm() < Scalar(1e-9)) throw DegenerateBaseline("camera centers coincide");
  const Eigen::Matrix<Scalar, 3, 3> essential = skew(rel.translation) * rel.rotation;
  const Eigen::Matrix<Scalar, 3, 3> kinv = k.matrix().inverse();
  return kinv.transpose() * essential * kinv;
}

/// First-order geometric (Sampson) distance of a pixel pair to the epipolar
/// constraint, in pixels.
template <typename Scalar>
Scalar sampson_distance(const Eigen::Matrix<Scalar, 3, 3>& f, const Eigen::Matrix<Scalar, 2, 1>& pix_a,
                        const Eigen::Matrix<Scalar, 2, 1>& pix_b) {
  const Eigen::Matrix<Scalar, 3, 1> xa(pix_a.x(), pix_a.y(), Scalar(1));
  const Eigen::Matrix<Scalar, 3, 1> xb(pix_b.x(), pix_b.y(), Scalar(1));
  const Eigen::Matrix<Scalar, 3, 1> fxa = f * xa;
  const Eigen::Matrix<Scalar, 3, 1> ftxb = f.transpose() * xb;
  const Scalar num = xb.dot(fxa);
  const Scalar den = fxa.x() * fxa.x() + fxa.y() * fxa.y() + ftxb.x() * ftxb.x() + ftxb.y() * ftxb.y();
  if (den <= Scalar(0)) return std::abs(num) > Scalar(0) ? std::numeric_limits<Scalar>::infinity() : Scalar(0);
  return std::abs(num) / std::sqrt(den);
}

/// Known-pose geometric verification: Sampson distance below `tau_px`.
template <typename Scalar>
bool epipolar_check(const CameraPose<Scalar>& a, const CameraPose<Scalar>& b,
                    const Eigen::Matrix<Scalar, 2, 1>& pix_a, const Eigen::Matrix<Scalar, 2, 1>& pix_b,
                    const Intrinsics<Scalar>& k, Scalar tau_px) {
  return sampson_distance(fundamental_from_poses(a, b, k), pix_a, pix_b) < tau_px;
}

template <typename Scalar = double>
struct Triangulation {
  Eigen::Matrix<Scalar, 3, 1> point;
  Scalar max_reprojection_error = 0;
};

/// Linear (DLT) two-view triangulation. Throws DegenerateBaseline or
/// CheiralityViolation; the reported error is the worse of the two views.
template <typename Scalar>
Triangulation<Scalar> triangulate(const CameraPose<Scalar>& a, const CameraPose<Scalar>& b,
                                  const Eigen::Matrix<Scalar, 2, 1>& pix_a, const Eigen::Matrix<Scalar, 2, 1>& pix_b,
                                  const Intrinsics<Scalar>& k) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  if ((a.center() - b.center()).norm() < Scalar(1e-9)) throw DegenerateBaseline("camera centers coincide");
  const Eigen::Matrix<Scalar, 2, 1> na = k.normalize(pix_a), nb = k.normalize(pix_b);
  Eigen::Matrix<Scalar, 3, 4> pa, pb;
  pa << a.rotation, a.translation;
  pb << b.rotation, b.translation;
  Eigen::Matrix<Scalar, 4, 4> m;
  m.row(0) = na.x() * pa.row(2) - pa.row(0);
  m.row(1) = na.y() * pa.row(2) - pa.row(1);
  m.row(2) = nb.x() * pb.row(2) - pb.row(0);
  m.row(3) = nb.y() * pb.row(2) - pb.row(1);
  // Row scaling leaves the null vector unchanged and evens out conditioning.
  for (int r = 0; r < 4; ++r) {
    const Scalar n = m.row(r).norm();
    if (n > Scalar(0)) m.row(r) /= n;
  }
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 4, 4>> svd(m, Eigen::ComputeFullV);
  const Eigen::Matrix<Scalar, 4, 1> h = svd.matrixV().col(3);
  if (std::abs(h(3)) < std::numeric_limits<Scalar>::epsilon() * h.norm())
    throw CheiralityViolation("triangulated point at infinity");
  const Vec3 x = h.template head<3>() / h(3);
  if (!(a.to_camera(x).z() > Scalar(0)) || !(b.to_camera(x).z() > Scalar(0)))
    throw CheiralityViolation("triangulated point behind a camera");
  const Scalar ea = (project(a, k, x) - pix_a).norm();
  const Scalar eb = (project(b, k, x) - pix_b).norm();
  return {x, std::max(ea, eb)};
}

/// Linear triangulation from two or more views sharing intrinsics `k`.
/// Throws TooFewObservations, DegenerateBaseline or CheiralityViolation.
Triangulation<double> triangulate_multiview(std::span<const CameraPose<double>> poses,
                                            std::span<const Eigen::Vector2d> pixels, const Intrinsics<double>& k);

struct PoseError {
  double position_m = 0.0;
  double angle_deg = 0.0;
};

template <typename Scalar>
PoseError pose_error(const CameraPose<Scalar>& estimated, const CameraPose<Scalar>& truth) {
  const double dp = static_cast<double>((estimated.center() - truth.center()).norm());
  const Scalar c = ((estimated.rotation * truth.rotation.transpose()).trace() - Scalar(1)) / Scalar(2);
  const double ang = std::acos(std::clamp(static_cast<double>(c), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  return {dp, ang};
}

/// True when R^T R = I within `tol` and det R > 0.
bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-9);

/// Closest rotation in Frobenius norm.
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

struct Correspondence2D3D {
  Pixel pixel;
  Point3 point;
};

struct PnpResult {
  Pose pose;
  std::vector<std::size_t> inliers;  // ascending
};

struct RansacParams {
  int iterations = 1000;
  double tau_px = 2.0;
  std::uint64_t seed = 0;
};

inline constexpr int kPnpMinimalSample = 6;

/// Linear pose from >= 6 correspondences; rotation projected onto SO(3)
/// and translation re-solved for that rotation.
Pose pnp_dlt(std::span<const Correspondence2D3D> corr, const Camera& k);

/// Reprojection residual in pixels; +inf when the point is behind the camera.
double reprojection_residual(const Pose& pose, const Camera& k, const Correspondence2D3D& c);

/// RANSAC over 6-point DLT samples, deterministic for a fixed seed.
/// Throws TooFewCorrespondences (< 6) or NoConsensus (< 6 inliers).
PnpResult pnp_ransac(std::span<const Correspondence2D3D> corr, const Camera& k, const RansacParams& params);

}  // namespace trep
