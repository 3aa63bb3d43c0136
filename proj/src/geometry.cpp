#include "trep/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <limits>

#include "trep/random.hpp"

namespace trep {

bool is_rotation(const Eigen::Matrix3d& r, double tol) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol && r.determinant() > 0.0;
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double reprojection_residual(const Pose& pose, const Camera& k, const Correspondence2D3D& c) {
  const Eigen::Vector3d x = pose.to_camera(c.point);
  if (!(x.z() > 0.0)) return std::numeric_limits<double>::infinity();
  const Pixel p(k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy);
  return (p - c.pixel).norm();
}

Pose pnp_dlt(std::span<const Correspondence2D3D> corr, const Camera& k) {
  const auto n = static_cast<Eigen::Index>(corr.size());
  if (n < kPnpMinimalSample) throw TooFewCorrespondences("DLT needs at least 6 correspondences");

  // Condition the 3D points: centroid at the origin, mean distance sqrt(3).
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& c : corr) centroid += c.point;
  centroid /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (const auto& c : corr) mean_dist += (c.point - centroid).norm();
  mean_dist /= static_cast<double>(n);
  const double scale = mean_dist > 0.0 ? std::sqrt(3.0) / mean_dist : 1.0;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = corr[static_cast<std::size_t>(i)];
    const Eigen::Vector2d uv = k.normalize(c.pixel);
    const Eigen::Vector4d xh((c.point - centroid).x() * scale, (c.point - centroid).y() * scale,
                             (c.point - centroid).z() * scale, 1.0);
    a.block<1, 4>(2 * i, 0) = xh.transpose();
    a.block<1, 4>(2 * i, 8) = -uv.x() * xh.transpose();
    a.block<1, 4>(2 * i + 1, 4) = xh.transpose();
    a.block<1, 4>(2 * i + 1, 8) = -uv.y() * xh.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p;
  p << h.segment<4>(0).transpose(), h.segment<4>(4).transpose(), h.segment<4>(8).transpose();

  // Undo the conditioning: P = P' * [s I, -s c; 0 1].
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() *= scale;
  t.topRightCorner<3, 1>() = -scale * centroid;
  p = p * t;

  Eigen::Matrix3d m = p.leftCols<3>();
  if (m.determinant() < 0.0) {
    p = -p;
    m = -m;
  }
  Pose pose;
  pose.rotation = nearest_rotation(m);

  // Translation re-solved in closed form for the fixed rotation:
  // u (r3.X + tz) = r1.X + tx and v (r3.X + tz) = r2.X + ty.
  Eigen::MatrixXd at(2 * n, 3);
  Eigen::VectorXd bt(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = corr[static_cast<std::size_t>(i)];
    const Eigen::Vector2d uv = k.normalize(c.pixel);
    const Eigen::Vector3d rx = pose.rotation * c.point;
    at.row(2 * i) << 1.0, 0.0, -uv.x();
    bt(2 * i) = uv.x() * rx.z() - rx.x();
    at.row(2 * i + 1) << 0.0, 1.0, -uv.y();
    bt(2 * i + 1) = uv.y() * rx.z() - rx.y();
  }
  pose.translation = at.colPivHouseholderQr().solve(bt);
  return pose;
}

namespace {

std::vector<std::size_t> inliers_of(const Pose& pose, const Camera& k, std::span<const Correspondence2D3D> corr,
                                    double tau) {
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < corr.size(); ++i)
    if (reprojection_residual(pose, k, corr[i]) < tau) in.push_back(i);
  return in;
}

std::vector<Correspondence2D3D> gather(std::span<const Correspondence2D3D> corr, const std::vector<std::size_t>& idx) {
  std::vector<Correspondence2D3D> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(corr[i]);
  return out;
}

}  // namespace

PnpResult pnp_ransac(std::span<const Correspondence2D3D> corr, const Camera& k, const RansacParams& params) {
  if (corr.size() < static_cast<std::size_t>(kPnpMinimalSample))
    throw TooFewCorrespondences("PnP needs at least 6 correspondences");

  SplitMix64 rng(params.seed);
  std::vector<std::size_t> best_inliers;
  std::array<std::size_t, kPnpMinimalSample> sample{};
  std::vector<Correspondence2D3D> minimal(kPnpMinimalSample);
  for (int it = 0; it < params.iterations; ++it) {
    for (int s = 0; s < kPnpMinimalSample; ++s) {
      std::size_t candidate;
      do {
        candidate = static_cast<std::size_t>(rng.below(corr.size()));
      } while (std::find(sample.begin(), sample.begin() + s, candidate) != sample.begin() + s);
      sample[static_cast<std::size_t>(s)] = candidate;
      minimal[static_cast<std::size_t>(s)] = corr[candidate];
    }
    Pose hypothesis;
    try {
      hypothesis = pnp_dlt(minimal, k);
    } catch (const Error&) {
      continue;
    }
    if (!hypothesis.translation.allFinite() || !hypothesis.rotation.allFinite()) continue;
    auto in = inliers_of(hypothesis, k, corr, params.tau_px);
    // Strictly greater keeps the earliest iteration on ties.
    if (in.size() > best_inliers.size()) best_inliers = std::move(in);
    if (best_inliers.size() == corr.size()) break;
  }
  if (best_inliers.size() < static_cast<std::size_t>(kPnpMinimalSample))
    throw NoConsensus("no pose hypothesis reached 6 inliers");

  // Refit on the consensus set; a second pass lets the refit pose re-gather
  // inliers the minimal-sample pose narrowly missed.
  PnpResult result;
  std::vector<std::size_t> inliers = best_inliers;
  for (int pass = 0; pass < 2; ++pass) {
    const Pose refit = pnp_dlt(gather(corr, inliers), k);
    auto refit_inliers = inliers_of(refit, k, corr, params.tau_px);
    if (refit_inliers.size() < static_cast<std::size_t>(kPnpMinimalSample)) break;
    result.pose = refit;
    result.inliers = refit_inliers;
    if (refit_inliers == inliers) break;
    inliers = std::move(refit_inliers);
  }
  if (result.inliers.size() < static_cast<std::size_t>(kPnpMinimalSample))
    throw NoConsensus("refit pose lost consensus");
  return result;
}

Triangulation<double> triangulate_multiview(std::span<const Pose> poses, std::span<const Pixel> pixels,
                                            const Camera& k) {
  if (poses.size() != pixels.size()) throw ShapeMismatch("one pixel per pose required");
  if (poses.size() < 2) throw TooFewObservations("triangulation needs two views");
  double baseline = 0.0;
  for (const auto& p : poses) baseline = std::max(baseline, (p.center() - poses.front().center()).norm());
  if (baseline < 1e-9) throw DegenerateBaseline("camera centers coincide");
  Eigen::MatrixXd m(2 * poses.size(), 4);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Eigen::Matrix<double, 3, 4> p;
    p << poses[i].rotation, poses[i].translation;
    const Pixel n = k.normalize(pixels[i]);
    const auto r = static_cast<Eigen::Index>(2 * i);
    m.row(r) = n.x() * p.row(2) - p.row(0);
    m.row(r + 1) = n.y() * p.row(2) - p.row(1);
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < std::numeric_limits<double>::epsilon() * h.norm())
    throw CheiralityViolation("triangulated point at infinity");
  const Point3 x = h.head<3>() / h(3);
  double worst = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (!(poses[i].to_camera(x).z() > 0.0)) throw CheiralityViolation("triangulated point behind a camera");
    worst = std::max(worst, (project(poses[i], k, x) - pixels[i]).norm());
  }
  return {x, worst};
}

}  // namespace trep
