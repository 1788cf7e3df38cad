#include "flowba/geometry.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace flowba {

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform inverse(const RigidTransform& g) {
  RigidTransform out;
  out.rotation = g.rotation.conjugate();
  out.translation = -(out.rotation * g.translation);
  return out;
}

RigidTransform relative_pose(const RigidTransform& g_i, const RigidTransform& g_j) {
  return compose(g_j, inverse(g_i));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

RigidTransform se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 rho = twist.tail<3>();
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);

  const Mat3 w = skew(omega);
  Mat3 r, v;
  if (theta < 1e-8) {
    // Second-order series; adequate to double precision at this angle.
    r = Mat3::Identity() + w + 0.5 * (w * w);
    v = Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * (w * w);
  } else {
    const double s = std::sin(theta), c = std::cos(theta);
    r = Mat3::Identity() + (s / theta) * w + ((1.0 - c) / theta2) * (w * w);
    v = Mat3::Identity() + ((1.0 - c) / theta2) * w + ((theta - s) / (theta2 * theta)) * (w * w);
  }
  RigidTransform out;
  out.rotation = Eigen::Quaterniond(r).normalized();
  out.translation = v * rho;
  return out;
}

Vec6 se3_log(const RigidTransform& g) {
  Eigen::Quaterniond q = g.rotation.normalized();
  if (q.w() < 0) q.coeffs() *= -1.0;  // angle in [0, pi]
  const double vn = q.vec().norm();
  const double theta = 2.0 * std::atan2(vn, q.w());
  if (theta >= M_PI - kAnglePiMargin)
    throw AngleNearPi("se3_log: rotation angle within margin of pi");

  Vec3 omega;
  if (theta < 1e-8) {
    // q.vec() = axis * sin(theta/2) ~ axis * theta/2.
    omega = 2.0 * q.vec();
  } else {
    omega = q.vec() * (theta / vn);
  }

  const Mat3 w = skew(omega);
  Mat3 v_inv;
  if (theta < 1e-8) {
    v_inv = Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * (w * w);
  } else {
    const double half = 0.5 * theta;
    const double cot_half = std::cos(half) / std::sin(half);
    const double coef = (1.0 - 0.5 * theta * cot_half) / (theta * theta);
    v_inv = Mat3::Identity() - 0.5 * w + coef * (w * w);
  }
  Vec6 out;
  out.head<3>() = omega;
  out.tail<3>() = v_inv * g.translation;
  return out;
}

double pose_geodesic_error(const RigidTransform& a, const RigidTransform& b) {
  return se3_log(compose(inverse(a), b)).norm();
}

void induced_flow(const RigidTransform& g_i, const RigidTransform& g_j,
                  const DisparityGrid& disp, const Intrinsics& k, FlowGrid* flow_out,
                  MaskU8* valid_out) {
  disp.check_consistent();
  if (disp.width() != k.width || disp.height() != k.height)
    throw ShapeMismatch("induced_flow: disparity grid does not match intrinsics size");
  const RigidTransform g_ij = relative_pose(g_i, g_j);
  *flow_out = FlowGrid(disp.width(), disp.height(), Vec2::Zero());
  *valid_out = MaskU8(disp.width(), disp.height(), 0);
  for (int y = 0; y < disp.height(); ++y) {
    for (int x = 0; x < disp.width(); ++x) {
      if (!disp.valid.at(x, y)) continue;
      Vec2 target;
      if (induced_point(Vec2(x, y), disp.values.at(x, y), g_ij, k, &target)) {
        flow_out->at(x, y) = target;
        valid_out->at(x, y) = 1;
      }
    }
  }
}

PixelFlowJacobian induced_flow_jacobian(const Vec2& p, double disparity,
                                        const EdgeGeometry& edge, const Intrinsics& k) {
  PixelFlowJacobian out;
  if (!(disparity > 0.0) || !std::isfinite(disparity)) return out;

  const Vec3 xi = backproject(p, disparity, k);
  const Vec3 xj = edge.g_ij.apply(xi);
  if (!(xj.z() > kZMin)) return out;

  const double inv_z = 1.0 / xj.z();
  out.target[0] = k.fx * xj.x() * inv_z + k.cx;
  out.target[1] = k.fy * xj.y() * inv_z + k.cy;
  out.valid = true;

  // d(pi)/dX at xj, shared focal f = fx = fy.
  const double f = k.fx;
  Eigen::Matrix<double, 2, 3> dpi;
  dpi << f * inv_z, 0, -f * xj.x() * inv_z * inv_z, 0, f * inv_z, -f * xj.y() * inv_z * inv_z;

  // Left-multiplicative perturbations: G_j <- exp(dxi_j) G_j gives
  // dXj = domega x Xj + drho; G_i <- exp(dxi_i) G_i gives G_ij <- G_ij exp(-dxi_i),
  // so dXj = -R_ij (domega x Xi + drho).
  out.d_pose_j.block<2, 3>(0, 0) = dpi * (-skew(xj));
  out.d_pose_j.block<2, 3>(0, 3) = dpi;
  out.d_pose_i.block<2, 3>(0, 0) = dpi * (edge.r_ij * skew(xi));
  out.d_pose_i.block<2, 3>(0, 3) = -(dpi * edge.r_ij);

  // Xi = (1/d) K^-1 p~, so dXi/dd = -Xi / d.
  out.d_disp = dpi * (edge.r_ij * (-xi / disparity));

  // Focal enters both the backprojection (dXi/df = (-xi_x/f, -xi_y/f, 0)) and
  // the projection (explicit (x/z, y/z) term).
  const Vec3 dxi_df(-xi.x() / f, -xi.y() / f, 0.0);
  out.d_focal = dpi * (edge.r_ij * dxi_df) + Vec2(xj.x() * inv_z, xj.y() * inv_z);
  return out;
}

SimTransform umeyama_sim3(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size())
    throw DegenerateConfiguration("umeyama_sim3: point count mismatch");
  const size_t n = src.size();
  if (n < 3) throw DegenerateConfiguration("umeyama_sim3: need at least 3 points");

  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= static_cast<double>(n);
  mu_dst /= static_cast<double>(n);

  Mat3 sigma = Mat3::Zero();
  Mat3 cov_src = Mat3::Zero();
  double var_src = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - mu_src;
    const Vec3 b = dst[i] - mu_dst;
    sigma += b * a.transpose();
    cov_src += a * a.transpose();
    var_src += a.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  cov_src /= static_cast<double>(n);
  var_src /= static_cast<double>(n);

  // Rank >= 2 of the source point set is needed for a unique rotation (up to
  // the det correction); collinear sources leave a free rotation about the line.
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov_src);
  if (es.eigenvalues()(1) <= 1e-9 * std::max(es.eigenvalues()(2), 1e-300))
    throw DegenerateConfiguration("umeyama_sim3: source covariance rank < 2");

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();

  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1.0;

  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  if (var_src <= 0.0) throw DegenerateConfiguration("umeyama_sim3: zero source variance");
  const double scale = (d.asDiagonal() * s).trace() / var_src;

  SimTransform out;
  out.scale = scale;
  out.rotation = Eigen::Quaterniond(r).normalized();
  out.translation = mu_dst - scale * (r * mu_src);
  return out;
}

}  // namespace flowba
