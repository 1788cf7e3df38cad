#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "flowba/errors.hpp"
#include "flowba/raster.hpp"

namespace flowba {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat26 = Eigen::Matrix<double, 2, 6>;

// Twist layout: first three components rotational, last three translational.
constexpr double kZMin = 1e-6;        // points with camera depth <= this are masked
constexpr double kAnglePiMargin = 1e-6;

// World-to-camera rigid transform: X_cam = R * X_world + t.
struct RigidTransform {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Mat3 rmat() const { return rotation.toRotationMatrix(); }

  static RigidTransform identity() { return RigidTransform{}; }
};

// a then b is compose(a, b)(x) = a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& g);
// Transform taking camera-i coordinates to camera-j coordinates: G_j * G_i^-1.
RigidTransform relative_pose(const RigidTransform& g_i, const RigidTransform& g_j);

// Similarity transform x -> scale * (R x) + t. Used for trajectory alignment.
struct SimTransform {
  double scale = 1.0;
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

Mat3 skew(const Vec3& v);

// Exponential map se(3) -> SE(3) with the standard left Jacobian acting on the
// translational part. Falls back to the second-order series below 1e-8 rotation.
RigidTransform se3_exp(const Vec6& twist);

// Inverse of se3_exp. Throws AngleNearPi when the rotation angle is within
// kAnglePiMargin of pi, where the axis is numerically unstable.
Vec6 se3_log(const RigidTransform& g);

// || log(a^-1 * b) ||_2, the geodesic distance used for pose accuracy checks.
double pose_geodesic_error(const RigidTransform& a, const RigidTransform& b);

// Pinhole intrinsics. The solver optimizes a single shared focal (fx == fy);
// fx/fy are kept separate here only so calibration files round-trip unchanged.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Intrinsics scaled(double s) const {
    Intrinsics k = *this;
    k.fx *= s;
    k.fy *= s;
    k.cx *= s;
    k.cy *= s;
    k.width = static_cast<int>(std::lround(width * s));
    k.height = static_cast<int>(std::lround(height * s));
    return k;
  }
};

// pi(X): perspective projection. Valid only when X.z > kZMin.
inline bool project(const Vec3& x, const Intrinsics& k, Vec2* uv) {
  if (!(x.z() > kZMin)) return false;
  const double inv_z = 1.0 / x.z();
  (*uv)[0] = k.fx * x.x() * inv_z + k.cx;
  (*uv)[1] = k.fy * x.y() * inv_z + k.cy;
  return true;
}

// pi^-1(p, d): backprojection of pixel p at disparity d (inverse depth, d > 0).
inline Vec3 backproject(const Vec2& uv, double disparity, const Intrinsics& k) {
  const double z = 1.0 / disparity;
  return Vec3((uv[0] - k.cx) / k.fx * z, (uv[1] - k.cy) / k.fy * z, z);
}

// Correspondence induced at pixel p of frame i by relative motion g_ij and
// disparity d: pi(g_ij * pi^-1(p, d)). Returns target *coordinates*.
inline bool induced_point(const Vec2& p, double disparity, const RigidTransform& g_ij,
                          const Intrinsics& k, Vec2* target) {
  if (!(disparity > 0.0) || !std::isfinite(disparity)) return false;
  const Vec3 xj = g_ij.apply(backproject(p, disparity, k));
  return project(xj, k, target);
}

// Dense induced correspondence field over a disparity grid. valid_out marks
// pixels with valid disparity whose transformed point lies in front of the
// camera (z > kZMin); the field holds target coordinates.
void induced_flow(const RigidTransform& g_i, const RigidTransform& g_j,
                  const DisparityGrid& disp, const Intrinsics& k, FlowGrid* flow_out,
                  MaskU8* valid_out);

// One pixel's induced correspondence plus Jacobians. Pose Jacobians are with
// respect to left-multiplicative twists on G_i and G_j (G <- exp(dxi) * G);
// d_focal is with respect to the raw shared focal (fx == fy == f).
struct PixelFlowJacobian {
  bool valid = false;
  Vec2 target = Vec2::Zero();
  Mat26 d_pose_i = Mat26::Zero();
  Mat26 d_pose_j = Mat26::Zero();
  Vec2 d_disp = Vec2::Zero();
  Vec2 d_focal = Vec2::Zero();
};

// Precomputed per-edge quantities shared by every pixel of that edge.
struct EdgeGeometry {
  RigidTransform g_ij;
  Mat3 r_ij;
  EdgeGeometry(const RigidTransform& g_i, const RigidTransform& g_j)
      : g_ij(relative_pose(g_i, g_j)), r_ij(g_ij.rmat()) {}
};

PixelFlowJacobian induced_flow_jacobian(const Vec2& p, double disparity,
                                        const EdgeGeometry& edge, const Intrinsics& k);

// Umeyama similarity alignment: finds (s, R, t) minimizing
// sum_k || dst_k - (s R src_k + t) ||^2. Requires >= 3 points and a source
// covariance of rank >= 2; throws DegenerateConfiguration otherwise.
SimTransform umeyama_sim3(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

}  // namespace flowba
