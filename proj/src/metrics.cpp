#include "flowba/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace flowba {

namespace {

// Sim(3) alignment for (near-)collinear point sets, where the generic Umeyama
// rotation is underdetermined. Matches the principal line directions with the
// minimal rotation and fits the scale along the line by least squares. ATE,
// RTE and RRE are invariant to the free rotation about the matched axis, so
// this returns the limiting values of the generic alignment.
SimTransform align_collinear(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  const size_t n = src.size();
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= static_cast<double>(n);
  mu_dst /= static_cast<double>(n);

  Mat3 cov_src = Mat3::Zero(), cov_dst = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    const Vec3 a = src[i] - mu_src;
    const Vec3 b = dst[i] - mu_dst;
    cov_src += a * a.transpose();
    cov_dst += b * b.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es_src(cov_src), es_dst(cov_dst);
  Vec3 u_src = es_src.eigenvectors().col(2);
  Vec3 u_dst = es_dst.eigenvectors().col(2);

  // Fix the eigenvector sign ambiguity: orient the target axis along the net
  // displacement, then pick the source sign by correlation of line coordinates.
  const Vec3 net = dst.back() - dst.front();
  if (u_dst.dot(net) < 0.0) u_dst = -u_dst;
  double corr = 0.0, var_line = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double alpha = (src[i] - mu_src).dot(u_src);
    const double beta = (dst[i] - mu_dst).dot(u_dst);
    corr += alpha * beta;
    var_line += alpha * alpha;
  }
  if (corr < 0.0) {
    u_src = -u_src;
    corr = -corr;
  }
  if (var_line <= 0.0 || corr <= 0.0)
    throw DegenerateConfiguration("trajectory alignment: uncorrelated collinear centers");

  SimTransform out;
  out.scale = corr / var_line;
  out.rotation = Eigen::Quaterniond::FromTwoVectors(u_src, u_dst);
  out.translation = mu_dst - out.scale * (out.rotation * mu_src);
  return out;
}

}  // namespace

TrajectoryMetrics ate_rte_rre(const std::vector<RigidTransform>& estimate_cam_to_world,
                              const std::vector<RigidTransform>& gt_cam_to_world) {
  const size_t n = gt_cam_to_world.size();
  if (estimate_cam_to_world.size() != n)
    throw ShapeMismatch("ate_rte_rre: trajectory length mismatch");
  if (n < 3) throw DegenerateTrajectory("ate_rte_rre: need at least 3 poses");

  std::vector<Vec3> gt_centers(n), est_centers(n);
  for (size_t k = 0; k < n; ++k) {
    gt_centers[k] = gt_cam_to_world[k].translation;
    est_centers[k] = estimate_cam_to_world[k].translation;
  }

  double path = 0.0;
  for (size_t k = 1; k < n; ++k) path += (gt_centers[k] - gt_centers[k - 1]).norm();
  if (path <= 0.0) throw DegenerateTrajectory("ate_rte_rre: ground truth has zero path length");
  const double gt_scale = 1.0 / path;
  for (auto& c : gt_centers) c *= gt_scale;

  SimTransform align;
  try {
    align = umeyama_sim3(est_centers, gt_centers);
  } catch (const DegenerateConfiguration&) {
    align = align_collinear(est_centers, gt_centers);
  }

  TrajectoryMetrics m;
  double se = 0.0;
  for (size_t k = 0; k < n; ++k) se += (align.apply(est_centers[k]) - gt_centers[k]).squaredNorm();
  m.ate = std::sqrt(se / static_cast<double>(n));

  // Relative errors between consecutive frames. The aligned estimate pose is
  // (align.R * R_k, align(c_k)); relative motion of camera k -> k+1 expressed
  // in camera k's body frame, compared against the (normalized) ground truth.
  double rte_se = 0.0, rre_sum = 0.0;
  for (size_t k = 0; k + 1 < n; ++k) {
    const Mat3 r_gt_k = gt_cam_to_world[k].rmat();
    const Mat3 r_gt_k1 = gt_cam_to_world[k + 1].rmat();
    const Vec3 dt_gt = r_gt_k.transpose() * (gt_centers[k + 1] - gt_centers[k]);
    const Mat3 dr_gt = r_gt_k.transpose() * r_gt_k1;

    const Mat3 ar = align.rotation.toRotationMatrix();
    const Mat3 r_est_k = ar * estimate_cam_to_world[k].rmat();
    const Mat3 r_est_k1 = ar * estimate_cam_to_world[k + 1].rmat();
    const Vec3 dt_est =
        r_est_k.transpose() * (align.apply(est_centers[k + 1]) - align.apply(est_centers[k]));
    const Mat3 dr_est = r_est_k.transpose() * r_est_k1;

    rte_se += (dt_est - dt_gt).squaredNorm();
    const Mat3 err = dr_gt.transpose() * dr_est;
    const double c = std::clamp(0.5 * (err.trace() - 1.0), -1.0, 1.0);
    rre_sum += std::acos(c);
  }
  m.rte = std::sqrt(rte_se / static_cast<double>(n - 1));
  m.rre_deg = rre_sum / static_cast<double>(n - 1) * 180.0 / M_PI;
  return m;
}

DepthMetrics depth_metrics(const std::vector<DisparityGrid>& estimate_disparity,
                           const std::vector<GridD>& gt_depth, bool fit_scale_shift,
                           double max_depth) {
  if (estimate_disparity.size() != gt_depth.size())
    throw ShapeMismatch("depth_metrics: frame count mismatch");
  for (size_t f = 0; f < gt_depth.size(); ++f) {
    if (!estimate_disparity[f].values.same_shape(gt_depth[f]) ||
        !estimate_disparity[f].values.same_shape(estimate_disparity[f].valid))
      throw ShapeMismatch("depth_metrics: raster shape mismatch at frame " + std::to_string(f));
  }

  auto usable = [&](size_t f, size_t i) {
    const double gt = gt_depth[f][i];
    return estimate_disparity[f].valid[i] && std::isfinite(gt) && gt > 0.0 && gt <= max_depth;
  };

  // Global affine fit in disparity space: minimize sum (s*d_est + h - 1/gt)^2.
  double s = 1.0, h = 0.0;
  if (fit_scale_shift) {
    double sxx = 0, sx = 0, sxy = 0, sy = 0;
    long n = 0;
    for (size_t f = 0; f < gt_depth.size(); ++f) {
      for (int i = 0; i < gt_depth[f].size(); ++i) {
        if (!usable(f, i)) continue;
        const double x = estimate_disparity[f].values[i];
        const double y = 1.0 / gt_depth[f][i];
        sxx += x * x;
        sx += x;
        sxy += x * y;
        sy += y;
        ++n;
      }
    }
    if (n == 0) throw EmptyOverlap("depth_metrics: no overlapping valid pixels");
    const double det = sxx * n - sx * sx;
    if (std::abs(det) > 1e-30 * std::max(1.0, sxx * n)) {
      s = (sxy * n - sx * sy) / det;
      h = (sxx * sy - sx * sxy) / det;
    } else {  // constant estimate: scale is unidentifiable, fit shift alone
      s = 1.0;
      h = (sy - sx) / n;
    }
  }

  DepthMetrics m;
  double abs_rel_sum = 0.0, log_se = 0.0;
  long n_delta = 0;
  for (size_t f = 0; f < gt_depth.size(); ++f) {
    for (int i = 0; i < gt_depth[f].size(); ++i) {
      if (!usable(f, i)) continue;
      const double gt = gt_depth[f][i];
      const double disp = std::max(s * estimate_disparity[f].values[i] + h, 1e-8);
      const double d = 1.0 / disp;
      abs_rel_sum += std::abs(d - gt) / gt;
      log_se += std::pow(std::log(d) - std::log(gt), 2);
      if (std::max(d / gt, gt / d) < 1.25) ++n_delta;
      ++m.n_pixels;
    }
  }
  if (m.n_pixels == 0) throw EmptyOverlap("depth_metrics: no overlapping valid pixels");
  m.abs_rel = abs_rel_sum / static_cast<double>(m.n_pixels);
  m.log_rmse = std::sqrt(log_se / static_cast<double>(m.n_pixels));
  m.delta_125 = 100.0 * static_cast<double>(n_delta) / static_cast<double>(m.n_pixels);
  return m;
}

}  // namespace flowba
