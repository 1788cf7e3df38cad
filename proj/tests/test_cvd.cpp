#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "flowba/cvd.hpp"
#include "flowba/dataset.hpp"
#include "flowba/errors.hpp"
#include "flowba/geometry.hpp"
#include "flowba/io.hpp"
#include "flowba/synth.hpp"

using namespace flowba;
namespace fs = std::filesystem;

namespace {

Intrinsics make_k(int w, int h, double f) {
  Intrinsics k;
  k.fx = k.fy = f;
  k.cx = 0.5 * (w - 1);
  k.cy = 0.5 * (h - 1);
  k.width = w;
  k.height = h;
  return k;
}

// World-to-camera pose of a camera at `center` rotated by the given axis-angle.
RigidTransform camera_at(const Vec3& center, const Vec3& axis_angle = Vec3::Zero()) {
  RigidTransform g;
  const double th = axis_angle.norm();
  if (th > 0.0) g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(th, axis_angle / th));
  g.translation = -(g.rotation * center);
  return g;
}

GridD field(int w, int h, double base, double ax, double ay, double axy = 0.0) {
  GridD g(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g.at(x, y) = base + ax * x + ay * y + axy * x * y;
  return g;
}

// Correspondence targets the cameras and disparity of frame i induce in frame j.
FlowGrid induced_targets(const CvdInputs& in, int i, int j, const GridD& disp,
                         const Vec2& offset = Vec2::Zero()) {
  const EdgeGeometry edge(in.poses[i], in.poses[j]);
  FlowGrid out(in.k.width, in.k.height, Vec2::Zero());
  for (int y = 0; y < in.k.height; ++y)
    for (int x = 0; x < in.k.width; ++x) {
      const PixelFlowJacobian jac =
          induced_flow_jacobian(Vec2(x, y), disp.at(x, y), edge, in.k);
      out.at(x, y) = jac.target + offset;
    }
  return out;
}

std::vector<MaskU8> all_valid(int n, int w, int h) { return {size_t(n), MaskU8(w, h, 1)}; }

double rel_err(double got, double want) {
  const double denom = std::max(std::abs(got), std::abs(want));
  return denom < 1e-8 ? 0.0 : std::abs(got - want) / denom;
}

// Central finite differences of total(cfg) against the analytic gradient,
// either with respect to the disparity grids or the noise scales.
double fd_max_rel(const CvdInputs& in, std::vector<GridD> eff, const std::vector<MaskU8>& valid,
                  std::vector<GridD> unc, const RunConfig& cfg, bool wrt_unc) {
  CvdGradients g;
  evaluate_losses(in, eff, valid, unc, cfg, &g);
  std::vector<GridD>& x = wrt_unc ? unc : eff;
  const std::vector<GridD>& an = wrt_unc ? g.d_unc : g.d_disp;
  double worst = 0.0;
  for (size_t f = 0; f < x.size(); ++f) {
    for (int q = 0; q < x[f].size(); ++q) {
      const double x0 = x[f][q];
      const double h = 1e-6 * std::max(1.0, std::abs(x0));
      x[f][q] = x0 + h;
      const double up = evaluate_losses(in, eff, valid, unc, cfg, nullptr).total(cfg);
      x[f][q] = x0 - h;
      const double dn = evaluate_losses(in, eff, valid, unc, cfg, nullptr).total(cfg);
      x[f][q] = x0;
      const double fd = (up - dn) / (2.0 * h);
      if (std::abs(fd) < 1e-7 && std::abs(an[f][q]) < 1e-7) continue;
      worst = std::max(worst, rel_err(an[f][q], fd));
    }
  }
  return worst;
}

// Two-frame setup with a small rotation plus translation between the cameras,
// smooth disparity on both frames, and observed targets displaced from the
// induced ones so every residual sits away from the L1 and ratio kinks.
struct PairFixture {
  CvdInputs in;
  std::vector<GridD> eff;
  std::vector<MaskU8> valid;
  std::vector<GridD> unc;

  explicit PairFixture(bool reverse_pair = false) {
    const int w = 6, h = 5;
    in.k = make_k(w, h, 40.0);
    in.poses = {camera_at(Vec3::Zero()),
                camera_at(Vec3(0.02, -0.012, 0.008), Vec3(0.006, -0.015, 0.024))};
    eff = {field(w, h, 0.8, 0.04, 0.03), field(w, h, 1.3, 0.02, 0.015)};
    in.prior = {field(w, h, 0.85, 0.03, 0.02), field(w, h, 1.25, 0.025, 0.01)};
    in.prior_valid = all_valid(2, w, h);
    valid = all_valid(2, w, h);
    unc = {field(w, h, 0.5, 0.02, 0.015), field(w, h, 0.9, 0.01, 0.02)};
    in.flows.emplace(std::pair<int, int>{0, 1},
                     induced_targets(in, 0, 1, eff[0], Vec2(0.23, -0.31)));
    if (reverse_pair)
      in.flows.emplace(std::pair<int, int>{1, 0},
                       induced_targets(in, 1, 0, eff[1], Vec2(-0.19, 0.27)));
  }
};

double depth_abs_rel(const std::vector<GridD>& disp, const SceneBundle& bundle, double d_min) {
  double sum = 0.0;
  long count = 0;
  for (size_t f = 0; f < disp.size(); ++f) {
    const DisparityGrid& gt = bundle.gt_disp_full[f];
    const GridD& gt_depth = bundle.gt_depth_full[f];
    for (int q = 0; q < disp[f].size(); ++q) {
      if (!gt.valid[q] || disp[f][q] < d_min) continue;
      sum += std::abs(1.0 / disp[f][q] - gt_depth[q]) / gt_depth[q];
      ++count;
    }
  }
  REQUIRE(count > 0);
  return sum / count;
}

}  // namespace

TEST_CASE("pair selection walks the fixed offsets within range") {
  const std::vector<int> offsets{1, 2, 4, 8, 15};
  CHECK(select_pairs(2, offsets) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(select_pairs(16, offsets).size() == 50);

  const auto p17 = select_pairs(17, offsets);
  CHECK(std::count(p17.begin(), p17.end(), std::pair<int, int>{1, 16}) == 1);
  CHECK(std::is_sorted(p17.begin(), p17.end()));

  // duplicate offsets collapse to one pair
  CHECK(select_pairs(5, std::vector<int>{1, 1, 2}).size() == 7);

  CHECK_THROWS_AS(select_pairs(4, std::vector<int>{1, 0}), ConfigError);
  CHECK_THROWS_AS(select_pairs(4, std::vector<int>{-3}), ConfigError);
}

TEST_CASE("depth state initialization floors disparity and maps motion to noise scale") {
  CvdInputs in;
  in.k = make_k(2, 2, 10.0);
  GridD prior(2, 2, 0.0);
  prior[0] = 0.5;
  prior[1] = 2e-5;
  prior[2] = 1.0;
  prior[3] = 3.0;
  MaskU8 v(2, 2, 1);
  v[2] = 0;
  GridD p(2, 2, 1.0);
  p[1] = 0.25;
  p[2] = 0.5;
  p[3] = 1.7;
  in.prior.push_back(prior);
  in.prior_valid.push_back(v);
  in.prob_static.push_back(p);

  const DepthState st = init_depth_state(in, 1e-3, 1e-4);
  REQUIRE(st.disp.size() == 1);
  CHECK(st.disp[0][0] == 0.5);
  CHECK(st.disp[0][1] == 1e-4);  // floored to d_min
  CHECK(st.disp[0][2] == 0.0);   // invalid pixels carry no disparity
  CHECK(st.disp[0][3] == 3.0);
  CHECK(st.unc[0][0] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(st.unc[0][1] == doctest::Approx(1e-3 + 0.75 * 0.999).epsilon(1e-12));
  CHECK(st.unc[0][2] == doctest::Approx(1e-3 + 0.5 * 0.999).epsilon(1e-12));
  CHECK(st.unc[0][3] == doctest::Approx(1e-3).epsilon(1e-12));  // clamped above 1
  CHECK(st.scale == std::vector<double>{1.0});
  CHECK(st.shift == std::vector<double>{0.0});
  CHECK(st.valid[0][2] == 0);
}

TEST_CASE("flow term vanishes on exactly explained correspondences") {
  PairFixture fx;
  fx.in.flows.clear();
  fx.in.flows.emplace(std::pair<int, int>{0, 1}, induced_targets(fx.in, 0, 1, fx.eff[0]));
  std::vector<GridD> unc = {GridD(6, 5, 1.0), GridD(6, 5, 1.0)};
  RunConfig cfg;
  const CvdLoss loss = evaluate_losses(fx.in, fx.eff, fx.valid, unc, cfg, nullptr);
  CHECK(std::abs(loss.flow) <= 1e-12);
}

TEST_CASE("noise scale is stationary at the residual magnitude") {
  // residual fixed at (0.3, -0.4), so |r| = 0.7; at unc = 0.7 the per-pixel
  // derivative 1/m - |r|/m^2 crosses zero
  PairFixture fx;
  fx.in.flows.clear();
  fx.in.flows.emplace(std::pair<int, int>{0, 1},
                      induced_targets(fx.in, 0, 1, fx.eff[0], Vec2(0.3, -0.4)));
  std::vector<GridD> unc = {GridD(6, 5, 0.7), GridD(6, 5, 0.7)};
  RunConfig cfg;
  cfg.cvd_w_temp = 0.0;
  cfg.cvd_w_prior = 0.0;
  CvdGradients g;
  const CvdLoss loss = evaluate_losses(fx.in, fx.eff, fx.valid, unc, cfg, &g);
  CHECK(loss.flow == doctest::Approx(30.0 * (1.0 + std::log(0.7))).epsilon(1e-10));
  for (int q = 0; q < 30; ++q) {
    CHECK(std::abs(g.d_unc[0][q]) <= 1e-12);
    CHECK(g.d_unc[1][q] == 0.0);   // only the source frame carries a noise scale
    CHECK(g.d_disp[1][q] == 0.0);  // the flow term never touches the target frame depth
  }
}

TEST_CASE("flow gradients match finite differences") {
  PairFixture fx;
  RunConfig cfg;
  cfg.cvd_w_flow = 1.3;
  cfg.cvd_w_temp = 0.0;
  cfg.cvd_w_prior = 0.0;
  CHECK(fd_max_rel(fx.in, fx.eff, fx.valid, fx.unc, cfg, false) < 1e-4);
  CHECK(fd_max_rel(fx.in, fx.eff, fx.valid, fx.unc, cfg, true) < 1e-4);
}

TEST_CASE("temporal consistency scores the depth ratio") {
  const int w = 6, h = 5;
  CvdInputs in;
  in.k = make_k(w, h, 40.0);
  in.poses = {RigidTransform{}, RigidTransform{}};
  FlowGrid still(w, h, Vec2::Zero());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) still.at(x, y) = Vec2(x, y);
  in.flows.emplace(std::pair<int, int>{0, 1}, still);
  in.prior = {GridD(w, h, 1.0), GridD(w, h, 1.0)};
  in.prior_valid = all_valid(2, w, h);
  const std::vector<MaskU8> valid = all_valid(2, w, h);
  const std::vector<GridD> unc = {GridD(w, h, 1.0), GridD(w, h, 1.0)};
  RunConfig cfg;

  auto temp_of = [&](double di, double dj) {
    const std::vector<GridD> eff = {GridD(w, h, di), GridD(w, h, dj)};
    return evaluate_losses(in, eff, valid, unc, cfg, nullptr).temp;
  };

  // bilinear sampling needs a full corner neighborhood, so the last row and
  // column drop out
  const double n = (w - 1) * (h - 1);
  // equal depths on both sides sit at the per-pixel floor of 1
  CHECK(temp_of(0.5, 0.5) == doctest::Approx(n).epsilon(1e-12));
  // transported depth 1 against sampled depth 2: ratio 2 either way around
  CHECK(temp_of(1.0, 0.5) == doctest::Approx(2.0 * n).epsilon(1e-12));
  // transported depth 4 against sampled depth 1
  CHECK(temp_of(0.25, 1.0) == doctest::Approx(4.0 * n).epsilon(1e-12));

  // a static camera over one unchanged smooth surface also sits at the floor
  const GridD smooth = field(w, h, 0.9, 0.03, 0.02, 0.004);
  const std::vector<GridD> eff = {smooth, smooth};
  const CvdLoss loss = evaluate_losses(in, eff, valid, unc, cfg, nullptr);
  CHECK(loss.temp == doctest::Approx(n).epsilon(1e-12));
  CHECK(std::abs(loss.flow) <= 1e-12);
}

TEST_CASE("temporal gradients match finite differences") {
  PairFixture fx;
  RunConfig cfg;
  cfg.cvd_w_flow = 0.0;
  cfg.cvd_w_temp = 0.7;
  cfg.cvd_w_prior = 0.0;
  CHECK(fd_max_rel(fx.in, fx.eff, fx.valid, fx.unc, cfg, false) < 1e-4);
  CHECK(fd_max_rel(fx.in, fx.eff, fx.valid, fx.unc, cfg, true) < 1e-4);
}

TEST_CASE("scale-invariant prior measures log-ratio variance") {
  const int w = 2, h = 1;
  CvdInputs in;
  in.k = make_k(w, h, 5.0);
  in.prior = {GridD(w, h, 1.0)};
  in.prior_valid = all_valid(1, w, h);
  std::vector<GridD> eff = {GridD(w, h, 1.0)};
  eff[0][1] = std::exp(1.0);  // log ratios {0, 1}: variance 0.5 - 0.25
  const std::vector<GridD> unc = {GridD(w, h, 1.0)};
  RunConfig cfg;
  const CvdLoss loss = evaluate_losses(in, eff, all_valid(1, w, h), unc, cfg, nullptr);
  CHECK(loss.si == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("scale-invariant prior ignores global rescaling and matches a variance oracle") {
  const int w = 6, h = 5;
  CvdInputs in;
  in.k = make_k(w, h, 30.0);
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  GridD eff0(w, h, 0.0), prior(w, h, 0.0);
  MaskU8 pv(w, h, 1), ev(w, h, 1);
  for (int q = 0; q < w * h; ++q) {
    eff0[q] = u(rng);
    prior[q] = u(rng);
  }
  pv[4] = 0;   // prior hole
  ev[11] = 0;  // disparity hole
  eff0[17] = 1e-6;  // below d_min, must also drop out
  in.prior = {prior};
  in.prior_valid = {pv};
  const std::vector<MaskU8> valid = {ev};
  const std::vector<GridD> unc = {GridD(w, h, 1.0)};
  RunConfig cfg;

  const double si = evaluate_losses(in, {eff0}, valid, unc, cfg, nullptr).si;

  // population variance over the jointly valid pixels
  std::vector<double> r;
  for (int q = 0; q < w * h; ++q)
    if (pv[q] && ev[q] && eff0[q] >= cfg.d_min) r.push_back(std::log(eff0[q] / prior[q]));
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= r.size();
  double var = 0.0;
  for (double v : r) var += (v - mean) * (v - mean);
  var /= r.size();
  CHECK(si == doctest::Approx(var).epsilon(1e-12));

  GridD scaled = eff0;
  for (int q = 0; q < w * h; ++q) scaled[q] *= 3.7;
  const double si_scaled = evaluate_losses(in, {scaled}, valid, unc, cfg, nullptr).si;
  CHECK(std::abs(si_scaled - si) < 1e-10);

  // a second frame that matches its prior exactly adds nothing
  in.prior.push_back(eff0);
  in.prior_valid.push_back(MaskU8(w, h, 1));
  const double si_two = evaluate_losses(in, {eff0, eff0}, {ev, MaskU8(w, h, 1)},
                                        {unc[0], unc[0]}, cfg, nullptr)
                            .si;
  CHECK(si_two == doctest::Approx(si).epsilon(1e-12));
}

TEST_CASE("scale-invariant gradients match finite differences") {
  const int w = 6, h = 5;
  CvdInputs in;
  in.k = make_k(w, h, 30.0);
  in.prior = {field(w, h, 1.1, 0.03, 0.02)};
  in.prior_valid = all_valid(1, w, h);
  const std::vector<GridD> eff = {field(w, h, 0.9, 0.05, 0.04, 0.006)};
  const std::vector<GridD> unc = {GridD(w, h, 1.0)};
  RunConfig cfg;
  cfg.cvd_w_flow = 0.0;
  cfg.cvd_w_temp = 0.0;
  cfg.cvd_w_prior = 1.0;
  cfg.cvd_w_grad = 0.0;
  cfg.cvd_w_normal = 0.0;
  CHECK(fd_max_rel(in, eff, all_valid(1, w, h), unc, cfg, false) < 1e-4);
}

TEST_CASE("gradient-match prior gates and averages log-gradient magnitudes") {
  RunConfig cfg;
  const std::vector<GridD> unc1 = {GridD(2, 2, 1.0)};

  // constant ratio: no gradients anywhere, zero loss
  CvdInputs in;
  in.k = make_k(2, 2, 10.0);
  in.prior = {field(2, 2, 1.0, 0.2, 0.1)};
  in.prior_valid = all_valid(1, 2, 2);
  GridD triple = in.prior[0];
  for (int q = 0; q < 4; ++q) triple[q] *= 3.0;
  CHECK(std::abs(evaluate_losses(in, {triple}, all_valid(1, 2, 2), unc1, cfg, nullptr).grad) <=
        1e-12);

  // log ratio 0 on the left column, 1 on the right: the two x-gradients of 1
  // are gated by 1 - e^-5, the one zero y-gradient contributes nothing, and
  // three pixels have a forward neighbor
  in.prior = {GridD(2, 2, 1.0)};
  GridD step(2, 2, 1.0);
  step.at(1, 0) = std::exp(1.0);
  step.at(1, 1) = std::exp(1.0);
  const double got =
      evaluate_losses(in, {step}, all_valid(1, 2, 2), unc1, cfg, nullptr).grad;
  CHECK(got == doctest::Approx(2.0 * (1.0 - std::exp(-5.0)) / 3.0).epsilon(1e-12));
}

TEST_CASE("gradient-match gradients match finite differences across the pyramid") {
  const int w = 8, h = 6;
  CvdInputs in;
  in.k = make_k(w, h, 50.0);
  in.prior = {field(w, h, 1.0, 0.03, 0.02, 0.005)};
  in.prior_valid = all_valid(1, w, h);
  // log ratio is a ramp: every level keeps strictly positive forward
  // differences, so no magnitude kink is crossed
  GridD eff(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      eff.at(x, y) = in.prior[0].at(x, y) * std::exp(0.04 * x + 0.05 * y);
  const std::vector<GridD> unc = {GridD(w, h, 1.0)};
  RunConfig cfg;
  cfg.cvd_w_flow = 0.0;
  cfg.cvd_w_temp = 0.0;
  cfg.cvd_w_prior = 1.0;
  cfg.cvd_w_grad = 0.8;
  cfg.cvd_w_normal = 0.0;
  CHECK(fd_max_rel(in, {eff}, all_valid(1, w, h), unc, cfg, false) < 1e-4);
}

TEST_CASE("normal prior scores surface orientation mismatch") {
  const int w = 8, h = 6;
  CvdInputs in;
  in.k = make_k(w, h, 50.0);
  const std::vector<GridD> unc = {GridD(w, h, 1.0)};
  RunConfig cfg;

  // identical surfaces agree everywhere
  const GridD smooth = field(w, h, 1.0, 0.02, 0.03, 0.004);
  in.prior = {smooth};
  in.prior_valid = all_valid(1, w, h);
  CHECK(std::abs(evaluate_losses(in, {smooth}, all_valid(1, w, h), unc, cfg, nullptr).normal) <=
        1e-10);

  // two planes tilted 45 degrees either way are orthogonal, so every interior
  // pixel contributes exactly 1
  GridD plus(w, h, 0.0), minus(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double xt = (x - in.k.cx) / in.k.fx;
      plus.at(x, y) = 1.0 - xt;   // backprojects onto the plane z - x = 1
      minus.at(x, y) = 1.0 + xt;  // backprojects onto the plane z + x = 1
    }
  in.prior = {minus};
  const double got = evaluate_losses(in, {plus}, all_valid(1, w, h), unc, cfg, nullptr).normal;
  CHECK(got == doctest::Approx((w - 2) * (h - 2)).epsilon(1e-9));
}

TEST_CASE("normal gradients match finite differences") {
  const int w = 8, h = 6;
  CvdInputs in;
  in.k = make_k(w, h, 50.0);
  GridD prior(w, h, 0.0), eff(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      prior.at(x, y) = 1.2 + 0.02 * x + 0.03 * y - 0.002 * x * x + 0.004 * y * y;
      eff.at(x, y) = 1.0 + 0.03 * x + 0.04 * y + 0.004 * x * x - 0.003 * y * y;
    }
  in.prior = {prior};
  in.prior_valid = all_valid(1, w, h);
  const std::vector<GridD> unc = {GridD(w, h, 1.0)};
  RunConfig cfg;
  cfg.cvd_w_flow = 0.0;
  cfg.cvd_w_temp = 0.0;
  cfg.cvd_w_prior = 1.0;
  cfg.cvd_w_grad = 0.0;
  cfg.cvd_w_normal = 4.0;
  CHECK(fd_max_rel(in, {eff}, all_valid(1, w, h), unc, cfg, false) < 1e-3);
}

TEST_CASE("total is the weighted sum of terms and weights isolate gradients") {
  PairFixture fx(/*reverse_pair=*/true);
  RunConfig full;  // defaults: flow 1, temp 0.2, prior 1, grad 1, normal 4

  CvdGradients g_full;
  const CvdLoss loss = evaluate_losses(fx.in, fx.eff, fx.valid, fx.unc, full, &g_full);
  CHECK(loss.total(full) ==
        doctest::Approx(full.cvd_w_flow * loss.flow + full.cvd_w_temp * loss.temp +
                        full.cvd_w_prior *
                            (loss.si + full.cvd_w_grad * loss.grad +
                             full.cvd_w_normal * loss.normal))
            .epsilon(1e-14));

  RunConfig flow_only = full, temp_only = full, prior_only = full;
  flow_only.cvd_w_temp = 0.0;
  flow_only.cvd_w_prior = 0.0;
  temp_only.cvd_w_flow = 0.0;
  temp_only.cvd_w_prior = 0.0;
  prior_only.cvd_w_flow = 0.0;
  prior_only.cvd_w_temp = 0.0;

  CvdGradients g_f, g_t, g_p;
  const CvdLoss l_f = evaluate_losses(fx.in, fx.eff, fx.valid, fx.unc, flow_only, &g_f);
  const CvdLoss l_t = evaluate_losses(fx.in, fx.eff, fx.valid, fx.unc, temp_only, &g_t);
  const CvdLoss l_p = evaluate_losses(fx.in, fx.eff, fx.valid, fx.unc, prior_only, &g_p);

  // the raw term values never depend on the weights
  CHECK(l_f.flow == loss.flow);
  CHECK(l_t.temp == loss.temp);
  CHECK(l_p.si == loss.si);
  CHECK(l_p.grad == loss.grad);
  CHECK(l_p.normal == loss.normal);

  // zeroing a weight removes exactly that term's gradient contribution
  for (int f = 0; f < 2; ++f)
    for (int q = 0; q < g_full.d_disp[f].size(); ++q) {
      const double sum = g_f.d_disp[f][q] + g_t.d_disp[f][q] + g_p.d_disp[f][q];
      CHECK(std::abs(g_full.d_disp[f][q] - sum) <=
            1e-12 * std::max(1.0, std::abs(g_full.d_disp[f][q])));
      const double sum_u = g_f.d_unc[f][q] + g_t.d_unc[f][q] + g_p.d_unc[f][q];
      CHECK(std::abs(g_full.d_unc[f][q] - sum_u) <=
            1e-12 * std::max(1.0, std::abs(g_full.d_unc[f][q])));
    }

  // full gradient against finite differences with every term active
  CHECK(fd_max_rel(fx.in, fx.eff, fx.valid, fx.unc, full, false) < 1e-3);
  CHECK(fd_max_rel(fx.in, fx.eff, fx.valid, fx.unc, full, true) < 1e-4);
}

TEST_CASE("refinement leaves an exactly explained video untouched") {
  // Fronto-parallel plane at depth 2 under sideways steps of 1/16: all stored
  // targets and bilinear lookups are exact, so every disparity gradient is
  // identically zero and both phases leave the depth state alone.
  const int w = 16, h = 12;
  CvdInputs in;
  in.k = make_k(w, h, 32.0);
  in.poses = {camera_at(Vec3(0, 0, 0)), camera_at(Vec3(0.0625, 0, 0)),
              camera_at(Vec3(0.125, 0, 0))};
  const GridD plane(w, h, 0.5);
  in.prior = {plane, plane, plane};
  in.prior_valid = all_valid(3, w, h);
  in.prob_static = {GridD(w, h, 1.0), GridD(w, h, 1.0), GridD(w, h, 1.0)};
  for (const auto& pr : select_pairs(3, {1, 2}))
    in.flows.emplace(pr, induced_targets(in, pr.first, pr.second, plane));

  RunConfig cfg;
  cfg.cvd_warmup_steps = 25;
  cfg.cvd_main_steps = 40;
  std::vector<CvdTraceRow> trace;
  const DepthState st = refine_depth(in, cfg, &trace);

  for (int f = 0; f < 3; ++f) {
    CHECK(st.scale[f] == 1.0);
    CHECK(st.shift[f] == 0.0);
    double worst = 0.0;
    for (int q = 0; q < w * h; ++q) worst = std::max(worst, std::abs(st.disp[f][q] - 0.5));
    CHECK(worst <= 1e-12);
  }
  CHECK(trace.size() == size_t(cfg.cvd_warmup_steps + cfg.cvd_main_steps));
  CHECK(trace.front().phase == 'w');
  CHECK(trace.back().phase == 'm');
}

TEST_CASE("refinement repairs per-frame affine depth corruption") {
  SceneSpec spec;
  spec.seed = 7;
  spec.trajectory = TrajectoryFamily::kLateral;
  spec.n_frames = 5;
  spec.width = 48;
  spec.height = 36;
  spec.lowres_factor = 4;
  spec.focal = 60.0;
  spec.base_depth = 6.0;
  spec.depth_amp = 0.8;
  spec.depth_freq = 1.5;
  spec.step = 0.3;
  spec.max_gap = 2;
  spec.full_offsets = {1, 2};
  const SceneBundle bundle = generate_scene(spec, nullptr, /*keep_full=*/true);

  CvdInputs in;
  in.k = bundle.intr_full;
  in.poses = bundle.gt_world_to_cam;
  const double a[5] = {0.78, 1.22, 0.9, 1.12, 0.84};
  const double b[5] = {0.02, -0.015, 0.01, -0.02, 0.015};
  for (int f = 0; f < 5; ++f) {
    GridD prior = bundle.gt_disp_full[f].values;
    for (int q = 0; q < prior.size(); ++q)
      if (bundle.gt_disp_full[f].valid[q]) prior[q] = a[f] * prior[q] + b[f];
    in.prior.push_back(std::move(prior));
    in.prior_valid.push_back(bundle.gt_disp_full[f].valid);
    in.prob_static.push_back(bundle.motion_full[f]);
  }
  for (const auto& pr : select_pairs(5, {1, 2})) in.flows.emplace(pr, bundle.flow_full.at(pr));

  RunConfig cfg;
  cfg.cvd_warmup_steps = 60;
  cfg.cvd_main_steps = 200;

  const DepthState init = init_depth_state(in, cfg.cvd_m_floor, cfg.d_min);
  const double before = depth_abs_rel(init.disp, bundle, cfg.d_min);
  REQUIRE(before > 0.05);  // the corruption must actually hurt

  std::vector<CvdTraceRow> trace;
  const DepthState st = refine_depth(in, cfg, &trace);
  const double after = depth_abs_rel(st.disp, bundle, cfg.d_min);

  CHECK(after < before);
  CHECK(after <= 0.5 * before);

  // the 20-step moving average of the main phase never increases
  std::vector<double> main_total;
  for (const CvdTraceRow& row : trace)
    if (row.phase == 'm') main_total.push_back(row.total);
  REQUIRE(main_total.size() == 200);
  double prev = std::numeric_limits<double>::infinity();
  for (size_t t = 19; t < main_total.size(); ++t) {
    double ma = 0.0;
    for (size_t s = t - 19; s <= t; ++s) ma += main_total[s];
    ma /= 20.0;
    CHECK_MESSAGE(ma <= prev + 1e-9 * std::abs(prev), "t=", t);
    prev = ma;
  }
}

TEST_CASE("noise scale rises on pixels the cameras cannot explain") {
  SceneSpec spec;
  spec.seed = 9;
  spec.trajectory = TrajectoryFamily::kLateral;
  spec.n_frames = 6;
  spec.width = 48;
  spec.height = 36;
  spec.lowres_factor = 4;
  spec.focal = 60.0;
  spec.base_depth = 6.0;
  spec.depth_amp = 0.5;
  spec.step = 0.12;
  spec.max_gap = 2;
  spec.full_offsets = {1, 2};
  MoverSpec mover;
  mover.center = Vec3(0.35, 0.1, 2.8);
  mover.half_extents = Vec3(0.45, 0.45, 0.45);
  mover.linear_vel = Vec3(0.0, 0.05, 0.0);  // off the lateral parallax axis
  spec.movers.push_back(mover);
  const SceneBundle bundle = generate_scene(spec, nullptr, /*keep_full=*/true);

  CvdInputs in;
  in.k = bundle.intr_full;
  in.poses = bundle.gt_world_to_cam;
  for (int f = 0; f < 6; ++f) {
    in.prior.push_back(bundle.gt_disp_full[f].values);
    in.prior_valid.push_back(bundle.gt_disp_full[f].valid);
    // uniform start: the separation has to come from the residuals
    in.prob_static.push_back(GridD(48, 36, 1.0));
  }
  for (const auto& pr : select_pairs(6, {1, 2})) in.flows.emplace(pr, bundle.flow_full.at(pr));

  RunConfig cfg;
  cfg.cvd_warmup_steps = 80;
  cfg.cvd_main_steps = 240;
  const DepthState st = refine_depth(in, cfg, nullptr);

  double in_sum = 0.0, out_sum = 0.0;
  long in_count = 0, out_count = 0;
  for (int f = 0; f < 6; ++f) {
    for (int q = 0; q < 48 * 36; ++q) {
      if (bundle.motion_full[f][q] < 0.5) {
        in_sum += st.unc[f][q];
        ++in_count;
      } else {
        out_sum += st.unc[f][q];
        ++out_count;
      }
    }
  }
  REQUIRE(in_count > 100);
  REQUIRE(out_count > 1000);
  CHECK(in_sum / in_count >= 2.0 * (out_sum / out_count));
}

TEST_CASE("refinement aborts on a non-finite loss and keeps the trace") {
  const int w = 8, h = 6;
  CvdInputs in;
  in.k = make_k(w, h, 20.0);
  in.poses = {camera_at(Vec3(0, 0, 0)), camera_at(Vec3(0.05, 0, 0))};
  const GridD plane(w, h, 0.5);
  in.prior = {plane, plane};
  in.prior_valid = all_valid(2, w, h);
  in.prob_static = {GridD(w, h, 1.0), GridD(w, h, 1.0)};
  FlowGrid poisoned = induced_targets(in, 0, 1, plane);
  poisoned.at(3, 2) = Vec2(std::numeric_limits<double>::quiet_NaN(), 0.0);
  in.flows.emplace(std::pair<int, int>{0, 1}, poisoned);

  RunConfig cfg;
  std::vector<CvdTraceRow> trace;
  CHECK_THROWS_AS(refine_depth(in, cfg, &trace), NonFiniteLoss);
  REQUIRE(trace.size() == 1);  // the offending step is recorded before the abort
  CHECK(trace[0].phase == 'w');
  CHECK(!std::isfinite(trace[0].total));

  CHECK_THROWS_AS(refine_depth(CvdInputs{}, cfg, nullptr), ConfigError);
}

TEST_CASE("loss trace round-trips through the CSV writer") {
  CvdTraceRow row;
  row.step = 3;
  row.phase = 'w';
  row.loss.flow = 1.5;
  row.loss.temp = 0.25;
  row.loss.si = 0.0;
  row.loss.grad = 2.0;
  row.loss.normal = -0.5;
  row.total = 42.0;

  const fs::path dir = fs::temp_directory_path() / "flowba_cvd_trace_test";
  fs::create_directories(dir);
  const std::string path = (dir / "trace.csv").string();
  write_loss_trace(path, {row});

  std::ifstream f(path);
  REQUIRE(f.good());
  std::string header, line;
  std::getline(f, header);
  std::getline(f, line);
  CHECK(header == "step,phase,flow,temp,si,grad,normal,total");
  CHECK(line == "3,w," + format_double(1.5) + "," + format_double(0.25) + "," +
                    format_double(0.0) + "," + format_double(2.0) + "," + format_double(-0.5) +
                    "," + format_double(42.0));
  f.close();
  fs::remove_all(dir);

  CHECK_THROWS_AS(write_loss_trace("/nonexistent_dir_zz/trace.csv", {}), IoError);
}

TEST_CASE("refinement inputs assemble from a dataset and a solve directory") {
  SceneSpec spec;
  spec.seed = 3;
  spec.trajectory = TrajectoryFamily::kLateral;
  spec.n_frames = 4;
  spec.width = 32;
  spec.height = 24;
  spec.lowres_factor = 4;
  spec.focal = 40.0;
  spec.base_depth = 6.0;
  spec.step = 0.2;
  spec.max_gap = 2;
  spec.full_offsets = {1, 2};

  const fs::path root = fs::temp_directory_path() / "flowba_cvd_inputs_test";
  fs::remove_all(root);
  const fs::path data_dir = root / "data";
  const fs::path solve_dir = root / "solve";
  fs::create_directories(solve_dir);
  write_scene_dataset(spec, data_dir.string());
  const Dataset ds = Dataset::open(data_dir.string());

  const SceneBundle bundle = generate_scene(spec);
  std::vector<TrajectoryEntry> entries;
  for (int f = 0; f < 4; ++f) entries.push_back(to_entry(f, bundle.gt_world_to_cam[f]));
  write_trajectory((solve_dir / "trajectory.txt").string(), entries);
  Intrinsics solved = bundle.intr_full;
  solved.fx = solved.fy = 43.25;
  write_intrinsics((solve_dir / "intrinsics_solved.txt").string(), solved);
  KeyValueFile manifest;
  manifest.set("align_alpha", format_double(1.25));
  manifest.set("align_beta", format_double(-0.05));
  manifest.set("disp_scale", format_double(2.5));
  write_key_value((solve_dir / "manifest.txt").string(), manifest);

  RunConfig cfg;
  const CvdInputs in = load_cvd_inputs(ds, solve_dir.string(), cfg);

  CHECK(in.k.fx == 43.25);
  REQUIRE(in.poses.size() == 4);
  for (int f = 0; f < 4; ++f)
    CHECK(pose_geodesic_error(in.poses[f], bundle.gt_world_to_cam[f]) < 1e-12);

  // the default offsets intersected with the stored pairs
  REQUIRE(in.flows.size() == 5);
  CHECK(in.flows.count({0, 1}) == 1);
  CHECK(in.flows.count({1, 3}) == 1);
  CHECK(in.flows.count({0, 3}) == 0);

  const DisparityGrid rel = ds.mono_rel(1);
  REQUIRE(in.prior[1].size() == rel.values.size());
  for (int q = 0; q < rel.values.size(); ++q) {
    const double want =
        rel.valid[q] ? std::max(1.25 * rel.values[q] - 0.05, cfg.d_min) * 2.5 : 0.0;
    CHECK(in.prior[1][q] == doctest::Approx(want).epsilon(1e-12));
  }

  const GridD motion = ds.motion_full(2);
  for (int q = 0; q < motion.size(); ++q) CHECK(in.prob_static[2][q] == motion[q]);

  // offsets that reach past the clip leave nothing to refine
  RunConfig sparse = cfg;
  sparse.cvd_pair_offsets = {9};
  CHECK_THROWS_AS(load_cvd_inputs(ds, solve_dir.string(), sparse), ConfigError);

  // a trajectory that does not cover the clip is rejected
  write_trajectory((solve_dir / "trajectory.txt").string(),
                   {entries.begin(), entries.begin() + 3});
  CHECK_THROWS_AS(load_cvd_inputs(ds, solve_dir.string(), cfg), IoError);

  fs::remove_all(root);
}
