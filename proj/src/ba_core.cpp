#include "flowba/ba_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowba/errors.hpp"

namespace flowba {

namespace {

constexpr double kDiagFloor = 1e-12;  // disparity diagonal below this is held still

}  // namespace

void BAProblem::set_focal(double f) {
  focal = f;
  k.fx = f;
  k.fy = f;
}

void BAProblem::check_consistent() const {
  const int n = n_frames();
  if (static_cast<int>(disp.size()) != n || static_cast<int>(pose_fixed.size()) != n)
    throw ShapeMismatch("BAProblem: poses, disparities and pose_fixed must align");
  const bool has_prior = !prior_disp.empty();
  if (has_prior &&
      (static_cast<int>(prior_disp.size()) != n || static_cast<int>(prior_valid.size()) != n))
    throw ShapeMismatch("BAProblem: prior grids must cover every frame");
  if (k.fx != focal || k.fy != focal)
    throw ConfigError("BAProblem: intrinsics focal out of sync, use set_focal");
  for (int f = 0; f < n; ++f) {
    disp[f].check_consistent();
    if (has_prior && !prior_disp[f].same_shape(disp[f].values))
      throw ShapeMismatch("BAProblem: prior shape differs from disparity shape");
    if (has_prior && !prior_valid[f].same_shape(disp[f].values))
      throw ShapeMismatch("BAProblem: prior mask shape differs from disparity shape");
  }
  for (const BAEdge& e : edges) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n || e.i == e.j)
      throw ConfigError("BAProblem: edge indices out of range");
    if (!e.obs.target.same_shape(disp[e.i].values) || !e.obs.weight.same_shape(disp[e.i].values))
      throw ShapeMismatch("BAProblem: edge observation shape differs from source disparity");
  }
}

double total_cost(const BAProblem& p, bool include_prior) {
  double cost = 0.0;
  for (const BAEdge& e : p.edges) {
    const EdgeGeometry edge(p.poses[e.i], p.poses[e.j]);
    const DisparityGrid& di = p.disp[e.i];
    for (int y = 0; y < di.values.height; ++y) {
      for (int x = 0; x < di.values.width; ++x) {
        const double w = e.obs.weight.at(x, y);
        if (w <= 0.0 || !di.valid.at(x, y)) continue;
        Vec2 q;
        if (!induced_point(Vec2(x, y), di.values.at(x, y), edge.g_ij, p.k, &q)) continue;
        cost += w * (q - e.obs.target.at(x, y)).squaredNorm();
      }
    }
  }
  if (include_prior && !p.prior_disp.empty() && p.w_d > 0.0) {
    for (int f = 0; f < p.n_frames(); ++f) {
      const DisparityGrid& d = p.disp[f];
      for (int i = 0; i < d.values.size(); ++i) {
        if (!d.valid[i] || !p.prior_valid[f][i]) continue;
        const double r = d.values[i] - p.prior_disp[f][i];
        cost += p.w_d * r * r;
      }
    }
  }
  return cost;
}

BlockSystem build_system(const BAProblem& p, bool include_prior) {
  p.check_consistent();
  const int n = p.n_frames();
  BlockSystem sys;

  sys.pose_col.assign(n, -1);
  int col = 0;
  for (int f = 0; f < n; ++f) {
    if (p.pose_fixed[f]) continue;
    sys.pose_col[f] = col;
    col += 6;
  }
  if (p.optimize_focal) {
    sys.focal_col = col;
    col += 1;
  }
  sys.n_cam = col;
  sys.h_cam = Eigen::MatrixXd::Zero(col, col);
  sys.b_cam = Eigen::VectorXd::Zero(col);

  sys.has_disp = p.optimize_disparity;
  int n_disp = 0;
  if (sys.has_disp) {
    sys.disp_id.assign(n, {});
    sys.frame_first_disp.assign(n, 0);
    for (int f = 0; f < n; ++f) {
      sys.frame_first_disp[f] = n_disp;
      const DisparityGrid& d = p.disp[f];
      sys.disp_id[f].assign(d.values.size(), -1);
      for (int i = 0; i < d.values.size(); ++i)
        if (d.valid[i]) sys.disp_id[f][i] = n_disp++;
    }
    sys.h_d = Eigen::VectorXd::Zero(n_disp);
    sys.h_d_prior = Eigen::VectorXd::Zero(n_disp);
    sys.b_d = Eigen::VectorXd::Zero(n_disp);

    // Column pattern per source frame: its own pose, the poses of every edge
    // target it observes, and the focal column.
    std::vector<std::vector<int>> blocks(n);
    auto add_pose_block = [&](int frame, int pose) {
      if (sys.pose_col[pose] < 0) return;
      for (int c = 0; c < 6; ++c) blocks[frame].push_back(sys.pose_col[pose] + c);
    };
    for (int f = 0; f < n; ++f) {
      add_pose_block(f, f);
      if (sys.focal_col >= 0) blocks[f].push_back(sys.focal_col);
    }
    for (const BAEdge& e : p.edges) add_pose_block(e.i, e.j);
    sys.pattern.assign(n, {});
    sys.coupling.assign(n, {});
    for (int f = 0; f < n; ++f) {
      std::sort(blocks[f].begin(), blocks[f].end());
      blocks[f].erase(std::unique(blocks[f].begin(), blocks[f].end()), blocks[f].end());
      sys.pattern[f] = std::move(blocks[f]);
      const int rows = static_cast<int>(sys.pattern[f].size());
      const int cols = (f + 1 < n ? sys.frame_first_disp[f + 1] : n_disp) - sys.frame_first_disp[f];
      sys.coupling[f] = Eigen::MatrixXd::Zero(rows, cols);
    }
  }

  // Row index of a camera column inside each frame's pattern.
  std::vector<std::vector<int>> row_of_col;
  if (sys.has_disp) {
    row_of_col.assign(n, std::vector<int>(std::max(sys.n_cam, 1), -1));
    for (int f = 0; f < n; ++f)
      for (int r = 0; r < static_cast<int>(sys.pattern[f].size()); ++r)
        row_of_col[f][sys.pattern[f][r]] = r;
  }

  PixelFlowJacobian jac;
  for (const BAEdge& e : p.edges) {
    const EdgeGeometry edge(p.poses[e.i], p.poses[e.j]);
    const DisparityGrid& di = p.disp[e.i];
    const int ci = sys.pose_col[e.i];
    const int cj = sys.pose_col[e.j];
    for (int y = 0; y < di.values.height; ++y) {
      for (int x = 0; x < di.values.width; ++x) {
        const double w = e.obs.weight.at(x, y);
        if (w <= 0.0 || !di.valid.at(x, y)) continue;
        const double d = di.values.at(x, y);
        jac = induced_flow_jacobian(Vec2(x, y), d, edge, p.k);
        if (!jac.valid) continue;
        const Vec2 r = e.obs.target.at(x, y) - jac.target;  // b accumulates -J^T W (pred - obs)

        // Active camera blocks for this pixel, as (column, 2x6 or 2x1 view).
        const Vec2 jf = p.focal * jac.d_focal;  // log-focal parameterization
        auto accum_cam = [&](int ca, const Eigen::Matrix<double, 2, Eigen::Dynamic>& ja, int cb,
                             const Eigen::Matrix<double, 2, Eigen::Dynamic>& jb) {
          sys.h_cam.block(ca, cb, ja.cols(), jb.cols()).noalias() += w * ja.transpose() * jb;
        };
        Eigen::Matrix<double, 2, Eigen::Dynamic> ji, jj, jfoc;
        if (ci >= 0) ji = jac.d_pose_i;
        if (cj >= 0) jj = jac.d_pose_j;
        if (sys.focal_col >= 0) jfoc = jf;

        if (ci >= 0) {
          accum_cam(ci, ji, ci, ji);
          sys.b_cam.segment<6>(ci).noalias() += w * jac.d_pose_i.transpose() * r;
        }
        if (cj >= 0) {
          accum_cam(cj, jj, cj, jj);
          sys.b_cam.segment<6>(cj).noalias() += w * jac.d_pose_j.transpose() * r;
        }
        if (ci >= 0 && cj >= 0) {
          accum_cam(ci, ji, cj, jj);
          accum_cam(cj, jj, ci, ji);
        }
        if (sys.focal_col >= 0) {
          sys.h_cam(sys.focal_col, sys.focal_col) += w * jf.squaredNorm();
          sys.b_cam(sys.focal_col) += w * jf.dot(r);
          if (ci >= 0) {
            accum_cam(ci, ji, sys.focal_col, jfoc);
            accum_cam(sys.focal_col, jfoc, ci, ji);
          }
          if (cj >= 0) {
            accum_cam(cj, jj, sys.focal_col, jfoc);
            accum_cam(sys.focal_col, jfoc, cj, jj);
          }
        }

        if (sys.has_disp) {
          const int id = sys.disp_id[e.i][y * di.values.width + x];
          const Vec2 jd(jac.d_disp(0, 0), jac.d_disp(1, 0));
          sys.h_d(id) += w * jd.squaredNorm();
          sys.b_d(id) += w * jd.dot(r);
          const int local = id - sys.frame_first_disp[e.i];
          auto scatter = [&](int base, const Eigen::Matrix<double, 2, Eigen::Dynamic>& jcam) {
            for (int c = 0; c < jcam.cols(); ++c) {
              const int row = row_of_col[e.i][base + c];
              sys.coupling[e.i](row, local) += w * jcam.col(c).dot(jd);
            }
          };
          if (ci >= 0) scatter(ci, ji);
          if (cj >= 0) scatter(cj, jj);
          if (sys.focal_col >= 0) scatter(sys.focal_col, jfoc);
        }
      }
    }
  }

  if (sys.has_disp && include_prior && !p.prior_disp.empty() && p.w_d > 0.0) {
    for (int f = 0; f < n; ++f) {
      const DisparityGrid& d = p.disp[f];
      for (int i = 0; i < d.values.size(); ++i) {
        const int id = sys.disp_id[f][i];
        if (id < 0 || !p.prior_valid[f][i]) continue;
        sys.h_d_prior(id) += p.w_d;
        sys.b_d(id) += p.w_d * (p.prior_disp[f][i] - d.values[i]);
      }
    }
  }

  return sys;
}

StepResult solve_damped(const BlockSystem& sys, double lambda) {
  StepResult out;
  Eigen::MatrixXd s = sys.h_cam;
  s.diagonal() += lambda * sys.h_cam.diagonal();
  Eigen::VectorXd rhs = sys.b_cam;

  Eigen::VectorXd hd_damped;
  if (sys.has_disp) {
    hd_damped = (sys.h_d + sys.h_d_prior) * (1.0 + lambda);
    for (size_t f = 0; f < sys.coupling.size(); ++f) {
      const Eigen::MatrixXd& e = sys.coupling[f];
      if (e.cols() == 0 || e.rows() == 0) continue;
      const int first = sys.frame_first_disp[f];
      Eigen::VectorXd inv(e.cols());
      for (int c = 0; c < e.cols(); ++c) {
        const double h = hd_damped(first + c);
        inv(c) = h > kDiagFloor ? 1.0 / h : 0.0;
      }
      const Eigen::MatrixXd es = e * inv.asDiagonal();
      Eigen::MatrixXd block = es * e.transpose();
      Eigen::VectorXd rb = es * sys.b_d.segment(first, e.cols());
      const std::vector<int>& pat = sys.pattern[f];
      for (size_t a = 0; a < pat.size(); ++a) {
        rhs(pat[a]) -= rb(static_cast<int>(a));
        for (size_t b = 0; b < pat.size(); ++b)
          s(pat[a], pat[b]) -= block(static_cast<int>(a), static_cast<int>(b));
      }
    }
  }

  Eigen::VectorXd d_cam(sys.n_cam);
  if (sys.n_cam > 0) {
    d_cam = s.ldlt().solve(rhs);
    if (!d_cam.allFinite()) return out;
  }

  out.d_cam = d_cam;
  if (sys.has_disp) {
    out.d_disp = Eigen::VectorXd::Zero(sys.n_disp());
    for (size_t f = 0; f < sys.coupling.size(); ++f) {
      const Eigen::MatrixXd& e = sys.coupling[f];
      const int first = sys.frame_first_disp[f];
      Eigen::VectorXd cam_part = Eigen::VectorXd::Zero(e.cols());
      if (e.rows() > 0 && sys.n_cam > 0) {
        Eigen::VectorXd cam_sel(e.rows());
        for (size_t a = 0; a < sys.pattern[f].size(); ++a)
          cam_sel(static_cast<int>(a)) = d_cam(sys.pattern[f][a]);
        cam_part = e.transpose() * cam_sel;
      }
      for (int c = 0; c < e.cols(); ++c) {
        const double h = hd_damped(first + c);
        out.d_disp(first + c) = h > kDiagFloor ? (sys.b_d(first + c) - cam_part(c)) / h : 0.0;
      }
    }
    if (!out.d_disp.allFinite()) return out;
  }
  out.ok = true;
  return out;
}

StepResult solve_damped_dense(const BlockSystem& sys, double lambda) {
  StepResult out;
  const int nd = sys.has_disp ? sys.n_disp() : 0;

  Eigen::VectorXd hd_damped;
  std::vector<int> active(nd, -1);  // disparity unknown -> dense column or -1
  int n_active = 0;
  if (sys.has_disp) {
    hd_damped = (sys.h_d + sys.h_d_prior) * (1.0 + lambda);
    for (int i = 0; i < nd; ++i)
      if (hd_damped(i) > kDiagFloor) active[i] = n_active++;
  }

  const int n = sys.n_cam + n_active;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  h.topLeftCorner(sys.n_cam, sys.n_cam) = sys.h_cam;
  h.topLeftCorner(sys.n_cam, sys.n_cam).diagonal() += lambda * sys.h_cam.diagonal();
  b.head(sys.n_cam) = sys.b_cam;
  if (sys.has_disp) {
    for (int i = 0; i < nd; ++i) {
      if (active[i] < 0) continue;
      const int c = sys.n_cam + active[i];
      h(c, c) = hd_damped(i);
      b(c) = sys.b_d(i);
    }
    for (size_t f = 0; f < sys.coupling.size(); ++f) {
      const Eigen::MatrixXd& e = sys.coupling[f];
      const int first = sys.frame_first_disp[f];
      for (int c = 0; c < e.cols(); ++c) {
        if (active[first + c] < 0) continue;
        const int dc = sys.n_cam + active[first + c];
        for (size_t a = 0; a < sys.pattern[f].size(); ++a) {
          h(sys.pattern[f][a], dc) += e(static_cast<int>(a), c);
          h(dc, sys.pattern[f][a]) += e(static_cast<int>(a), c);
        }
      }
    }
  }

  Eigen::VectorXd x(n);
  if (n > 0) {
    x = h.ldlt().solve(b);
    if (!x.allFinite()) return out;
  }
  out.d_cam = x.head(sys.n_cam);
  if (sys.has_disp) {
    out.d_disp = Eigen::VectorXd::Zero(nd);
    for (int i = 0; i < nd; ++i)
      if (active[i] >= 0) out.d_disp(i) = x(sys.n_cam + active[i]);
  }
  out.ok = true;
  return out;
}

void apply_step(const BlockSystem& sys, const StepResult& step, double d_min, BAProblem* p) {
  for (int f = 0; f < p->n_frames(); ++f) {
    if (sys.pose_col[f] < 0) continue;
    const Vec6 xi = step.d_cam.segment<6>(sys.pose_col[f]);
    p->poses[f] = compose(se3_exp(xi), p->poses[f]);
  }
  if (sys.focal_col >= 0) p->set_focal(p->focal * std::exp(step.d_cam(sys.focal_col)));
  if (sys.has_disp) {
    for (int f = 0; f < p->n_frames(); ++f) {
      DisparityGrid& d = p->disp[f];
      for (int i = 0; i < d.values.size(); ++i) {
        const int id = sys.disp_id[f][i];
        if (id < 0) continue;
        d.values[i] = std::max(d.values[i] + step.d_disp(id), d_min);
      }
    }
  }
}

namespace {

double gradient_inf_norm(const BlockSystem& sys) {
  double g = sys.n_cam > 0 ? sys.b_cam.lpNorm<Eigen::Infinity>() : 0.0;
  if (sys.has_disp && sys.n_disp() > 0) g = std::max(g, sys.b_d.lpNorm<Eigen::Infinity>());
  return g;
}

}  // namespace

LMTrace lm_solve(BAProblem* p, const LMOptions& opts) {
  p->check_consistent();
  LMTrace trace;
  double cost = total_cost(*p);
  trace.initial_cost = cost;
  trace.final_cost = cost;
  double lambda = opts.lambda0;

  for (int outer = 0; outer < opts.max_iters; ++outer) {
    const BlockSystem sys = build_system(*p);
    if (gradient_inf_norm(sys) <= 1e-14) break;

    bool accepted = false;
    double rel = 0.0;
    int rejects = 0;
    while (rejects < opts.max_rejects) {
      const StepResult step = solve_damped(sys, lambda);
      if (step.ok) {
        BAProblem cand = *p;
        apply_step(sys, step, opts.d_min, &cand);
        const double c2 = total_cost(cand);
        if (std::isfinite(c2) && c2 < cost) {
          *p = std::move(cand);
          rel = (cost - c2) / std::max(cost, 1e-300);
          cost = c2;
          lambda = std::max(lambda / opts.lambda_down, 1e-12);
          trace.steps.push_back({cost, lambda, true});
          accepted = true;
          break;
        }
      }
      lambda *= opts.lambda_up;
      ++rejects;
      trace.steps.push_back({cost, lambda, false});
    }
    if (!accepted) {
      // No descending step exists. At a minimum the residual gradient is pure
      // rounding noise, so the lightly damped step is negligible; that is
      // convergence. A stall keeps a meaningful step that still cannot descend.
      const StepResult probe = solve_damped(sys, opts.lambda0);
      double step_norm = std::numeric_limits<double>::infinity();
      if (probe.ok) {
        step_norm = probe.d_cam.size() > 0 ? probe.d_cam.lpNorm<Eigen::Infinity>() : 0.0;
        if (probe.d_disp.size() > 0)
          step_norm = std::max(step_norm, probe.d_disp.lpNorm<Eigen::Infinity>());
      }
      if (step_norm > opts.step_tol) trace.no_progress = true;
      break;
    }
    if (rel < opts.cost_rel_tol) break;
  }
  trace.final_cost = cost;
  return trace;
}

LMTrace motion_only_ba(BAProblem* p, const LMOptions& opts) {
  const bool saved_disp = p->optimize_disparity;
  const bool saved_focal = p->optimize_focal;
  p->optimize_disparity = false;
  p->optimize_focal = false;
  LMTrace trace = lm_solve(p, opts);
  p->optimize_disparity = saved_disp;
  p->optimize_focal = saved_focal;
  return trace;
}

double disparity_percentile_98(const std::vector<DisparityGrid>& disp) {
  std::vector<double> values;
  for (const DisparityGrid& d : disp)
    for (int i = 0; i < d.values.size(); ++i)
      if (d.valid[i]) values.push_back(d.values[i]);
  if (values.empty()) throw NoValidPixels("disparity percentile: no valid disparities");
  const size_t idx = static_cast<size_t>(0.98 * (values.size() - 1));
  std::nth_element(values.begin(), values.begin() + idx, values.end());
  return values[idx];
}

double normalize_disparity(BAProblem* p) {
  const double pct = disparity_percentile_98(p->disp);
  if (!(pct > 0.0)) throw DegenerateScale("normalize_disparity: nonpositive 98th percentile");
  const double s = 2.0 / pct;
  for (DisparityGrid& d : p->disp)
    for (int i = 0; i < d.values.size(); ++i) d.values[i] *= s;
  for (GridD& g : p->prior_disp)
    for (int i = 0; i < g.size(); ++i) g[i] *= s;
  for (RigidTransform& g : p->poses) g.translation /= s;
  return s;
}

}  // namespace flowba
