#include "flowba/cvd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "flowba/errors.hpp"
#include "flowba/io.hpp"

namespace flowba {

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Runs task(0..n-1) on up to `threads` workers. Tasks must write to disjoint
// slots; the caller reduces afterwards in index order, so results never depend
// on the thread count.
template <typename F>
void parallel_tasks(int n, int threads, F&& task) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) task(i);
    });
  for (std::thread& t : pool) t.join();
}

Raster<Vec3> make_rays(const Intrinsics& k) {
  Raster<Vec3> rays(k.width, k.height);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x)
      rays.at(x, y) = Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
  return rays;
}

struct PairScratch {
  double flow = 0.0, temp = 0.0;
  GridD gd_i, gd_j, gu_i;
};

struct FrameScratch {
  double si = 0.0, grad = 0.0, normal = 0.0;
};

// Normals from central differences of the point map ray/disp. Defined where
// the 5-point stencil is valid and the cross product is nondegenerate.
void surface_normals(const GridD& disp, const MaskU8& valid, const Raster<Vec3>& rays,
                     Raster<Vec3>* normals, MaskU8* defined) {
  const int w = disp.width, h = disp.height;
  *normals = Raster<Vec3>(w, h, Vec3::Zero());
  *defined = MaskU8(w, h, 0);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!valid.at(x, y) || !valid.at(x - 1, y) || !valid.at(x + 1, y) || !valid.at(x, y - 1) ||
          !valid.at(x, y + 1))
        continue;
      const Vec3 tx = rays.at(x + 1, y) / disp.at(x + 1, y) - rays.at(x - 1, y) / disp.at(x - 1, y);
      const Vec3 ty = rays.at(x, y + 1) / disp.at(x, y + 1) - rays.at(x, y - 1) / disp.at(x, y - 1);
      const Vec3 n = tx.cross(ty);
      const double len = n.norm();
      if (len < 1e-12) continue;
      normals->at(x, y) = n / len;
      defined->at(x, y) = 1;
    }
  }
}

}  // namespace

DepthState init_depth_state(const CvdInputs& in, double m_floor, double d_min) {
  const int n = static_cast<int>(in.prior.size());
  DepthState st;
  st.scale.assign(n, 1.0);
  st.shift.assign(n, 0.0);
  for (int f = 0; f < n; ++f) {
    GridD d = in.prior[f];
    for (int i = 0; i < d.size(); ++i)
      d[i] = in.prior_valid[f][i] ? std::max(d[i], d_min) : 0.0;
    st.disp.push_back(std::move(d));
    st.valid.push_back(in.prior_valid[f]);
    GridD m(in.prior[f].width, in.prior[f].height, m_floor);
    for (int i = 0; i < m.size(); ++i) {
      const double p_static = std::clamp(in.prob_static[f][i], 0.0, 1.0);
      m[i] = m_floor + (1.0 - p_static) * (1.0 - m_floor);
    }
    st.unc.push_back(std::move(m));
  }
  return st;
}

std::vector<std::pair<int, int>> select_pairs(int n_frames, const std::vector<int>& offsets) {
  std::set<std::pair<int, int>> out;
  for (int k : offsets) {
    if (k <= 0) throw ConfigError("pair offsets must be positive");
    for (int i = 0; i + k < n_frames; ++i) out.emplace(i, i + k);
  }
  return {out.begin(), out.end()};
}

CvdLoss evaluate_losses(const CvdInputs& in, const std::vector<GridD>& eff_disp,
                        const std::vector<MaskU8>& valid, const std::vector<GridD>& unc,
                        const RunConfig& cfg, CvdGradients* grads) {
  const int n = static_cast<int>(eff_disp.size());
  const int w = in.k.width, h = in.k.height;
  const double d_min = cfg.d_min;

  std::vector<MaskU8> eff_valid(n);
  for (int f = 0; f < n; ++f) {
    eff_valid[f] = MaskU8(w, h, 0);
    for (int i = 0; i < w * h; ++i)
      eff_valid[f][i] = valid[f][i] && eff_disp[f][i] >= d_min ? 1 : 0;
  }

  if (grads) {
    grads->d_disp.assign(n, GridD(w, h, 0.0));
    grads->d_unc.assign(n, GridD(w, h, 0.0));
  }

  const Raster<Vec3> rays = make_rays(in.k);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [key, flow] : in.flows) pairs.push_back(key);

  // ---- pair terms: flow reprojection and temporal depth consistency ----
  std::vector<PairScratch> scratch(pairs.size());
  parallel_tasks(static_cast<int>(pairs.size()), cfg.threads, [&](int pi) {
    const auto [i, j] = pairs[pi];
    PairScratch& sc = scratch[pi];
    if (grads) {
      sc.gd_i = GridD(w, h, 0.0);
      sc.gd_j = GridD(w, h, 0.0);
      sc.gu_i = GridD(w, h, 0.0);
    }
    const FlowGrid& obs = in.flows.at(pairs[pi]);
    const EdgeGeometry edge(in.poses[i], in.poses[j]);
    PixelFlowJacobian jac;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!eff_valid[i].at(x, y)) continue;
        const double d = eff_disp[i].at(x, y);
        const double m = unc[i].at(x, y);
        const Vec2 p(x, y);

        jac = induced_flow_jacobian(p, d, edge, in.k);
        if (jac.valid) {
          const Vec2 e = jac.target - obs.at(x, y);
          const double l1 = std::abs(e.x()) + std::abs(e.y());
          sc.flow += l1 / m + std::log(m);
          if (grads) {
            sc.gd_i.at(x, y) += cfg.cvd_w_flow *
                                (sgn(e.x()) * jac.d_disp(0, 0) + sgn(e.y()) * jac.d_disp(1, 0)) /
                                m;
            sc.gu_i.at(x, y) += cfg.cvd_w_flow * (1.0 / m - l1 / (m * m));
          }
        }

        const Vec3 rotated = edge.r_ij * rays.at(x, y);
        const Vec3 xj = rotated / d + edge.g_ij.translation;
        const double a = xj.z();
        if (a <= kZMin) continue;
        const Vec2 q = obs.at(x, y);
        BilinearSample smp;
        if (!bilinear(eff_disp[j], q.x(), q.y(), &smp)) continue;
        bool corners_ok = true;
        for (int c = 0; c < 4; ++c)
          if (!eff_valid[j][smp.idx[c]]) corners_ok = false;
        if (!corners_ok || smp.value < d_min) continue;
        const double b = 1.0 / smp.value;
        const double delta = std::max(a / b, b / a);
        sc.temp += delta / m + std::log(m);
        if (grads) {
          double dd_da = 0.0, dd_db = 0.0;
          if (a > b) {
            dd_da = 1.0 / b;
            dd_db = -a / (b * b);
          } else if (b > a) {
            dd_da = -b / (a * a);
            dd_db = 1.0 / a;
          }
          const double da_dd = -rotated.z() / (d * d);
          sc.gd_i.at(x, y) += cfg.cvd_w_temp * dd_da * da_dd / m;
          const double db_ds = -1.0 / (smp.value * smp.value);
          for (int c = 0; c < 4; ++c)
            sc.gd_j[smp.idx[c]] += cfg.cvd_w_temp * dd_db * db_ds * smp.w[c] / m;
          sc.gu_i.at(x, y) += cfg.cvd_w_temp * (1.0 / m - delta / (m * m));
        }
      }
    }
  });

  CvdLoss loss;
  for (size_t pi = 0; pi < pairs.size(); ++pi) {
    loss.flow += scratch[pi].flow;
    loss.temp += scratch[pi].temp;
    if (grads) {
      const auto [i, j] = pairs[pi];
      for (int q = 0; q < w * h; ++q) {
        grads->d_disp[i][q] += scratch[pi].gd_i[q];
        grads->d_disp[j][q] += scratch[pi].gd_j[q];
        grads->d_unc[i][q] += scratch[pi].gu_i[q];
      }
    }
  }
  scratch.clear();

  // ---- per-frame prior terms ----
  std::vector<FrameScratch> fsc(n);
  parallel_tasks(n, cfg.threads, [&](int f) {
    const GridD& eff = eff_disp[f];
    GridD* gd = grads ? &grads->d_disp[f] : nullptr;

    // Scale-invariant log-ratio variance against the prior.
    {
      GridD r(w, h, 0.0);
      MaskU8 rmask(w, h, 0);
      double sum = 0.0;
      int cnt = 0;
      for (int q = 0; q < w * h; ++q) {
        if (!eff_valid[f][q] || !in.prior_valid[f][q]) continue;
        r[q] = std::log(eff[q] / in.prior[f][q]);
        rmask[q] = 1;
        sum += r[q];
        ++cnt;
      }
      if (cnt > 0) {
        const double mean = sum / cnt;
        double var = 0.0;
        for (int q = 0; q < w * h; ++q)
          if (rmask[q]) var += (r[q] - mean) * (r[q] - mean);
        var /= cnt;
        fsc[f].si = var;
        if (gd) {
          for (int q = 0; q < w * h; ++q)
            if (rmask[q]) (*gd)[q] += cfg.cvd_w_prior * 2.0 * (r[q] - mean) / (cnt * eff[q]);
        }
      }
    }

    // Multi-scale gated gradient match of log disparity against the prior.
    {
      std::vector<GridD> eff_l{eff}, pri_l{in.prior[f]};
      std::vector<MaskU8> ev_l{eff_valid[f]}, pv_l{in.prior_valid[f]};
      for (int l = 1; l < 4; ++l) {
        const GridD& pe = eff_l.back();
        if (pe.width % 2 != 0 || pe.height % 2 != 0) break;
        GridD ce, cp;
        MaskU8 cev, cpv;
        avg_pool(eff_l.back(), ev_l.back(), 2, &ce, &cev);
        avg_pool(pri_l.back(), pv_l.back(), 2, &cp, &cpv);
        eff_l.push_back(std::move(ce));
        pri_l.push_back(std::move(cp));
        ev_l.push_back(std::move(cev));
        pv_l.push_back(std::move(cpv));
      }
      const int levels = static_cast<int>(eff_l.size());
      std::vector<GridD> grad_r(levels);
      for (int l = 0; l < levels; ++l) {
        const int lw = eff_l[l].width, lh = eff_l[l].height;
        GridD r(lw, lh, 0.0);
        MaskU8 joint(lw, lh, 0);
        for (int q = 0; q < lw * lh; ++q) {
          if (!ev_l[l][q] || !pv_l[l][q] || eff_l[l][q] < d_min || pri_l[l][q] <= 0.0) continue;
          r[q] = std::log(eff_l[l][q]) - std::log(pri_l[l][q]);
          joint[q] = 1;
        }
        grad_r[l] = GridD(lw, lh, 0.0);
        double s = 0.0;
        int n_contrib = 0;
        // First pass counts contributing pixels, second adds gradients with
        // the final 1/count factor.
        for (int pass = 0; pass < 2; ++pass) {
          if (pass == 1 && (n_contrib == 0 || !grads)) break;
          for (int y = 0; y < lh; ++y) {
            for (int x = 0; x < lw; ++x) {
              if (!joint.at(x, y)) continue;
              const bool has_x = x + 1 < lw && joint.at(x + 1, y);
              const bool has_y = y + 1 < lh && joint.at(x, y + 1);
              if (!has_x && !has_y) continue;
              const double gx = has_x ? r.at(x + 1, y) - r.at(x, y) : 0.0;
              const double gy = has_y ? r.at(x, y + 1) - r.at(x, y) : 0.0;
              const double amag = std::abs(gx) + std::abs(gy);
              if (pass == 0) {
                s += (1.0 - std::exp(-cfg.cvd_beta_grad * amag)) * amag;
                ++n_contrib;
              } else {
                const double e = std::exp(-cfg.cvd_beta_grad * amag);
                const double dc_da = (1.0 - e) + cfg.cvd_beta_grad * amag * e;
                const double c = dc_da / n_contrib;
                if (has_x) {
                  grad_r[l].at(x + 1, y) += c * sgn(gx);
                  grad_r[l].at(x, y) -= c * sgn(gx);
                }
                if (has_y) {
                  grad_r[l].at(x, y + 1) += c * sgn(gy);
                  grad_r[l].at(x, y) -= c * sgn(gy);
                }
              }
            }
          }
        }
        if (n_contrib > 0) fsc[f].grad += s / n_contrib;
      }
      if (gd) {
        // Chain through the pooling pyramid, coarsest first.
        GridD acc;
        for (int l = levels - 1; l >= 0; --l) {
          const int lw = eff_l[l].width, lh = eff_l[l].height;
          GridD own(lw, lh, 0.0);
          for (int q = 0; q < lw * lh; ++q)
            if (grad_r[l][q] != 0.0) own[q] = grad_r[l][q] / eff_l[l][q];
          if (l < levels - 1) {
            // Distribute the coarser accumulation onto this level's valid pixels.
            for (int cy = 0; cy < acc.height; ++cy) {
              for (int cx = 0; cx < acc.width; ++cx) {
                const double g = acc.at(cx, cy);
                if (g == 0.0) continue;
                int cnt = 0;
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx)
                    if (ev_l[l].at(2 * cx + dx, 2 * cy + dy)) ++cnt;
                if (cnt == 0) continue;
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx)
                    if (ev_l[l].at(2 * cx + dx, 2 * cy + dy))
                      own.at(2 * cx + dx, 2 * cy + dy) += g / cnt;
              }
            }
          }
          acc = std::move(own);
        }
        for (int q = 0; q < w * h; ++q) (*gd)[q] += cfg.cvd_w_prior * cfg.cvd_w_grad * acc[q];
      }
    }

    // Normal alignment against the prior surface.
    {
      Raster<Vec3> n_prior;
      MaskU8 np_def;
      surface_normals(in.prior[f], in.prior_valid[f], rays, &n_prior, &np_def);
      Raster<Vec3> gp(w, h, Vec3::Zero());
      for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
          if (!np_def.at(x, y)) continue;
          if (!eff_valid[f].at(x, y) || !eff_valid[f].at(x - 1, y) || !eff_valid[f].at(x + 1, y) ||
              !eff_valid[f].at(x, y - 1) || !eff_valid[f].at(x, y + 1))
            continue;
          const Vec3 tx =
              rays.at(x + 1, y) / eff.at(x + 1, y) - rays.at(x - 1, y) / eff.at(x - 1, y);
          const Vec3 ty =
              rays.at(x, y + 1) / eff.at(x, y + 1) - rays.at(x, y - 1) / eff.at(x, y - 1);
          const Vec3 nr = tx.cross(ty);
          const double len = nr.norm();
          if (len < 1e-12) continue;
          const Vec3 nn = nr / len;
          const Vec3& npr = n_prior.at(x, y);
          fsc[f].normal += 1.0 - nn.dot(npr);
          if (grads) {
            const Vec3 v = -(npr - nn * nn.dot(npr)) / len;
            const Vec3 dtx = ty.cross(v);
            const Vec3 dty = v.cross(tx);
            gp.at(x + 1, y) += dtx;
            gp.at(x - 1, y) -= dtx;
            gp.at(x, y + 1) += dty;
            gp.at(x, y - 1) -= dty;
          }
        }
      }
      if (gd) {
        const double wn = cfg.cvd_w_prior * cfg.cvd_w_normal;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            if (!eff_valid[f].at(x, y)) continue;
            const double d = eff.at(x, y);
            (*gd).at(x, y) += wn * gp.at(x, y).dot(-rays.at(x, y) / (d * d));
          }
      }
    }
  });

  for (int f = 0; f < n; ++f) {
    loss.si += fsc[f].si;
    loss.grad += fsc[f].grad;
    loss.normal += fsc[f].normal;
  }
  return loss;
}

namespace {

struct AdamGrid {
  GridD m, v;
  int t = 0;
  void init(int w, int h) {
    m = GridD(w, h, 0.0);
    v = GridD(w, h, 0.0);
    t = 0;
  }
  void step(double lr, const GridD& g, GridD* x) {
    ++t;
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    for (int q = 0; q < g.size(); ++q) {
      m[q] = 0.9 * m[q] + 0.1 * g[q];
      v[q] = 0.999 * v[q] + 0.001 * g[q] * g[q];
      (*x)[q] -= lr * (m[q] / c1) / (std::sqrt(v[q] / c2) + 1e-8);
    }
  }
};

struct AdamScalar {
  double m = 0.0, v = 0.0;
  int t = 0;
  void step(double lr, double g, double* x) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    *x -= lr * (m / c1) / (std::sqrt(v / c2) + 1e-8);
  }
};

}  // namespace

DepthState refine_depth(const CvdInputs& in, const RunConfig& cfg,
                        std::vector<CvdTraceRow>* trace) {
  const int n = static_cast<int>(in.prior.size());
  if (n == 0) throw ConfigError("depth refinement: empty video");
  const int w = in.k.width, h = in.k.height;
  DepthState st = init_depth_state(in, cfg.cvd_m_floor, cfg.d_min);

  auto record = [&](int step, char phase, const CvdLoss& loss) {
    if (trace) trace->push_back({step, phase, loss, loss.total(cfg)});
    if (!std::isfinite(loss.total(cfg)))
      throw NonFiniteLoss("depth refinement diverged at step " + std::to_string(step) +
                          " (phase " + std::string(1, phase) + ")");
  };

  // Warm-up: per-frame affine correction plus the noise maps.
  {
    std::vector<AdamScalar> a_scale(n), a_shift(n);
    std::vector<AdamGrid> a_unc(n);
    for (int f = 0; f < n; ++f) a_unc[f].init(w, h);
    std::vector<GridD> eff(n, GridD(w, h, 0.0));
    for (int step = 0; step < cfg.cvd_warmup_steps; ++step) {
      for (int f = 0; f < n; ++f)
        for (int q = 0; q < w * h; ++q)
          eff[f][q] = st.valid[f][q] ? st.scale[f] * st.disp[f][q] + st.shift[f] : 0.0;
      CvdGradients g;
      const CvdLoss loss = evaluate_losses(in, eff, st.valid, st.unc, cfg, &g);
      record(step, 'w', loss);
      for (int f = 0; f < n; ++f) {
        double d_scale = 0.0, d_shift = 0.0;
        for (int q = 0; q < w * h; ++q) {
          d_scale += g.d_disp[f][q] * st.disp[f][q];
          d_shift += g.d_disp[f][q];
        }
        a_scale[f].step(cfg.cvd_lr_warmup, d_scale, &st.scale[f]);
        a_shift[f].step(cfg.cvd_lr_warmup, d_shift, &st.shift[f]);
        st.scale[f] = std::max(st.scale[f], 1e-3);
        a_unc[f].step(cfg.cvd_lr_warmup, g.d_unc[f], &st.unc[f]);
        for (int q = 0; q < w * h; ++q)
          st.unc[f][q] = std::clamp(st.unc[f][q], cfg.cvd_m_floor, cfg.cvd_m_ceil);
      }
    }
    for (int f = 0; f < n; ++f) {
      for (int q = 0; q < w * h; ++q)
        if (st.valid[f][q])
          st.disp[f][q] = std::max(st.scale[f] * st.disp[f][q] + st.shift[f], cfg.d_min);
      st.scale[f] = 1.0;
      st.shift[f] = 0.0;
    }
  }

  // Main phase: free per-pixel disparity plus the noise maps. Step sizes
  // follow a cosine taper to zero; the L1 terms keep full-size gradients
  // arbitrarily close to their optima, so without the taper the iterates
  // cycle at the step-size scale instead of settling.
  {
    std::vector<AdamGrid> a_disp(n), a_unc(n);
    for (int f = 0; f < n; ++f) {
      a_disp[f].init(w, h);
      a_unc[f].init(w, h);
    }
    for (int step = 0; step < cfg.cvd_main_steps; ++step) {
      CvdGradients g;
      const CvdLoss loss = evaluate_losses(in, st.disp, st.valid, st.unc, cfg, &g);
      record(cfg.cvd_warmup_steps + step, 'm', loss);
      const double taper = 0.5 * (1.0 + std::cos(M_PI * step / cfg.cvd_main_steps));
      for (int f = 0; f < n; ++f) {
        a_disp[f].step(cfg.cvd_lr_disp * taper, g.d_disp[f], &st.disp[f]);
        a_unc[f].step(cfg.cvd_lr_unc * taper, g.d_unc[f], &st.unc[f]);
        for (int q = 0; q < w * h; ++q) {
          if (st.valid[f][q])
            st.disp[f][q] = std::max(st.disp[f][q], cfg.d_min);
          else
            st.disp[f][q] = 0.0;
          st.unc[f][q] = std::clamp(st.unc[f][q], cfg.cvd_m_floor, cfg.cvd_m_ceil);
        }
      }
    }
  }
  return st;
}

void write_loss_trace(const std::string& path, const std::vector<CvdTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "step,phase,flow,temp,si,grad,normal,total\n";
  for (const CvdTraceRow& row : trace) {
    out << row.step << ',' << row.phase << ',' << format_double(row.loss.flow) << ','
        << format_double(row.loss.temp) << ',' << format_double(row.loss.si) << ','
        << format_double(row.loss.grad) << ',' << format_double(row.loss.normal) << ','
        << format_double(row.total) << '\n';
  }
  if (!out.good()) throw IoError("failed writing " + path);
}

CvdInputs load_cvd_inputs(const Dataset& ds, const std::string& solve_dir, const RunConfig& cfg) {
  CvdInputs in;
  const int n = ds.meta().n_frames;

  const auto entries = read_trajectory(solve_dir + "/trajectory.txt");
  if (static_cast<int>(entries.size()) != n)
    throw IoError("trajectory frame count does not match the dataset");
  in.poses.resize(n);
  for (int f = 0; f < n; ++f) {
    if (entries[f].index != f) throw IoError("trajectory indices must be 0..n-1 in order");
    in.poses[f] = to_world_to_cam(entries[f]);
  }

  in.k = read_intrinsics(solve_dir + "/intrinsics_solved.txt");

  const KeyValueFile manifest = read_key_value(solve_dir + "/manifest.txt");
  const double alpha = parse_double(manifest.get("align_alpha"), "align_alpha");
  const double beta = parse_double(manifest.get("align_beta"), "align_beta");
  const double scale = parse_double(manifest.get("disp_scale"), "disp_scale");

  for (int f = 0; f < n; ++f) {
    const DisparityGrid rel = ds.mono_rel(f);
    GridD prior(rel.values.width, rel.values.height, 0.0);
    for (int q = 0; q < prior.size(); ++q)
      if (rel.valid[q]) prior[q] = std::max(alpha * rel.values[q] + beta, cfg.d_min) * scale;
    in.prior.push_back(std::move(prior));
    in.prior_valid.push_back(rel.valid);
    in.prob_static.push_back(ds.motion_full(f));
  }

  std::set<std::pair<int, int>> available(ds.meta().edges_full.begin(),
                                          ds.meta().edges_full.end());
  for (const auto& pr : select_pairs(n, cfg.cvd_pair_offsets))
    if (available.count(pr)) in.flows.emplace(pr, ds.flow_full(pr.first, pr.second));
  if (in.flows.empty()) throw ConfigError("no refinement pairs available in the dataset");
  return in;
}

}  // namespace flowba
