#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flowba/config.hpp"
#include "flowba/dataset.hpp"
#include "flowba/geometry.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// Full-resolution refinement inputs. Poses and the disparity prior live in
// the solver's normalized units; flows are target coordinates.
struct CvdInputs {
  Intrinsics k;
  std::vector<RigidTransform> poses;  // world->cam, one per frame
  std::vector<GridD> prior;           // aligned disparity, floored and scaled
  std::vector<MaskU8> prior_valid;
  std::map<std::pair<int, int>, FlowGrid> flows;
  std::vector<GridD> prob_static;  // 1 = static; initializes the noise scale
};

// Optimized quantities. unc is a per-pixel noise scale: residuals enter the
// data terms as |r| / unc + log(unc), so unc settles near the residual level
// and grows on pixels the static model cannot explain. scale/shift are the
// warm-up affine correction, folded into disp when the main phase starts.
struct DepthState {
  std::vector<GridD> disp;
  std::vector<GridD> unc;
  std::vector<MaskU8> valid;
  std::vector<double> scale, shift;
};

// disp = prior clamped to d_min; unc = m_floor + (1 - prob_static) (1 - m_floor),
// so confidently static pixels start at m_floor and movers near 1.
DepthState init_depth_state(const CvdInputs& in, double m_floor, double d_min);

// (i, i + k) for every offset k, ascending, bounded by the frame count.
std::vector<std::pair<int, int>> select_pairs(int n_frames, const std::vector<int>& offsets);

// Raw (unweighted) term values; total applies the configured weights.
struct CvdLoss {
  double flow = 0.0;    // reprojection vs observed flow, L1, summed
  double temp = 0.0;    // depth consistency across pairs, summed
  double si = 0.0;      // per-frame log-ratio variance vs prior, summed over frames
  double grad = 0.0;    // multi-scale gated log-gradient match, mean per scale
  double normal = 0.0;  // misalignment vs prior surface normals, summed
  double total(const RunConfig& cfg) const {
    return cfg.cvd_w_flow * flow + cfg.cvd_w_temp * temp +
           cfg.cvd_w_prior * (si + cfg.cvd_w_grad * grad + cfg.cvd_w_normal * normal);
  }
};

// Gradients of total(cfg) with respect to the effective disparity grids and
// the noise scales.
struct CvdGradients {
  std::vector<GridD> d_disp;
  std::vector<GridD> d_unc;
};

// Evaluates every term at the given effective disparity. Pixels that are
// masked, fall below d_min, or project outside the target contribute nothing.
// grads may be null. Parallelizes over pairs/frames; the reduction order is
// fixed, so results do not depend on the thread count.
CvdLoss evaluate_losses(const CvdInputs& in, const std::vector<GridD>& eff_disp,
                        const std::vector<MaskU8>& valid, const std::vector<GridD>& unc,
                        const RunConfig& cfg, CvdGradients* grads);

struct CvdTraceRow {
  int step = 0;
  char phase = 'w';  // 'w' warm-up, 'm' main
  CvdLoss loss;
  double total = 0.0;
};

// Two-phase Adam refinement: warm-up optimizes per-frame scale/shift and the
// noise maps, the main phase the disparity and noise maps. Main-phase step
// sizes taper along a cosine to zero so the iterates settle instead of
// cycling on the L1 terms. Throws NonFiniteLoss as soon as the total stops
// being finite; the trace written so far survives in *trace.
DepthState refine_depth(const CvdInputs& in, const RunConfig& cfg,
                        std::vector<CvdTraceRow>* trace = nullptr);

void write_loss_trace(const std::string& path, const std::vector<CvdTraceRow>& trace);

// Assembles inputs from a dataset plus a solve output directory (trajectory,
// solved intrinsics, alignment constants from the solve manifest). Uses the
// configured pair offsets, keeping those the dataset provides.
CvdInputs load_cvd_inputs(const Dataset& ds, const std::string& solve_dir, const RunConfig& cfg);

}  // namespace flowba
