#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flowba/geometry.hpp"
#include "flowba/io.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// On-disk layout of one video's observations:
//   manifest.txt           frame count, resolution, low-res factor, edge lists
//   intrinsics.txt         full-resolution pinhole intrinsics
//   poses_gt.txt           optional ground-truth trajectory
//   disp_rel/%06d.pfm      full-res relative (affine-ambiguous) mono disparity
//   disp_abs/%06d.pfm      full-res metric-scale mono disparity
//   depth_gt/%06d.pfm      optional full-res ground-truth depth
//   flow/%06d_%06d.flo     low-res correspondence (displacement) per edge
//   conf/%06d_%06d.pfm     low-res per-pixel confidence per edge
//   motion/%06d.pfm        low-res probability-of-static map
//   flow_full/%06d_%06d.flo  full-res correspondences for refinement pairs
//   motion_full/%06d.pfm   full-res probability-of-static maps
struct DatasetMeta {
  int n_frames = 0;
  int lowres_factor = 8;
  Intrinsics intrinsics;  // full resolution
  std::vector<std::pair<int, int>> edges;       // low-res ordered pairs
  std::vector<std::pair<int, int>> edges_full;  // full-res ordered pairs
  bool has_gt_poses = false;
  bool has_gt_depth = false;
};

std::string frame_name(int index);  // zero-padded six digits

class Dataset {
 public:
  // Reads manifest + intrinsics and checks that every referenced file exists.
  // Throws IoError naming the first missing path.
  static Dataset open(const std::string& root);

  const DatasetMeta& meta() const { return meta_; }
  const std::string& root() const { return root_; }

  Intrinsics lowres_intrinsics() const;
  bool has_edge(int i, int j) const { return edge_set_.count({i, j}) > 0; }

  DisparityGrid mono_rel(int frame) const;   // full res
  DisparityGrid mono_abs(int frame) const;   // full res
  FlowGrid flow(int i, int j) const;         // low res, target coordinates
  GridD confidence(int i, int j) const;      // low res
  GridD motion(int frame) const;             // low res, P(static)
  FlowGrid flow_full(int i, int j) const;    // full res, target coordinates
  GridD motion_full(int frame) const;        // full res
  GridD depth_gt(int frame) const;           // full res metric depth
  std::vector<TrajectoryEntry> gt_poses() const;

  std::string path(const std::string& rel) const { return root_ + "/" + rel; }

 private:
  std::string root_;
  DatasetMeta meta_;
  std::set<std::pair<int, int>> edge_set_;
};

// Creates the directory tree and writes manifest + intrinsics; raster writers
// below fill in the per-frame/per-edge files. Used by the synthetic generator.
class DatasetWriter {
 public:
  DatasetWriter(const std::string& root, const DatasetMeta& meta);

  void write_mono_rel(int frame, const DisparityGrid& d);
  void write_mono_abs(int frame, const DisparityGrid& d);
  void write_flow(int i, int j, const FlowGrid& target);
  void write_confidence(int i, int j, const GridD& c);
  void write_motion(int frame, const GridD& m);
  void write_flow_full(int i, int j, const FlowGrid& target);
  void write_motion_full(int frame, const GridD& m);
  void write_depth_gt(int frame, const GridD& depth);
  void write_gt_poses(const std::vector<TrajectoryEntry>& entries);
  void finalize();  // writes manifest.txt last so partial outputs never validate

  const std::string& root() const { return root_; }

 private:
  std::string root_;
  DatasetMeta meta_;
};

}  // namespace flowba
