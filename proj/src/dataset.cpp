#include "flowba/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

namespace flowba {

namespace fs = std::filesystem;

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

namespace {

std::string edge_name(int i, int j) { return frame_name(i) + "_" + frame_name(j); }

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing file " + path);
}

std::pair<int, int> parse_edge(const std::string& v, const std::string& path) {
  std::istringstream ss(v);
  int i = 0, j = 0;
  if (!(ss >> i >> j)) throw IoError("bad edge entry '" + v + "' in " + path);
  return {i, j};
}

}  // namespace

Dataset Dataset::open(const std::string& root) {
  Dataset d;
  d.root_ = root;
  const std::string manifest_path = root + "/manifest.txt";
  require_file(manifest_path);
  const KeyValueFile kv = read_key_value(manifest_path);

  d.meta_.n_frames = parse_int(kv.get("n_frames"), "n_frames");
  d.meta_.lowres_factor = parse_int(kv.get("lowres_factor"), "lowres_factor");
  d.meta_.intrinsics = read_intrinsics(root + "/intrinsics.txt");
  if (d.meta_.n_frames <= 0) throw IoError("manifest n_frames must be positive in " + root);
  if (d.meta_.lowres_factor <= 0 ||
      d.meta_.intrinsics.width % d.meta_.lowres_factor != 0 ||
      d.meta_.intrinsics.height % d.meta_.lowres_factor != 0)
    throw DimensionMismatch("resolution not divisible by lowres_factor in " + manifest_path);

  for (const auto& [k, v] : kv.entries) {
    if (k == "edge") d.meta_.edges.push_back(parse_edge(v, manifest_path));
    if (k == "edge_full") d.meta_.edges_full.push_back(parse_edge(v, manifest_path));
  }
  d.meta_.has_gt_poses = fs::exists(root + "/poses_gt.txt");
  d.meta_.has_gt_depth = fs::exists(root + "/depth_gt");

  // Layout validation: every referenced file must exist.
  for (int f = 0; f < d.meta_.n_frames; ++f) {
    require_file(root + "/disp_rel/" + frame_name(f) + ".pfm");
    require_file(root + "/disp_abs/" + frame_name(f) + ".pfm");
    require_file(root + "/motion/" + frame_name(f) + ".pfm");
  }
  for (const auto& [i, j] : d.meta_.edges) {
    if (i < 0 || j < 0 || i >= d.meta_.n_frames || j >= d.meta_.n_frames || i == j)
      throw IoError("edge out of range in " + manifest_path);
    require_file(root + "/flow/" + edge_name(i, j) + ".flo");
    require_file(root + "/conf/" + edge_name(i, j) + ".pfm");
    d.edge_set_.insert({i, j});
  }
  for (const auto& [i, j] : d.meta_.edges_full) {
    require_file(root + "/flow_full/" + edge_name(i, j) + ".flo");
  }
  if (!d.meta_.edges_full.empty())
    for (int f = 0; f < d.meta_.n_frames; ++f)
      require_file(root + "/motion_full/" + frame_name(f) + ".pfm");
  return d;
}

Intrinsics Dataset::lowres_intrinsics() const {
  return meta_.intrinsics.scaled(1.0 / meta_.lowres_factor);
}

namespace {
void check_frame(int frame, int n, const char* what) {
  if (frame < 0 || frame >= n)
    throw IoError(std::string(what) + ": frame index " + std::to_string(frame) +
                  " out of range");
}
}  // namespace

DisparityGrid Dataset::mono_rel(int frame) const {
  check_frame(frame, meta_.n_frames, "mono_rel");
  return read_disparity_pfm(root_ + "/disp_rel/" + frame_name(frame) + ".pfm", Level::kFull);
}

DisparityGrid Dataset::mono_abs(int frame) const {
  check_frame(frame, meta_.n_frames, "mono_abs");
  return read_disparity_pfm(root_ + "/disp_abs/" + frame_name(frame) + ".pfm", Level::kFull);
}

FlowGrid Dataset::flow(int i, int j) const {
  if (!has_edge(i, j))
    throw IoError("flow requested for edge (" + std::to_string(i) + "," + std::to_string(j) +
                  ") not in manifest of " + root_);
  return read_flo(root_ + "/flow/" + edge_name(i, j) + ".flo");
}

GridD Dataset::confidence(int i, int j) const {
  if (!has_edge(i, j))
    throw IoError("confidence requested for edge (" + std::to_string(i) + "," +
                  std::to_string(j) + ") not in manifest of " + root_);
  return read_pfm(root_ + "/conf/" + edge_name(i, j) + ".pfm");
}

GridD Dataset::motion(int frame) const {
  check_frame(frame, meta_.n_frames, "motion");
  return read_pfm(root_ + "/motion/" + frame_name(frame) + ".pfm");
}

FlowGrid Dataset::flow_full(int i, int j) const {
  return read_flo(root_ + "/flow_full/" + edge_name(i, j) + ".flo");
}

GridD Dataset::motion_full(int frame) const {
  check_frame(frame, meta_.n_frames, "motion_full");
  return read_pfm(root_ + "/motion_full/" + frame_name(frame) + ".pfm");
}

GridD Dataset::depth_gt(int frame) const {
  check_frame(frame, meta_.n_frames, "depth_gt");
  return read_pfm(root_ + "/depth_gt/" + frame_name(frame) + ".pfm");
}

std::vector<TrajectoryEntry> Dataset::gt_poses() const {
  return read_trajectory(root_ + "/poses_gt.txt");
}

DatasetWriter::DatasetWriter(const std::string& root, const DatasetMeta& meta)
    : root_(root), meta_(meta) {
  fs::create_directories(root);
  for (const char* sub : {"disp_rel", "disp_abs", "flow", "conf", "motion"})
    fs::create_directories(root + "/" + sub);
  if (!meta.edges_full.empty())
    for (const char* sub : {"flow_full", "motion_full"})
      fs::create_directories(root + "/" + sub);
  write_intrinsics(root + "/intrinsics.txt", meta.intrinsics);
}

void DatasetWriter::write_mono_rel(int f, const DisparityGrid& d) {
  write_disparity_pfm(root_ + "/disp_rel/" + frame_name(f) + ".pfm", d);
}
void DatasetWriter::write_mono_abs(int f, const DisparityGrid& d) {
  write_disparity_pfm(root_ + "/disp_abs/" + frame_name(f) + ".pfm", d);
}
void DatasetWriter::write_flow(int i, int j, const FlowGrid& target) {
  write_flo(root_ + "/flow/" + edge_name(i, j) + ".flo", target);
}
void DatasetWriter::write_confidence(int i, int j, const GridD& c) {
  write_pfm(root_ + "/conf/" + edge_name(i, j) + ".pfm", c);
}
void DatasetWriter::write_motion(int f, const GridD& m) {
  write_pfm(root_ + "/motion/" + frame_name(f) + ".pfm", m);
}
void DatasetWriter::write_flow_full(int i, int j, const FlowGrid& target) {
  write_flo(root_ + "/flow_full/" + edge_name(i, j) + ".flo", target);
}
void DatasetWriter::write_motion_full(int f, const GridD& m) {
  write_pfm(root_ + "/motion_full/" + frame_name(f) + ".pfm", m);
}
void DatasetWriter::write_depth_gt(int f, const GridD& depth) {
  fs::create_directories(root_ + "/depth_gt");
  write_pfm(root_ + "/depth_gt/" + frame_name(f) + ".pfm", depth);
}
void DatasetWriter::write_gt_poses(const std::vector<TrajectoryEntry>& entries) {
  write_trajectory(root_ + "/poses_gt.txt", entries);
}

void DatasetWriter::finalize() {
  KeyValueFile kv;
  kv.entries.emplace_back("n_frames", std::to_string(meta_.n_frames));
  kv.entries.emplace_back("width", std::to_string(meta_.intrinsics.width));
  kv.entries.emplace_back("height", std::to_string(meta_.intrinsics.height));
  kv.entries.emplace_back("lowres_factor", std::to_string(meta_.lowres_factor));
  for (const auto& [i, j] : meta_.edges)
    kv.entries.emplace_back("edge", std::to_string(i) + " " + std::to_string(j));
  for (const auto& [i, j] : meta_.edges_full)
    kv.entries.emplace_back("edge_full", std::to_string(i) + " " + std::to_string(j));
  write_key_value(root_ + "/manifest.txt", kv);
}

}  // namespace flowba
