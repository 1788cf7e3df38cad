#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowba/geometry.hpp"
#include "flowba/raster.hpp"

namespace flowba {

// ---- PFM (single-channel float) ----
// Header "Pf\n<width> <height>\n<scale>\n", scale -1.0 (little-endian), then
// width*height float32 samples stored bottom row first (standard PFM order).
// Values <= 0 or non-finite are treated as invalid disparities by callers that
// load masks; write_pfm stores exactly what it is given.
GridD read_pfm(const std::string& path);
void write_pfm(const std::string& path, const GridD& grid);

// Convenience wrappers for disparity rasters: invalid pixels are stored as 0.
DisparityGrid read_disparity_pfm(const std::string& path, Level level);
void write_disparity_pfm(const std::string& path, const DisparityGrid& disp);

// ---- .flo (two-channel float flow) ----
// Middlebury format: float magic 202021.25 ("PIEH"), int32 width, int32 height,
// interleaved float32 (u, v) row-major top-down. Files store *displacement*;
// the in-memory FlowGrid holds target coordinates (pixel + displacement).
FlowGrid read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowGrid& target_coords);

// ---- trajectory files ----
// One line per frame: "index tx ty tz qx qy qz qw", camera-to-world, so the
// translation columns are camera centers. Internal poses are world-to-camera;
// these helpers convert at the boundary.
struct TrajectoryEntry {
  int index = 0;
  RigidTransform cam_to_world;
};
std::vector<TrajectoryEntry> read_trajectory(const std::string& path);
void write_trajectory(const std::string& path, const std::vector<TrajectoryEntry>& entries);

// world-to-camera <-> file convention
inline TrajectoryEntry to_entry(int index, const RigidTransform& world_to_cam) {
  return TrajectoryEntry{index, inverse(world_to_cam)};
}
inline RigidTransform to_world_to_cam(const TrajectoryEntry& e) { return inverse(e.cam_to_world); }

// ---- intrinsics files ----
// Single line: "fx fy cx cy width height".
Intrinsics read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const Intrinsics& k);

// ---- plain-text key-value files (configs, manifests, reports) ----
// "key = value" per line, '#' comments, blank lines ignored. Order-preserving.
struct KeyValueFile {
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;       // throws ConfigError if absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
  void set(const std::string& key, const std::string& value);  // appends or overwrites
};
KeyValueFile read_key_value(const std::string& path);
void write_key_value(const std::string& path, const KeyValueFile& kv);

// Full-precision float formatting so text round-trips are exact.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);
int parse_int(const std::string& s, const std::string& what);
bool parse_bool(const std::string& s, const std::string& what);

}  // namespace flowba
