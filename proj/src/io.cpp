#include "flowba/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flowba {

namespace {

constexpr float kFloMagic = 202021.25f;  // "PIEH" as a float

struct File {
  FILE* fp = nullptr;
  std::string path;
  File(const std::string& p, const char* mode) : path(p) {
    fp = std::fopen(p.c_str(), mode);
    if (!fp) throw IoError("cannot open " + p + ": " + std::strerror(errno));
  }
  ~File() {
    if (fp) std::fclose(fp);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  void read(void* dst, size_t bytes) {
    if (std::fread(dst, 1, bytes, fp) != bytes) throw TruncatedFile("truncated file " + path);
  }
  void write(const void* src, size_t bytes) {
    if (std::fwrite(src, 1, bytes, fp) != bytes) throw IoError("write failed on " + path);
  }
};

void check_dims(int w, int h, const std::string& path) {
  if (w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20)
    throw DimensionMismatch("implausible dimensions " + std::to_string(w) + "x" +
                            std::to_string(h) + " in " + path);
}

}  // namespace

GridD read_pfm(const std::string& path) {
  File f(path, "rb");
  char tag[3] = {0, 0, 0};
  if (std::fscanf(f.fp, "%2s", tag) != 1 || std::strcmp(tag, "Pf") != 0)
    throw BadMagic("not a single-channel PFM: " + path);
  int w = 0, h = 0;
  double scale = 0.0;
  if (std::fscanf(f.fp, "%d %d %lf", &w, &h, &scale) != 3)
    throw TruncatedFile("bad PFM header in " + path);
  check_dims(w, h, path);
  if (scale >= 0.0) throw BadMagic("big-endian PFM not supported: " + path);
  int c = std::fgetc(f.fp);  // single whitespace byte after the header
  if (c != '\n' && c != ' ' && c != '\r') throw BadMagic("malformed PFM header in " + path);

  GridD out(w, h, 0.0);
  std::vector<float> row(static_cast<size_t>(w));
  for (int y = h - 1; y >= 0; --y) {  // PFM stores the bottom row first
    f.read(row.data(), row.size() * sizeof(float));
    for (int x = 0; x < w; ++x) out.at(x, y) = row[x];
  }
  return out;
}

void write_pfm(const std::string& path, const GridD& grid) {
  File f(path, "wb");
  std::string header = "Pf\n" + std::to_string(grid.width) + " " +
                       std::to_string(grid.height) + "\n-1.0\n";
  f.write(header.data(), header.size());
  std::vector<float> row(static_cast<size_t>(grid.width));
  for (int y = grid.height - 1; y >= 0; --y) {
    for (int x = 0; x < grid.width; ++x) row[x] = static_cast<float>(grid.at(x, y));
    f.write(row.data(), row.size() * sizeof(float));
  }
}

DisparityGrid read_disparity_pfm(const std::string& path, Level level) {
  GridD values = read_pfm(path);
  DisparityGrid disp(values.width, values.height, level);
  for (int i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v > 0.0 && std::isfinite(v)) {
      disp.values[i] = v;
      disp.valid[i] = 1;
    }
  }
  return disp;
}

void write_disparity_pfm(const std::string& path, const DisparityGrid& disp) {
  disp.check_consistent();
  GridD out(disp.width(), disp.height(), 0.0);
  for (int i = 0; i < out.size(); ++i) out[i] = disp.valid[i] ? disp.values[i] : 0.0;
  write_pfm(path, out);
}

FlowGrid read_flo(const std::string& path) {
  File f(path, "rb");
  float magic = 0;
  f.read(&magic, sizeof(float));
  if (magic != kFloMagic) throw BadMagic("bad .flo magic in " + path);
  int32_t w = 0, h = 0;
  f.read(&w, sizeof(int32_t));
  f.read(&h, sizeof(int32_t));
  check_dims(w, h, path);
  FlowGrid out(w, h, Vec2::Zero());
  std::vector<float> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    f.read(row.data(), row.size() * sizeof(float));
    for (int x = 0; x < w; ++x)
      out.at(x, y) = Vec2(x + row[2 * x], y + row[2 * x + 1]);  // displacement -> target
  }
  return out;
}

void write_flo(const std::string& path, const FlowGrid& target_coords) {
  File f(path, "wb");
  f.write(&kFloMagic, sizeof(float));
  const int32_t w = target_coords.width, h = target_coords.height;
  f.write(&w, sizeof(int32_t));
  f.write(&h, sizeof(int32_t));
  std::vector<float> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2& t = target_coords.at(x, y);
      row[2 * x] = static_cast<float>(t[0] - x);
      row[2 * x + 1] = static_cast<float>(t[1] - y);
    }
    f.write(row.data(), row.size() * sizeof(float));
  }
}

std::vector<TrajectoryEntry> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<TrajectoryEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TrajectoryEntry e;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> e.index >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw IoError("bad trajectory line " + std::to_string(lineno) + " in " + path);
    e.cam_to_world.translation = Vec3(tx, ty, tz);
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-6)
      throw IoError("unnormalized quaternion on trajectory line " + std::to_string(lineno) +
                    " in " + path);
    e.cam_to_world.rotation = q.normalized();
    out.push_back(e);
  }
  if (out.empty()) throw IoError("empty trajectory file " + path);
  return out;
}

void write_trajectory(const std::string& path, const std::vector<TrajectoryEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  for (const auto& e : entries) {
    const Vec3& t = e.cam_to_world.translation;
    const Eigen::Quaterniond& q = e.cam_to_world.rotation;
    out << e.index << " " << format_double(t.x()) << " " << format_double(t.y()) << " "
        << format_double(t.z()) << " " << format_double(q.x()) << " " << format_double(q.y())
        << " " << format_double(q.z()) << " " << format_double(q.w()) << "\n";
  }
  if (!out) throw IoError("write failed on " + path);
}

Intrinsics read_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
    throw IoError("bad intrinsics file " + path);
  check_dims(k.width, k.height, path);
  return k;
}

void write_intrinsics(const std::string& path, const Intrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << format_double(k.fx) << " " << format_double(k.fy) << " " << format_double(k.cx) << " "
      << format_double(k.cy) << " " << k.width << " " << k.height << "\n";
  if (!out) throw IoError("write failed on " + path);
}

bool KeyValueFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

const std::string& KeyValueFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw ConfigError("missing key '" + key + "'");
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return fallback;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = value;
      return;
    }
  entries.emplace_back(key, value);
}

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

KeyValueFile read_key_value(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  KeyValueFile kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("no '=' on line " + std::to_string(lineno) + " of " + path);
    kv.entries.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

void write_key_value(const std::string& path, const KeyValueFile& kv) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  for (const auto& [k, v] : kv.entries) out << k << " = " << v << "\n";
  if (!out) throw IoError("write failed on " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse '" + s + "' as number for " + what);
  }
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse '" + s + "' as integer for " + what);
  }
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("cannot parse '" + s + "' as bool for " + what);
}

}  // namespace flowba
