#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "flowba/io.hpp"

using namespace flowba;

namespace {

std::mt19937_64 rng(11);

double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::filesystem::path temp_dir() {
  static const std::filesystem::path dir = [] {
    auto p = std::filesystem::temp_directory_path() / "flowba_io_tests";
    std::filesystem::create_directories(p);
    return p;
  }();
  return dir;
}

std::string temp_file(const std::string& name) { return (temp_dir() / name).string(); }

}  // namespace

TEST_CASE("pfm rasters round-trip bitwise") {
  GridD g(13, 7, 0.0);
  for (int i = 0; i < g.size(); ++i) g[i] = uniform(-100, 100);
  // float32 storage: quantize reference values first so the comparison is exact
  for (int i = 0; i < g.size(); ++i) g[i] = static_cast<float>(g[i]);

  const std::string path = temp_file("roundtrip.pfm");
  write_pfm(path, g);
  const GridD back = read_pfm(path);
  REQUIRE(back.width == g.width);
  REQUIRE(back.height == g.height);
  for (int i = 0; i < g.size(); ++i) CHECK(back[i] == g[i]);
}

TEST_CASE("pfm stores bottom row first") {
  GridD g(2, 2, 0.0);
  g.at(0, 0) = 1.0;  // top-left in memory
  g.at(1, 0) = 2.0;
  g.at(0, 1) = 3.0;  // bottom-left in memory
  g.at(1, 1) = 4.0;
  const std::string path = temp_file("order.pfm");
  write_pfm(path, g);

  std::ifstream f(path, std::ios::binary);
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "Pf");
  std::getline(f, header);
  REQUIRE(header == "2 2");
  std::getline(f, header);
  REQUIRE(std::stod(header) == -1.0);
  float raw[4];
  f.read(reinterpret_cast<char*>(raw), sizeof raw);
  REQUIRE(f.good());
  // Bottom row (3,4) precedes top row (1,2) on disk.
  CHECK(raw[0] == 3.0f);
  CHECK(raw[1] == 4.0f);
  CHECK(raw[2] == 1.0f);
  CHECK(raw[3] == 2.0f);
}

TEST_CASE("pfm read rejects malformed files") {
  const std::string bad_magic = temp_file("bad_magic.pfm");
  {
    std::ofstream f(bad_magic, std::ios::binary);
    f << "PF\n2 2\n-1.0\n";
    const float z[8] = {};
    f.write(reinterpret_cast<const char*>(z), sizeof z);
  }
  CHECK_THROWS_AS(read_pfm(bad_magic), BadMagic);

  const std::string truncated = temp_file("truncated.pfm");
  {
    std::ofstream f(truncated, std::ios::binary);
    f << "Pf\n4 4\n-1.0\n";
    const float z[3] = {};
    f.write(reinterpret_cast<const char*>(z), sizeof z);
  }
  CHECK_THROWS_AS(read_pfm(truncated), TruncatedFile);

  const std::string empty_dims = temp_file("empty_dims.pfm");
  {
    std::ofstream f(empty_dims, std::ios::binary);
    f << "Pf\n0 0\n-1.0\n";
  }
  CHECK_THROWS_AS(read_pfm(empty_dims), DimensionMismatch);

  CHECK_THROWS_AS(read_pfm(temp_file("does_not_exist.pfm")), IoError);
}

TEST_CASE("disparity pfm maps invalid pixels to zero and back") {
  DisparityGrid d(5, 4, Level::kLow);
  for (int i = 0; i < d.values.size(); ++i) {
    d.values[i] = static_cast<float>(uniform(0.1, 2.0));
    d.valid[i] = 1;
  }
  d.valid.at(2, 1) = 0;
  d.values.at(2, 1) = 0.7;  // must not survive the trip

  const std::string path = temp_file("disp.pfm");
  write_disparity_pfm(path, d);
  const DisparityGrid back = read_disparity_pfm(path, Level::kLow);
  REQUIRE(back.values.width == 5);
  CHECK(back.valid.at(2, 1) == 0);
  CHECK(back.values.at(2, 1) == 0.0);
  for (int i = 0; i < d.values.size(); ++i)
    if (d.valid[i]) {
      CHECK(back.valid[i] == 1);
      CHECK(back.values[i] == d.values[i]);
    }
}

TEST_CASE("flo files store displacement while memory holds target coordinates") {
  FlowGrid flow(3, 2, Vec2::Zero());
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      flow.at(x, y) = Vec2(x + static_cast<float>(uniform(-5, 5)),
                           y + static_cast<float>(uniform(-5, 5)));

  const std::string path = temp_file("flow.flo");
  write_flo(path, flow);

  // Raw file: displacement = target - pixel.
  std::ifstream f(path, std::ios::binary);
  float magic;
  int32_t w, h;
  f.read(reinterpret_cast<char*>(&magic), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  REQUIRE(magic == 202021.25f);
  REQUIRE(w == 3);
  REQUIRE(h == 2);
  float uv[2];
  f.read(reinterpret_cast<char*>(uv), 8);
  CHECK(uv[0] == static_cast<float>(flow.at(0, 0).x() - 0.0));
  CHECK(uv[1] == static_cast<float>(flow.at(0, 0).y() - 0.0));

  const FlowGrid back = read_flo(path);
  REQUIRE(back.width == 3);
  REQUIRE(back.height == 2);
  for (int i = 0; i < back.size(); ++i) {
    CHECK(back[i].x() == doctest::Approx(flow[i].x()).epsilon(1e-6));
    CHECK(back[i].y() == doctest::Approx(flow[i].y()).epsilon(1e-6));
  }
}

TEST_CASE("flo read rejects malformed files") {
  const std::string bad = temp_file("bad.flo");
  {
    std::ofstream f(bad, std::ios::binary);
    const float magic = 123.0f;
    const int32_t wh[2] = {2, 2};
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(wh), 8);
  }
  CHECK_THROWS_AS(read_flo(bad), BadMagic);

  const std::string trunc = temp_file("trunc.flo");
  {
    std::ofstream f(trunc, std::ios::binary);
    const float magic = 202021.25f;
    const int32_t wh[2] = {4, 4};
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(wh), 8);
    const float z[5] = {};
    f.write(reinterpret_cast<const char*>(z), sizeof z);
  }
  CHECK_THROWS_AS(read_flo(trunc), TruncatedFile);
}

TEST_CASE("trajectory files round-trip and hold camera centers") {
  std::vector<TrajectoryEntry> entries;
  for (int i = 0; i < 5; ++i) {
    RigidTransform w2c;
    w2c.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(
        uniform(-1, 1), Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized()));
    w2c.translation = Vec3(uniform(-2, 2), uniform(-2, 2), uniform(-2, 2));
    entries.push_back(to_entry(i, w2c));
    // The stored translation is the camera center: -R^T t.
    const Vec3 center = -(w2c.rmat().transpose() * w2c.translation);
    CHECK((entries.back().cam_to_world.translation - center).norm() < 1e-12);
    CHECK(pose_geodesic_error(to_world_to_cam(entries.back()), w2c) < 1e-12);
  }

  const std::string path = temp_file("traj.txt");
  write_trajectory(path, entries);
  const auto back = read_trajectory(path);
  REQUIRE(back.size() == entries.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].index == entries[i].index);
    CHECK(pose_geodesic_error(back[i].cam_to_world, entries[i].cam_to_world) < 1e-12);
  }
}

TEST_CASE("trajectory read rejects unnormalized quaternions") {
  const std::string path = temp_file("badquat.txt");
  {
    std::ofstream f(path);
    f << "0 0 0 0 0 0 0 2.0\n";
  }
  CHECK_THROWS_AS(read_trajectory(path), IoError);
}

TEST_CASE("intrinsics files round-trip") {
  Intrinsics k;
  k.fx = 512.25;
  k.fy = 511.75;
  k.cx = 320.5;
  k.cy = 240.5;
  k.width = 640;
  k.height = 480;
  const std::string path = temp_file("intr.txt");
  write_intrinsics(path, k);
  const Intrinsics back = read_intrinsics(path);
  CHECK(back.fx == k.fx);
  CHECK(back.fy == k.fy);
  CHECK(back.cx == k.cx);
  CHECK(back.cy == k.cy);
  CHECK(back.width == k.width);
  CHECK(back.height == k.height);
}

TEST_CASE("key-value files preserve order, comments and exact doubles") {
  KeyValueFile kv;
  kv.set("alpha", format_double(1.0 / 3.0));
  kv.set("beta", "hello world");
  kv.set("gamma", format_double(-1.2345678901234567e-12));
  kv.set("alpha", format_double(2.0 / 7.0));  // overwrite keeps position

  const std::string path = temp_file("kv.txt");
  write_key_value(path, kv);
  {
    std::ofstream f(path, std::ios::app);
    f << "\n# trailing comment\n";
  }
  const KeyValueFile back = read_key_value(path);
  REQUIRE(back.entries.size() == 3);
  CHECK(back.entries[0].first == "alpha");
  CHECK(parse_double(back.get("alpha"), "alpha") == 2.0 / 7.0);
  CHECK(back.get("beta") == "hello world");
  CHECK(parse_double(back.get("gamma"), "gamma") == -1.2345678901234567e-12);
  CHECK(back.get_or("missing", "fallback") == "fallback");
  CHECK_FALSE(back.has("missing"));
  CHECK_THROWS_AS(back.get("missing"), ConfigError);
}

TEST_CASE("format_double round-trips arbitrary doubles exactly") {
  for (int t = 0; t < 1000; ++t) {
    const double v = uniform(-1, 1) * std::pow(10.0, uniform(-30, 30));
    CHECK(parse_double(format_double(v), "v") == v);
  }
}

TEST_CASE("numeric parsers reject junk") {
  CHECK_THROWS_AS(parse_double("not_a_number", "x"), ConfigError);
  CHECK_THROWS_AS(parse_int("12.5", "x"), ConfigError);
  CHECK_THROWS_AS(parse_int("", "x"), ConfigError);
  CHECK_THROWS_AS(parse_bool("maybe", "x"), ConfigError);
  CHECK(parse_bool("true", "x"));
  CHECK_FALSE(parse_bool("false", "x"));
  CHECK(parse_int("-3", "x") == -3);
}
