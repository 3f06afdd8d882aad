#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mwmp/costmap.hpp"
#include "mwmp/errors.hpp"
#include "mwmp/fmm.hpp"
#include "mwmp/geometry.hpp"
#include "oracles/dijkstra_grid.hpp"

using namespace mwmp;

namespace {

std::vector<std::uint8_t> empty_grid(int w, int h) {
  return std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0);
}

CostMap uniform_map(int n, double res = 0.1) {
  return build_costmap(empty_grid(n, n), n, n, res, {0.0, 0.0}, 0.0, 0.3);
}

// Smooth random cost field built from a few gaussian bumps over the floor.
CostMap bumpy_map(int n, std::uint64_t seed, double res = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.0, n * res);
  std::uniform_real_distribution<double> amp(0.5, 2.5);
  std::uniform_real_distribution<double> width(0.3, 1.0);
  struct Bump {
    Eigen::Vector2d c;
    double a, w;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < 6; ++i)
    bumps.push_back({{pos(rng), pos(rng)}, amp(rng), width(rng)});
  Eigen::ArrayXXd cost(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const Eigen::Vector2d p = res * Eigen::Vector2d(x + 0.5, y + 0.5);
      double c = 1.0;
      for (const auto& b : bumps)
        c += b.a * std::exp(-(p - b.c).squaredNorm() / (2 * b.w * b.w));
      cost(y, x) = c;
    }
  return CostMap(n, n, res, {0.0, 0.0}, cost, empty_grid(n, n));
}

double path_cost(const CostMap& map, const Path& path) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double len = (path.waypoints[i + 1] - path.waypoints[i]).norm();
    acc += 0.5 *
           (map.cost_at(path.waypoints[i]) + map.cost_at(path.waypoints[i + 1])) *
           len;
  }
  return acc;
}

}  // namespace

TEST_CASE("cost to go is zero at the goal cell") {
  const CostMap map = uniform_map(20);
  const auto field = expand_wave(map, {1.05, 1.05});
  CHECK(field.value(field.goal_cell.x(), field.goal_cell.y()) == 0.0);
}

TEST_CASE("uniform map: field approximates euclidean distance to the goal") {
  const CostMap map = uniform_map(60);
  const Eigen::Vector2d goal(3.05, 3.05);
  const auto field = expand_wave(map, goal);
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 60; ++x) {
      const double d = (map.cell_center(x, y) - field.goal_position).norm();
      if (d < 10 * map.resolution()) continue;
      CHECK(std::abs(field.value(x, y) - d) / d < 0.05);
    }
}

TEST_CASE("cells behind a sentinel wall stay unreachable") {
  auto grid = empty_grid(20, 20);
  for (int y = 0; y < 20; ++y) grid[y * 20 + 10] = 1;
  const CostMap map = build_costmap(grid, 20, 20, 0.1, {0, 0}, 0.0, 0.3);
  const auto field = expand_wave(map, {0.55, 0.95});
  CHECK(std::isinf(field.value(15, 10)));
  CHECK(std::isfinite(field.value(5, 10)));
}

TEST_CASE("goal inside an inflated obstacle is rejected") {
  auto grid = empty_grid(15, 15);
  grid[7 * 15 + 7] = 1;
  const CostMap map = build_costmap(grid, 15, 15, 0.1, {0, 0}, 0.2, 0.3);
  CHECK_THROWS_AS(expand_wave(map, {0.75, 0.75}), InvalidGoalError);
  CHECK_THROWS_AS(expand_wave(map, {99.0, 0.1}), InvalidGoalError);
}

TEST_CASE("property: eikonal residual vanishes at frozen cells") {
  const CostMap map = bumpy_map(40, 17);
  const auto field = expand_wave(map, {2.05, 2.05});
  const double h = map.resolution();
  int checked = 0;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      if (x == field.goal_cell.x() && y == field.goal_cell.y()) continue;
      const double u = field.value(x, y);
      if (!std::isfinite(u)) continue;
      auto nb = [&](int ix, int iy) {
        if (ix < 0 || ix >= 40 || iy < 0 || iy >= 40)
          return std::numeric_limits<double>::infinity();
        return field.value(ix, iy);
      };
      const double ax = std::min(nb(x - 1, y), nb(x + 1, y));
      const double ay = std::min(nb(x, y - 1), nb(x, y + 1));
      const double gx = std::isfinite(ax) ? std::max(u - ax, 0.0) / h : 0.0;
      const double gy = std::isfinite(ay) ? std::max(u - ay, 0.0) / h : 0.0;
      const double grad = std::hypot(gx, gy);
      const double omega = map.cell_cost(x, y);
      CHECK(std::abs(grad - omega) <= 1e-6 * omega);
      ++checked;
    }
  CHECK(checked > 1000);
}

TEST_CASE("property: freeze order is non-decreasing in cost to go") {
  const CostMap map = bumpy_map(35, 23);
  const auto field = expand_wave(map, {1.55, 2.35});
  double last = 0.0;
  for (int idx : field.freeze_order) {
    const double v = field.upsilon(idx / 35, idx % 35);
    CHECK(v >= last - 1e-12);
    last = v;
  }
}

TEST_CASE("property: field value brackets the 8-connected dijkstra cost") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> cell(5, 44);
  for (int trial = 0; trial < 6; ++trial) {
    const CostMap map = bumpy_map(50, 100 + trial);
    const Eigen::Vector2i goal_cell(cell(rng), cell(rng));
    const auto field = expand_wave(map, map.cell_center(goal_cell.x(),
                                                        goal_cell.y()));
    const Eigen::ArrayXXd dij = oracle::dijkstra8_field(map, goal_cell);
    for (int i = 0; i < 10; ++i) {
      const int x = cell(rng), y = cell(rng);
      const double d =
          (map.cell_center(x, y) - field.goal_position).norm();
      if (d < 20 * map.resolution()) continue;
      const double upsilon = field.value(x, y);
      const double oracle_cost = dij(y, x);
      CHECK(upsilon <= oracle_cost * (1.0 + 1e-9));
      CHECK(upsilon >= oracle_cost / 1.15);
    }
  }
}

TEST_CASE("extraction: start at the goal returns a single waypoint") {
  const CostMap map = uniform_map(20);
  const auto field = expand_wave(map, {1.05, 1.05});
  const Path p = extract_path(field, map, {1.05, 1.05}, 0.05);
  CHECK(p.size() == 1);
}

TEST_CASE("extraction: uniform map gives a straight path") {
  const CostMap map = uniform_map(80);
  const Eigen::Vector2d goal(1.05, 4.05), start(6.05, 4.05);
  const auto field = expand_wave(map, goal);
  const Path p = extract_path(field, map, start, 0.5 * map.resolution());
  CHECK(p.size() >= 2);
  for (const auto& w : p.waypoints)
    CHECK(std::abs(w.y() - 4.05) <= map.resolution());
  // Dynamic-programming check: accumulated cost close to the field value.
  const double c = path_cost(map, p);
  CHECK(c == doctest::Approx(field.value_at(start)).epsilon(0.05));
  // Consecutive spacing within one cell diagonal.
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    CHECK((p.waypoints[i + 1] - p.waypoints[i]).norm() <=
          map.resolution() * std::numbers::sqrt2 + 1e-12);
}

TEST_CASE("extraction avoids an inflated obstacle and stays near optimal") {
  auto grid = empty_grid(60, 60);
  for (int y = 24; y <= 36; ++y)
    for (int x = 28; x <= 32; ++x) grid[y * 60 + x] = 1;
  const CostMap map = build_costmap(grid, 60, 60, 0.1, {0, 0}, 0.2, 0.4);
  const Eigen::Vector2d goal(1.05, 3.05), start(5.05, 3.05);
  const auto field = expand_wave(map, goal);
  const Path p = extract_path(field, map, start, 0.05);
  for (const auto& w : p.waypoints) {
    const Eigen::Vector2i c = map.cell_of(w);
    CHECK_FALSE(map.is_blocked(c.x(), c.y()));
  }
  const Eigen::ArrayXXd dij = oracle::dijkstra8_field(map, field.goal_cell);
  const Eigen::Vector2i sc = map.cell_of(start);
  CHECK(path_cost(map, p) <= dij(sc.y(), sc.x()) * 1.10);
}

TEST_CASE("extraction from an unreachable start throws") {
  auto grid = empty_grid(20, 20);
  for (int y = 0; y < 20; ++y) grid[y * 20 + 10] = 1;
  const CostMap map = build_costmap(grid, 20, 20, 0.1, {0, 0}, 0.0, 0.3);
  const auto field = expand_wave(map, {0.55, 0.95});
  CHECK_THROWS_AS(extract_path(field, map, {1.55, 0.95}, 0.05),
                  UnreachableError);
}

TEST_CASE("re-extraction on a cached field is bit-for-bit reproducible") {
  const CostMap map = bumpy_map(45, 77);
  const auto field = expand_wave(map, {0.85, 0.85});
  const auto field2 = expand_wave(map, {0.85, 0.85});
  const Eigen::Vector2d start(3.85, 3.45);
  const Path a = extract_path(field, map, start, 0.05);
  const Path b = extract_path(field2, map, start, 0.05);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.waypoints[i].x() == b.waypoints[i].x());
    CHECK(a.waypoints[i].y() == b.waypoints[i].y());
  }
}

TEST_CASE("enrichment fills yaw and proportional timestamps") {
  SUBCASE("second waypoint toward +x gives zero yaw") {
    Path p;
    p.waypoints = {{0, 0}, {1, 0}};
    p = enrich_path(std::move(p), 10.0);
    CHECK(p.yaw[0] == doctest::Approx(0.0));
    CHECK(p.yaw[1] == doctest::Approx(0.0));
  }
  SUBCASE("second waypoint toward +y gives pi/2") {
    Path p;
    p.waypoints = {{0, 0}, {0, 2}};
    p = enrich_path(std::move(p), 10.0);
    CHECK(p.yaw[0] == doctest::Approx(kPi / 2));
  }
  SUBCASE("three equally spaced waypoints over 160 s") {
    Path p;
    p.waypoints = {{0, 0}, {1, 0}, {2, 0}};
    p = enrich_path(std::move(p), 160.0);
    CHECK(p.timestamp[0] == doctest::Approx(0.0));
    CHECK(p.timestamp[1] == doctest::Approx(80.0));
    CHECK(p.timestamp[2] == doctest::Approx(160.0));
  }
  SUBCASE("single waypoint gets zero yaw and timestamp") {
    Path p;
    p.waypoints = {{1, 1}};
    p = enrich_path(std::move(p), 5.0);
    CHECK(p.yaw.size() == 1);
    CHECK(p.yaw[0] == 0.0);
    CHECK(p.timestamp[0] == 0.0);
  }
}

TEST_CASE("suggested horizon is path length over nominal speed") {
  Path p;
  p.waypoints = {{0, 0}, {2, 0}};
  CHECK(suggested_horizon(p, 0.05) == doctest::Approx(40.0));
}

TEST_CASE("resampling to the horizon") {
  SUBCASE("path already sampled at n dt is reproduced") {
    Path p;
    p.waypoints = {{0, 0}, {1, 0}, {2, 0}};
    p = enrich_path(std::move(p), 2.0);
    const auto seq = resample_to_horizon(p, 2, 1.0);
    REQUIRE(seq.size() == 3);
    CHECK(seq[1].x() == doctest::Approx(1.0));
    CHECK(seq[2].x() == doctest::Approx(2.0));
  }
  SUBCASE("two steps over a straight 2 m path hit the midpoint") {
    Path p;
    p.waypoints = {{0, 0}, {2, 0}};
    p = enrich_path(std::move(p), 4.0);
    const auto seq = resample_to_horizon(p, 2, 2.0);
    CHECK(seq[1].x() == doctest::Approx(1.0));
  }
  SUBCASE("yaw interpolates across the seam on the shortest arc") {
    Path p;
    p.waypoints = {{0, 0}, {1, 0}, {1.7, 0.1}};
    p = enrich_path(std::move(p), 2.0);
    p.yaw = {deg2rad(170.0), deg2rad(-170.0), deg2rad(-170.0)};
    const auto seq = resample_to_horizon(p, 2, 1.0);
    // Between 170 and -170 degrees the arc passes 180, never 0.
    const double against = std::abs(angle_difference(seq[1].z(), kPi));
    CHECK(against < deg2rad(15.0));
    CHECK(std::abs(seq[1].z()) > deg2rad(90.0));
  }
  SUBCASE("horizon mismatch is rejected") {
    Path p;
    p.waypoints = {{0, 0}, {1, 0}};
    p = enrich_path(std::move(p), 2.0);
    CHECK_THROWS_AS(resample_to_horizon(p, 3, 1.0), ParameterError);
  }
}
